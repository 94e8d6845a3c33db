"""Nonparametric maximum likelihood estimation under censoring and truncation.

Endpoints are handled as keys ``(value, side)`` where ``side`` is -1 for
"just below", 0 for the value itself and +1 for "just above". A censored
record ``(L, R]`` has censoring set ``[(L, +1), (R, 0)]``, an observed
failure ``[(t, 0), (t, 0)]`` and a truncation window ``[(V, 0), (U, 0)]``.
The candidate support is the set of innermost intervals: a left key
immediately followed by a right key once all keys are sorted. Truncated
data also contribute the endpoints of the complement of each window, so
``(U, +1)`` joins the left keys and ``(V, -1)`` the right keys.

Membership of intervals in censoring and truncation sets is kept as index
ranges; all sums over a record's set are differences of cumulative sums.
"""

import collections
from dataclasses import (
    dataclass,
    field,
    replace,
)
from logging import getLogger
import math
from typing import (
    Optional,
    Tuple,
)

import numpy as np

from .data_model import (
    Dataset,
    ExceedanceConfig,
    to_exceedances,
)
from .errors import (
    DomainError,
    ElifeValidationError,
    EmptyIntervalSetError,
    MaxIterError,
    NonConvergenceError,
)

log = getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAXIT = 100_000
MASS_FLOOR = 1e-12
VANISHING_MASS = 1e-6
KKT_TOL = 1e-6
ACCELERATE_EVERY = 100
CONVENTIONS = ("left", "right", "interpolate")

TIE_TOL = math.sqrt(np.finfo(float).eps)


MembershipMatrix = collections.namedtuple("MembershipMatrix", [
    "lo", "hi", "blo", "bhi", "blo2", "bhi2",
])


@dataclass(frozen=True, eq=False)
class TurnbullIntervals:
    a: np.ndarray
    b: np.ndarray
    left_open: np.ndarray
    membership: MembershipMatrix = field(repr=False)

    def __len__(self):
        return self.a.size

    def as_pairs(self):
        return [(float(a), float(b)) for a, b in zip(self.a, self.b)]


@dataclass(frozen=True)
class KKTReport:
    passed: bool
    multiplier: float
    violations: Tuple[Tuple[int, float], ...]
    max_violation: float

    def to_dict(self):
        return {
            "passed": self.passed,
            "multiplier": self.multiplier,
            "violations": [list(v) for v in self.violations],
            "max_violation": self.max_violation,
        }


@dataclass(frozen=True, eq=False)
class StepCDF:
    intervals: TurnbullIntervals
    p: np.ndarray
    convention: str = "right"
    loglik: float = math.nan
    n_iter: int = 0
    converged: bool = True
    kkt: Optional[KKTReport] = None
    thresh: float = 0.0

    @property
    def a(self):
        return self.intervals.a

    @property
    def b(self):
        return self.intervals.b

    def __call__(self, t, convention=None):
        return eval_cdf(self, t, convention or self.convention)

    def survival(self, t):
        return 1.0 - eval_cdf(self, t, "right")

    def cum_hazard(self, t):
        """Empirical cumulative hazard ``-log S(t)``."""
        s = np.asarray(self.survival(t), dtype=float)
        with np.errstate(divide="ignore"):
            out = -np.log(np.clip(s, 0.0, 1.0))
        return float(out) if np.ndim(t) == 0 else out

    def to_dict(self):
        return {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "p": self.p.tolist(),
            "convention": self.convention,
            "thresh": self.thresh,
            "loglik": self.loglik,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "kkt": None if self.kkt is None else self.kkt.to_dict(),
        }


def _clusters(values):
    """Merge values closer than TIE_TOL (relative above 1) and return the
    ordered scale with an index function onto it."""
    finite = np.unique(values[np.isfinite(values)])
    if finite.size:
        gaps = np.diff(finite) > TIE_TOL * np.maximum(1.0,
                                                      np.abs(finite[1:]))
        ids = np.concatenate(([0], np.cumsum(gaps)))
        reps = finite[np.concatenate(([True], gaps))]
    else:
        ids = np.zeros(0, dtype=int)
        reps = finite
    scale = np.concatenate(([-math.inf], reps, [math.inf]))

    def index(v):
        v = np.asarray(v, dtype=float)
        out = np.where(v > 0, reps.size + 1, 0).astype(int)
        fin = np.isfinite(v)
        out[fin] = ids[np.searchsorted(finite, v[fin])] + 1
        return out

    return scale, index


def _ranges(ac, bc, lo_codes, hi_codes):
    lo = np.searchsorted(ac, lo_codes, side="left")
    hi = np.searchsorted(bc, hi_codes, side="right") - 1
    empty = lo > hi
    return np.where(empty, 0, lo), np.where(empty, -1, hi)


def turnbull_intervals(d: Dataset, amend=True) -> TurnbullIntervals:
    """Innermost intervals of ``d`` with their membership ranges.

    ``amend=False`` leaves out the truncation endpoints, which is only
    correct for untruncated data.
    """
    a = d.arrays
    dbl = a.doubly
    values = np.concatenate((a.time1, a.time2, a.ltrunc1, a.rtrunc1,
                             a.ltrunc2[dbl], a.rtrunc2[dbl]))
    scale, index = _clusters(values)

    def code(v, side):
        return 3 * index(v) + side + 1

    exact = a.event == 1
    left = np.where(exact, code(a.time1, 0), code(a.time1, 1))
    # left-censored failures start no earlier than their truncation window
    lifted = (a.event == 2) & (a.ltrunc1 > a.time1)
    left = np.where(lifted, code(a.ltrunc1, 0), left)
    right = code(a.time2, 0)
    wl1, wr1 = code(a.ltrunc1, 0), code(a.rtrunc1, 0)
    wl2 = code(np.where(dbl, a.ltrunc2, 0.0), 0)
    wr2 = code(np.where(dbl, a.rtrunc2, 0.0), 0)

    lefts, rights = [left], [right]
    if amend:
        for lo, hi in ((a.ltrunc1, a.rtrunc1), (a.ltrunc2[dbl],
                                                  a.rtrunc2[dbl])):
            rights.append(code(lo[np.isfinite(lo)], -1))
            lefts.append(code(hi[np.isfinite(hi)], 1))
    lc = np.unique(np.concatenate(lefts))
    rc = np.unique(np.concatenate(rights))
    codes = np.concatenate((lc, rc))
    kinds = np.concatenate((np.zeros(lc.size, dtype=int),
                            np.ones(rc.size, dtype=int)))
    # ties put the left key first so that [t, t] is a singleton
    order = np.lexsort((kinds, codes))
    codes, kinds = codes[order], kinds[order]
    starts = (kinds[:-1] == 0) & (kinds[1:] == 1)
    ac, bc = codes[:-1][starts], codes[1:][starts]

    lo, hi = _ranges(ac, bc, left, right)
    cover = np.cumsum(np.bincount(lo, minlength=ac.size + 1)[:ac.size]
                      - np.bincount(hi + 1, minlength=ac.size + 1)[:ac.size])
    keep = cover > 0
    ac, bc = ac[keep], bc[keep]
    if ac.size == 0:
        raise EmptyIntervalSetError("no admissible Turnbull interval")
    lo, hi = _ranges(ac, bc, left, right)
    if np.any(lo > hi):
        i = int(np.argmax(lo > hi))
        raise EmptyIntervalSetError(
            "record {} has no admissible interval".format(i)
        )
    blo, bhi = _ranges(ac, bc, wl1, wr1)
    blo2, bhi2 = _ranges(ac, bc, wl2, wr2)
    blo2 = np.where(dbl, blo2, 0)
    bhi2 = np.where(dbl, bhi2, -1)
    log.debug("%d Turnbull intervals for %d records", ac.size, len(d))
    return TurnbullIntervals(
        a=scale[ac // 3],
        b=scale[bc // 3],
        left_open=(ac % 3) == 2,
        membership=MembershipMatrix(lo, hi, blo, bhi, blo2, bhi2),
    )


class _Problem:
    """Range-encoded log likelihood of interval masses."""

    def __init__(self, d, iv):
        mm = iv.membership
        if mm.lo.size != len(d):
            raise ElifeValidationError(
                "intervals were built for {} records, got {}".format(
                    mm.lo.size, len(d))
            )
        self.m = len(iv)
        self.w = d.arrays.weight
        self.total = float(np.sum(self.w))
        self.mm = mm
        self.second = mm.bhi2 >= mm.blo2

    @staticmethod
    def _sums(cs, lo, hi):
        return np.where(hi >= lo, cs[hi + 1] - cs[lo], 0.0)

    def _spread(self, lo, hi, values):
        values = np.where(hi >= lo, values, 0.0)
        diff = (np.bincount(lo, weights=values, minlength=self.m + 1)
                - np.bincount(hi + 1, weights=values, minlength=self.m + 1))
        return np.cumsum(diff[:self.m])

    def probabilities(self, p):
        mm = self.mm
        cs = np.concatenate(([0.0], np.cumsum(p)))
        pa = self._sums(cs, mm.lo, mm.hi)
        pb = self._sums(cs, mm.blo, mm.bhi) + self._sums(cs, mm.blo2,
                                                          mm.bhi2)
        return pa, pb

    def loglik(self, p):
        pa, pb = self.probabilities(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = float(np.sum(self.w * (np.log(pa) - np.log(pb))))
        return value if math.isfinite(value) else -math.inf

    def gradient(self, p):
        mm = self.mm
        pa, pb = self.probabilities(p)
        ra, rb = self.w / pa, self.w / pb
        inside = (self._spread(mm.blo, mm.bhi, rb)
                  + self._spread(mm.blo2, mm.bhi2, rb))
        return self._spread(mm.lo, mm.hi, ra) - inside

    def step(self, p):
        """One self-consistency update; returns the new masses and the log
        likelihood at ``p``."""
        mm = self.mm
        pa, pb = self.probabilities(p)
        with np.errstate(divide="ignore"):
            ll = float(np.sum(self.w * (np.log(pa) - np.log(pb))))
        ra, rb = self.w / pa, self.w / pb
        observed = self._spread(mm.lo, mm.hi, ra)
        inside = (self._spread(mm.blo, mm.bhi, rb)
                  + self._spread(mm.blo2, mm.bhi2, rb))
        ghost = np.sum(rb) - inside
        new = p * (observed + ghost)
        return new / np.sum(new), ll


def _drop_vanishing(prob, p):
    """Zero the small masses whose derivative stays below the multiplier,
    unless that lowers the log likelihood."""
    with np.errstate(divide="ignore", invalid="ignore"):
        g = prob.gradient(p) / prob.total
    if not np.all(np.isfinite(g)):
        return p
    excess = g - float(np.dot(p, g))
    drop = (p > 0) & (p < VANISHING_MASS) & (excess < -KKT_TOL)
    if not np.any(drop):
        return p
    q = np.where(drop, 0.0, p)
    q = q / np.sum(q)
    if prob.loglik(q) < prob.loglik(p):
        return p
    log.debug("zeroed %d vanishing masses", int(np.sum(drop)))
    return q


def em_fit(d: Dataset, iv: TurnbullIntervals, tol=DEFAULT_TOL,
           maxit=DEFAULT_MAXIT) -> StepCDF:
    """Self-consistency iterations for the interval masses.

    Stops when the largest mass change drops below ``tol``. Every
    ACCELERATE_EVERY iterations a doubled step is tried and kept only if it
    raises the log likelihood.
    """
    prob = _Problem(d, iv)
    p = np.full(prob.m, 1.0 / prob.m)
    previous = -math.inf
    converged = False
    iteration = 0
    for iteration in range(1, maxit + 1):
        new, ll = prob.step(p)
        if ll < previous - 1e-10 * max(1.0, abs(ll)):
            raise NonConvergenceError(
                "EM decreased the log likelihood at iteration {} ({} < {})"
                .format(iteration, ll, previous)
            )
        previous = ll
        if iteration % ACCELERATE_EVERY == 0:
            candidate = np.maximum(p + 2.0 * (new - p), 0.0)
            candidate /= np.sum(candidate)
            if prob.loglik(candidate) > prob.loglik(new):
                new = candidate
        change = float(np.max(np.abs(new - p)))
        p = new
        if change < tol:
            converged = True
            break
    p = np.where(p < MASS_FLOOR, 0.0, p)
    p = _drop_vanishing(prob, p / np.sum(p))
    scdf = StepCDF(iv, p, loglik=prob.loglik(p), n_iter=iteration,
                   converged=converged, thresh=d.thresh)
    log.debug("EM stopped after %d iterations, loglik %.9f", iteration,
              scdf.loglik)
    if not converged:
        report = kkt_check(scdf, d)
        if not report.passed:
            raise MaxIterError(
                "EM did not converge in {} iterations and the optimality "
                "check failed".format(maxit)
            )
        log.warning("EM hit maxit=%d but the optimality check passed", maxit)
        scdf = replace(scdf, kkt=report)
    return scdf


def kkt_check(scdf: StepCDF, d: Dataset, tol=KKT_TOL) -> KKTReport:
    """Karush-Kuhn-Tucker conditions on the simplex.

    Gradients are divided by the total weight. Coordinates with positive
    mass must match the multiplier and empty ones may not exceed it.
    """
    prob = _Problem(d, scdf.intervals)
    g = prob.gradient(scdf.p) / prob.total
    multiplier = float(np.dot(scdf.p, g))
    excess = g - multiplier
    positive = scdf.p > 0
    bad = np.where(positive, np.abs(excess), excess)
    violations = tuple((int(j), float(excess[j]))
                       for j in np.flatnonzero(bad > tol))
    report = KKTReport(
        passed=not violations,
        multiplier=multiplier,
        violations=violations,
        max_violation=float(max(np.max(bad), 0.0)),
    )
    if violations:
        log.warning("optimality check failed at %d intervals", len(violations))
    return report


def eval_cdf(scdf: StepCDF, t, convention="right"):
    """Distribution function at ``t``; inside an interval the mass is put at
    its left end (``right``), its right end (``left``) or spread
    uniformly (``interpolate``)."""
    if convention not in CONVENTIONS:
        raise DomainError("convention must be one of {}, got {!r}".format(
            ", ".join(CONVENTIONS), convention))
    t_arr = np.asarray(t, dtype=float)
    a, b, p = scdf.a, scdf.b, scdf.p
    cum = np.concatenate(([0.0], np.cumsum(p)))
    k = np.searchsorted(a, t_arr, side="right") - 1
    kk = np.clip(k, 0, None)
    done = t_arr >= b[kk]
    if convention == "right":
        frac = np.ones_like(t_arr)
    elif convention == "left":
        frac = np.zeros_like(t_arr)
    else:
        width = b[kk] - a[kk]
        ok = np.isfinite(width) & (width > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(ok, (t_arr - a[kk]) / np.where(ok, width, 1.0),
                            0.0)
    frac = np.where(done, 1.0, frac)
    out = np.where(k < 0, 0.0, cum[kk] + p[kk] * frac)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(t) == 0 else out


def npmle(d: Dataset, cfg: Optional[ExceedanceConfig] = None,
          tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT, amend=True) -> StepCDF:
    """Intervals, EM and optimality check in one call."""
    if cfg is not None:
        d = to_exceedances(d, cfg)
    iv = turnbull_intervals(d, amend=amend)
    scdf = em_fit(d, iv, tol=tol, maxit=maxit)
    report = scdf.kkt or kkt_check(scdf, d)
    log.info("NPMLE on %d intervals, loglik %.6f, optimality %s", len(iv),
             scdf.loglik, "passed" if report.passed else "failed")
    return replace(scdf, kkt=report)
