"""Simulation from truncated and censored lifetime models, and the
parametric bootstrap for likelihood ratio tests.

Draws use inversion on the cumulative hazard scale: for a window ``(a, b]``
with ``D = H(b) - H(a)`` the variate is ``H^-1(H(a) - log(1 - U(1 - e^-D)))``
which stays accurate when both ``a`` and ``b`` are deep in the tail.
Uniforms come from the counter-based Philox generator; bootstrap
replicates get their own spawned streams so the results do not depend on
how replicates are scheduled.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import (
    dataclass,
    field,
)
from logging import getLogger
import math
from typing import (
    Optional,
    Union,
)
import warnings

import numpy as np
import pandas as pd

from . import families
from .data_model import (
    Dataset,
    ExceedanceConfig,
    LifetimeRecord,
    to_exceedances,
)
from .errors import (
    ElifeNumericalError,
    ElifeValidationError,
    IoError,
    ZeroMassError,
)
from .families import ParamVector
from .nesting import comparison_edge
from .optim_fit import (
    fit,
    FitOptions,
    FitResult,
)

log = getLogger(__name__)

SCHEME_KINDS = ("none", "ltrt", "ltrc", "ditrunc")
ZERO_MASS = 1e-12
MIN_REPLICATES = 99
FAILURE_WARN_RATE = 0.01

Seed = Union[int, np.random.SeedSequence, np.random.Generator]


def generator(seed: Seed) -> np.random.Generator:
    """A Philox generator for ``seed``; generators pass through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True, eq=False)
class SamplingScheme:
    """How draws are truncated or censored.

    * ``none``: no truncation
    * ``ltrt``: truncated to ``(lower, upper]``
    * ``ltrc``: left truncated at ``lower``, right censored at ``upper``
    * ``ditrunc``: truncated to ``(lower, upper] U (lower2, upper2]``

    Bounds are scalars or arrays recycled to the sample size.
    """

    kind: str = "none"
    lower: object = 0.0
    upper: object = math.inf
    lower2: object = None
    upper2: object = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ElifeValidationError(
                "scheme must be one of {}, got {!r}".format(
                    ", ".join(SCHEME_KINDS), self.kind)
            )
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ElifeValidationError("sampling bounds contain NaN")
        if np.any(lower < 0):
            raise ElifeValidationError("lower bounds must be nonnegative")
        if np.any(np.broadcast_to(lower, np.broadcast(lower, upper).shape)
                  > upper):
            raise ElifeValidationError("lower bound exceeds upper bound")
        if self.kind == "ditrunc":
            if self.lower2 is None or self.upper2 is None:
                raise ElifeValidationError(
                    "double truncation needs lower2 and upper2"
                )
            lower2 = np.asarray(self.lower2, dtype=float)
            upper2 = np.asarray(self.upper2, dtype=float)
            if not (np.all(upper < lower2) and np.all(lower2 <= upper2)):
                raise ElifeValidationError(
                    "truncation windows must be disjoint and ordered"
                )

    def bounds(self, n):
        def fill(v, default):
            v = default if v is None else v
            return np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()

        if self.kind == "none":
            return fill(0.0, 0.0), fill(math.inf, math.inf), None, None
        second = (fill(self.lower2, 0.0), fill(self.upper2, 0.0)) \
            if self.kind == "ditrunc" else (None, None)
        return (fill(self.lower, 0.0), fill(self.upper, math.inf)) + second


@dataclass(frozen=True, eq=False)
class Sample:
    time: np.ndarray
    event: np.ndarray
    ltrunc: np.ndarray
    rtrunc: np.ndarray
    ltrunc2: Optional[np.ndarray] = None
    rtrunc2: Optional[np.ndarray] = None

    def __len__(self):
        return self.time.size

    def to_dataset(self, unit="years", provenance="simulated") -> Dataset:
        time2 = np.where(self.event == 0, math.inf, self.time)
        return Dataset.from_arrays(
            self.time, time2, self.event, self.ltrunc, self.rtrunc,
            ltrunc2=self.ltrunc2, rtrunc2=self.rtrunc2, unit=unit,
            provenance=provenance,
        )

    def to_frame(self) -> pd.DataFrame:
        columns = {
            "time": self.time,
            "event": self.event,
            "ltrunc": self.ltrunc,
            "rtrunc": self.rtrunc,
        }
        if self.ltrunc2 is not None:
            columns["ltrunc2"] = self.ltrunc2
            columns["rtrunc2"] = self.rtrunc2
        return pd.DataFrame(columns)


def _window(fam, th, lower, upper):
    """Cumulative hazards at both ends and the log window probability."""
    h_lo = families._cumhaz(fam, th, lower)
    h_hi = families._cumhaz(fam, th, upper)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mass = -h_lo + np.log(-np.expm1(-(h_hi - h_lo)))
    return h_lo, h_hi, np.where(np.isinf(h_lo), -math.inf, log_mass)


def _invert(fam, th, h_lo, h_hi, u):
    with np.errstate(invalid="ignore", over="ignore"):
        e = h_lo - np.log1p(-u * -np.expm1(-(h_hi - h_lo)))
    return families._inverse_cumhaz(fam, th, e)


def _inside(x, lower, upper):
    """Clamp round-off so draws stay strictly inside ``(lower, upper)``."""
    return np.clip(x, np.nextafter(lower, math.inf),
                   np.nextafter(upper, -math.inf))


def _check_mass(log_mass):
    if np.any(~(log_mass >= math.log(ZERO_MASS))):
        i = int(np.argmax(~(log_mass >= math.log(ZERO_MASS))))
        raise ZeroMassError(
            "truncation window {} has probability below {:g}".format(
                i, ZERO_MASS)
        )


def sample_elife(n: int, p: ParamVector,
                 scheme: Optional[SamplingScheme] = None,
                 seed: Seed = None) -> Sample:
    """Draw ``n`` lifetimes from ``p`` under ``scheme``.

    Identical seeds give identical draws.
    """
    if n < 1:
        raise ElifeValidationError("sample size must be positive")
    scheme = scheme or SamplingScheme()
    rng = generator(seed)
    fam, th = p.family, p.array
    lower, upper, lower2, upper2 = scheme.bounds(n)
    u = rng.random(n)
    event = np.ones(n, dtype=int)

    if scheme.kind == "ltrc":
        h_lo = families._cumhaz(fam, th, lower)
        h_cap = families._cumhaz(fam, th, upper)
        _check_mass(-h_lo)
        with np.errstate(divide="ignore"):
            e = h_lo - np.log1p(-u)
        censored = e >= h_cap
        time = np.where(censored, upper, 0.0)
        if np.any(~censored):
            x = families._inverse_cumhaz(fam, th, e[~censored])
            time[~censored] = _inside(x, lower[~censored],
                                      upper[~censored])
        event = np.where(censored, 0, 1)
        return Sample(time, event, lower, np.full(n, math.inf))

    h_lo, h_hi, log_mass = _window(fam, th, lower, upper)
    if scheme.kind != "ditrunc":
        _check_mass(log_mass)
        time = _inside(_invert(fam, th, h_lo, h_hi, u), lower, upper)
        return Sample(time, event, lower, upper)

    h_lo2, h_hi2, log_mass2 = _window(fam, th, lower2, upper2)
    _check_mass(np.logaddexp(log_mass, log_mass2))
    # pick the window with probability proportional to its mass
    pick_second = rng.random(n) < np.exp(
        log_mass2 - np.logaddexp(log_mass, log_mass2))
    time = np.empty(n)
    first = ~pick_second
    if np.any(first):
        time[first] = _inside(
            _invert(fam, th, h_lo[first], h_hi[first], u[first]),
            lower[first], upper[first])
    if np.any(pick_second):
        time[pick_second] = _inside(
            _invert(fam, th, h_lo2[pick_second], h_hi2[pick_second],
                    u[pick_second]),
            lower2[pick_second], upper2[pick_second])
    return Sample(time, event, lower, upper, lower2, upper2)


# bootstrap

@dataclass(frozen=True, eq=False)
class Template:
    """Sampling frame: total weight per distinct truncation window."""

    ltrunc: np.ndarray
    rtrunc: np.ndarray
    ltrunc2: np.ndarray
    rtrunc2: np.ndarray
    count: np.ndarray
    thresh: float = 0.0

    def __len__(self):
        return self.count.size


def build_template(d: Dataset) -> Template:
    """Group records by truncation window and count them.

    Weights must be whole numbers since they become sample sizes.
    """
    a = d.arrays
    frame = pd.DataFrame({
        "ltrunc": np.maximum(a.ltrunc1, 0.0),
        "rtrunc": a.rtrunc1,
        "ltrunc2": np.where(a.doubly, a.ltrunc2, -1.0),
        "rtrunc2": np.where(a.doubly, a.rtrunc2, -1.0),
        "count": a.weight,
    })
    grouped = frame.groupby(["ltrunc", "rtrunc", "ltrunc2", "rtrunc2"],
                            sort=True)["count"].sum().reset_index()
    counts = grouped["count"].to_numpy()
    if np.any(np.abs(counts - np.rint(counts)) > 1e-9):
        raise ElifeValidationError(
            "bootstrap templates need integer weights per truncation window"
        )
    return Template(
        ltrunc=grouped["ltrunc"].to_numpy(),
        rtrunc=grouped["rtrunc"].to_numpy(),
        ltrunc2=grouped["ltrunc2"].to_numpy(),
        rtrunc2=grouped["rtrunc2"].to_numpy(),
        count=np.rint(counts).astype(int),
        thresh=d.thresh,
    )


def discretize(x, lower, upper, granularity):
    """Interval ``(y, min(y + g, upper)]`` holding ``x`` with ``y`` on the
    grid of multiples of ``g``, clamped at ``lower``."""
    y = np.maximum(np.floor(x / granularity) * granularity, lower)
    return y, np.minimum(y + granularity, upper)


def simulate_template(template: Template, p: ParamVector, seed: Seed,
                      granularity: Optional[float] = 1.0) -> Dataset:
    """One synthetic dataset with the template's sampling frame.

    With a ``granularity`` the draws are reported as interval-censored
    bands and identical cells are aggregated into weights.
    """
    rng = generator(seed)
    rows = []
    for i in range(len(template)):
        n = int(template.count[i])
        if n == 0:
            continue
        doubly = template.ltrunc2[i] >= 0
        scheme = SamplingScheme(
            "ditrunc" if doubly else "ltrt", template.ltrunc[i],
            template.rtrunc[i],
            template.ltrunc2[i] if doubly else None,
            template.rtrunc2[i] if doubly else None,
        )
        s = sample_elife(n, p, scheme, rng)
        window = (template.ltrunc[i], template.rtrunc[i])
        second = (template.ltrunc2[i], template.rtrunc2[i]) if doubly \
            else (None, None)
        if granularity is None:
            for t in s.time:
                rows.append((t, t, 1) + window + second + (1.0,))
            continue
        in_second = s.time > template.rtrunc[i]
        hi = np.where(in_second, template.rtrunc2[i], template.rtrunc[i])
        lo = np.where(in_second, template.ltrunc2[i], template.ltrunc[i])
        y, z = discretize(s.time, lo, hi, granularity)
        cells, counts = np.unique(np.stack((y, z)), axis=1,
                                  return_counts=True)
        for (left, right), c in zip(cells.T, counts):
            rows.append((left, right, 3) + window + second + (float(c),))
    records = tuple(
        LifetimeRecord(time1=float(r[0]), time2=float(r[1]), event=r[2],
                       ltrunc1=float(r[3]), rtrunc1=float(r[4]),
                       ltrunc2=None if r[5] is None else float(r[5]),
                       rtrunc2=None if r[6] is None else float(r[6]),
                       weight=r[7])
        for r in rows
    )
    return Dataset(records, provenance="bootstrap", thresh=template.thresh)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    null: str
    alt: str
    statistic: float
    pvalue: float
    replicates: np.ndarray = field(repr=False)
    B: int = 0
    seed: Optional[int] = None

    @property
    def failed(self):
        return np.isnan(self.replicates)

    @property
    def n_failed(self):
        return int(np.sum(self.failed))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "replicate": np.arange(1, self.replicates.size + 1),
            "statistic": self.replicates,
            "failed": self.failed,
        })

    def to_csv(self, path):
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.10g")
        except OSError as e:
            raise IoError("cannot write {}: {}".format(path, e)) from e

    def to_dict(self):
        return {
            "null": self.null,
            "alt": self.alt,
            "statistic": self.statistic,
            "pvalue": self.pvalue,
            "B": self.B,
            "n_failed": self.n_failed,
            "seed": self.seed,
        }


def _statistic(fit0, fit1):
    return max(0.0, 2.0 * (fit1.loglik - fit0.loglik))


def _replicate(args):
    (template, p0, alt, start1, seed_seq, granularity, options) = args
    try:
        d = simulate_template(template, p0, seed_seq, granularity)
        f0 = fit(d, p0.family, starts=[p0], options=options)
        f1 = fit(d, alt, starts=[start1], options=options)
    except (ElifeNumericalError, ElifeValidationError) as e:
        log.debug("bootstrap replicate failed: %s", e)
        return math.nan
    return _statistic(f0, f1)


def bootstrap_pvalue(statistic, replicates):
    """``(1 + #{T_b >= T}) / (B_ok + 1)`` over successful replicates."""
    ok = replicates[~np.isnan(replicates)]
    return float((1 + np.sum(ok >= statistic)) / (ok.size + 1))


def bootstrap_lrt(d: Dataset, null, alt,
                  cfg: Optional[ExceedanceConfig] = None,
                  B: int = 999, seed: Seed = None,
                  granularity: Optional[float] = 1.0, jobs: int = 1,
                  fit0: Optional[FitResult] = None,
                  fit1: Optional[FitResult] = None) -> BootstrapResult:
    """Parametric bootstrap of the deviance between nested families.

    The sampling frame (truncation windows and counts) is kept fixed; new
    lifetimes are drawn from the fitted null model, binned to
    ``granularity`` and both families refitted. Pairs that cannot be
    compared raise before anything is fitted.
    """
    if B < MIN_REPLICATES:
        raise ElifeValidationError(
            "need at least {} bootstrap replicates".format(MIN_REPLICATES)
        )
    if seed is None:
        raise ElifeValidationError("the bootstrap needs a seed")
    comparison_edge(null, alt)
    if cfg is not None:
        d = to_exceedances(d, cfg)
    fit0 = fit0 or fit(d, null)
    fit1 = fit1 or fit(d, alt)
    statistic = _statistic(fit0, fit1)
    template = build_template(d)
    options = FitOptions(n_jitter=0, compute_se=False, polish=False)
    root = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    tasks = [
        (template, fit0.estimates, fit1.family, fit1.estimates, child,
         granularity, options)
        for child in root.spawn(B)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            replicates = np.array(list(executor.map(_replicate, tasks,
                                                    chunksize=8)))
    else:
        replicates = np.array([_replicate(t) for t in tasks])
    result = BootstrapResult(
        null=fit0.family.name,
        alt=fit1.family.name,
        statistic=statistic,
        pvalue=bootstrap_pvalue(statistic, replicates),
        replicates=replicates,
        B=B,
        seed=seed if isinstance(seed, int) else None,
    )
    if result.n_failed > FAILURE_WARN_RATE * B:
        msg = "{} of {} bootstrap replicates failed".format(result.n_failed,
                                                            B)
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    log.info("bootstrap %s vs %s: statistic %.4f, p-value %.4g", result.null,
             result.alt, statistic, result.pvalue)
    return result
