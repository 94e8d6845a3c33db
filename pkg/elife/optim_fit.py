"""Maximum likelihood fitting with multiple starts and boundary handling.

The search runs on unconstrained coordinates: ``log`` for parameters with an
open lower bound, ``softplus`` for parameters that may sit on their bound
(which is then tried separately as a fixed value). Each start runs
Nelder-Mead followed by BFGS; the best start is polished with Newton steps
on a Richardson-extrapolated Hessian.
"""

from dataclasses import (
    dataclass,
    field,
)
from logging import getLogger
import math
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)
import warnings

import numdifftools as nd
import numpy as np
from scipy import optimize

from . import nesting
from .data_model import (
    Dataset,
    ExceedanceConfig,
    to_exceedances,
)
from .errors import (
    ConstraintError,
    NonConvergenceError,
    NoExceedancesError,
    SingularInformationError,
)
from .families import (
    admissible,
    Family,
    get_family,
    MAKEHAM,
    ParamVector,
)
from .likelihood import (
    DEFAULT_FLOOR,
    LoglikOptions,
    loglik_function,
)

log = getLogger(__name__)

JITTER_SEED = 20230411
JITTER_SCALE = 0.2
BOUNDARY_TOL = 1e-6
NU_FLOOR = 1e-8
HESSIAN_STEP = 1e-5


@dataclass(frozen=True)
class FitOptions:
    n_jitter: int = 5
    nested_starts: bool = True
    polish: bool = True
    compute_se: bool = True
    boundary_tol: float = BOUNDARY_TOL
    ftol: float = 1e-10
    gtol: float = 1e-6
    max_iter: int = 4000
    floor: float = DEFAULT_FLOOR


@dataclass(frozen=True)
class FitResult:
    family: Family
    thresh: float
    estimates: ParamVector
    se: Dict[str, Optional[float]]
    loglik: float
    n_exceedances: float
    converged: bool
    n_starts: int
    boundary: Dict[str, bool]
    vcov: Optional[np.ndarray] = field(default=None, repr=False,
                                       compare=False)
    data: Optional[Dataset] = field(default=None, repr=False, compare=False)

    @property
    def deviance(self):
        return -2.0 * self.loglik

    @property
    def n_params(self):
        return self.family.n_params

    @property
    def free_params(self):
        """Names of parameters with a variance estimate, in order."""
        return tuple(n for n in self.family.param_names
                     if self.se.get(n) is not None)

    def summary(self):
        lines = [
            "Model: {} distribution.".format(self.family.name),
            "Threshold: {:g}".format(self.thresh),
            "Number of exceedances: {:g}".format(self.n_exceedances),
            "",
            "Estimates",
        ]
        names = self.family.param_names
        width = max(len(n) for n in names)
        for name, value in zip(names, self.estimates.values):
            se = self.se.get(name)
            lines.append("  {:<{w}}  {:>10.4f}  {}".format(
                name, value,
                "({:.4f})".format(se) if se is not None else
                "(boundary)" if self.boundary.get(name) else "(n/a)",
                w=width))
        lines += [
            "",
            "Log-likelihood: {:.3f}".format(self.loglik),
            "Convergence: {}".format(str(self.converged).upper()),
        ]
        return "\n".join(lines)

    def to_dict(self):
        return {
            "family": self.family.name,
            "thresh": self.thresh,
            "thresholds": list(self.family.thresholds) or None,
            "estimates": self.estimates.as_dict(),
            "se": dict(self.se),
            "loglik": self.loglik,
            "deviance": self.deviance,
            "n_exceedances": self.n_exceedances,
            "converged": self.converged,
            "n_starts": self.n_starts,
            "boundary": dict(self.boundary),
        }


# numerical derivatives in coordinates scaled by max(1, |theta_j|)

def _scaled(f, theta):
    theta = np.asarray(theta, dtype=float)
    scale = np.maximum(1.0, np.abs(theta))

    def g(u):
        return f(theta + scale * u)

    return g, scale


def hessian(f, theta, step=HESSIAN_STEP):
    g, scale = _scaled(f, theta)
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h = nd.Hessian(g, step=step, method="central")(np.zeros(len(scale)))
    h = np.atleast_2d(h) / np.outer(scale, scale)
    return 0.5 * (h + h.T)


def gradient(f, theta, step=HESSIAN_STEP):
    g, scale = _scaled(f, theta)
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grad = nd.Gradient(g, step=step, method="central")(
            np.zeros(len(scale)))
    return np.atleast_1d(grad) / scale


def invert_information(h):
    """Covariance from a log-likelihood Hessian; raises when not negative
    definite."""
    info = -np.asarray(h, dtype=float)
    if not np.all(np.isfinite(info)):
        raise SingularInformationError("Hessian has non-finite entries")
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise SingularInformationError(
            "observed information is not positive definite"
        ) from None
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


def moment_start(d: Dataset, fam: Family) -> Tuple[float, ...]:
    """Crude starting values matching the mean exceedance."""
    a = d.arrays
    mid = np.select(
        [a.event == 1, a.event == 3, a.event == 0],
        [a.time1, 0.5 * (a.time1 + a.time2), a.time1],
        0.5 * a.time2,
    )
    m = float(np.sum(a.weight * mid) / np.sum(a.weight))
    m = m if m > 0 else 1.0
    starts = {
        "exp": (m,),
        "gomp": (m, 0.1),
        "gp": (m, 0.05),
        "weibull": (m, 1.0),
        "extgp": (m, 0.1, 0.05),
        "extweibull": (m, 1.0, 0.05),
        "perks": (1.0 / m, 0.1 / m),
        "beard": (1.0 / m, 0.1 / m, 0.5),
        "gompmake": (0.1 / m, m, 0.1),
        "perksmake": (0.1 / m, 1.0 / m, 0.1 / m),
        "beardmake": (0.1 / m, 1.0 / m, 0.1 / m, 0.5),
    }
    if fam.name == "gppiece":
        return (m,) + (0.05,) * (fam.n_params - 1)
    return starts[fam.name]


def search_lower(fam, j):
    """Smallest value the optimizer gives parameter ``j`` of ``fam``."""
    if fam.name in MAKEHAM and fam.param_names[j] == "nu":
        return NU_FLOOR
    c = fam.constraints[j]
    return c.fit_lower if c.fit_lower is not None else c.lower


class _Transform:
    """Map between free parameters and unconstrained search coordinates."""

    def __init__(self, fam, free):
        self.kinds, self.lowers = [], []
        for j in free:
            c = fam.constraints[j]
            lower = search_lower(fam, j)
            self.lowers.append(lower)
            if lower == -math.inf:
                self.kinds.append("id")
            elif c.can_hit_boundary:
                self.kinds.append("softplus")
            else:
                self.kinds.append("log")

    def to_theta(self, z):
        out = np.empty(len(z))
        for i, (kind, lower) in enumerate(zip(self.kinds, self.lowers)):
            if kind == "id":
                out[i] = z[i]
            elif kind == "log":
                out[i] = lower + math.exp(min(z[i], 700.0))
            else:
                out[i] = lower + np.logaddexp(0.0, z[i])
        return out

    def to_z(self, theta):
        out = np.empty(len(theta))
        for i, (kind, lower) in enumerate(zip(self.kinds, self.lowers)):
            y = theta[i] - lower
            if kind == "id":
                out[i] = theta[i]
            elif kind == "log":
                out[i] = math.log(y)
            else:
                out[i] = y if y > 30 else math.log(math.expm1(y))
        return out


class _Fitter:

    def __init__(self, d, fam, options, cache=None):
        self.d = d
        self.fam = fam
        self.options = options
        self.f = loglik_function(d, fam, LoglikOptions(floor=options.floor))
        self.cache = {} if cache is None else cache
        self.n_searches = 0
        self.moment = np.array(moment_start(d, fam), dtype=float)

    def _effective_lower(self, j):
        return search_lower(self.fam, j)

    def _boundary_indices(self):
        return [j for j, c in enumerate(self.fam.constraints)
                if c.can_hit_boundary]

    def _search(self, theta0, fixed):
        """Local search from ``theta0`` with ``fixed`` parameters held."""
        self.n_searches += 1
        k = self.fam.n_params
        free = [j for j in range(k) if j not in fixed]
        base = np.array(theta0, dtype=float)
        for j, v in fixed.items():
            base[j] = v
        if not free:
            ll = self.f(base)
            return (base, ll) if math.isfinite(ll) else None
        tr = _Transform(self.fam, free)
        for i, j in enumerate(free):
            if base[j] <= tr.lowers[i]:
                base[j] = tr.lowers[i] + 0.1 * max(abs(self.moment[j]),
                                                   1e-3)

        def assemble(z):
            theta = base.copy()
            theta[free] = tr.to_theta(z)
            return theta

        def objective(z):
            ll = self.f(assemble(z))
            return -ll if math.isfinite(ll) else math.inf

        try:
            z0 = tr.to_z(base[free])
        except (ValueError, OverflowError):
            return None
        if not math.isfinite(objective(z0)):
            return None
        n = len(free)
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            best = optimize.minimize(
                objective, z0, method="Nelder-Mead",
                options={"xatol": 1e-8, "fatol": 1e-10,
                         "maxiter": self.options.max_iter * n,
                         "maxfev": self.options.max_iter * n,
                         "adaptive": n > 2},
            )
            try:
                quasi = optimize.minimize(
                    objective, best.x, method="BFGS", jac="3-point",
                    options={"gtol": 1e-9, "maxiter": 200 * n},
                )
                if np.isfinite(quasi.fun) and quasi.fun <= best.fun:
                    best = quasi
            except (ValueError, FloatingPointError, OverflowError):
                pass
        if not np.isfinite(best.fun):
            return None
        theta = assemble(best.x)
        return theta, -float(best.fun)

    def _polish(self, theta, ll):
        """Newton steps on the free interior parameters."""
        idx = [j for j in range(self.fam.n_params)
               if theta[j] - self._effective_lower(j) > 1e-3 * max(
                   1.0, abs(theta[j]))]
        if not idx:
            return theta, ll

        def sub(v):
            full = theta.copy()
            full[idx] = v
            return self.f(full)

        for _ in range(3):
            v = theta[idx]
            try:
                h = hessian(sub, v)
                g = gradient(sub, v)
                step = np.linalg.solve(h, g)
            except (np.linalg.LinAlgError, ValueError):
                break
            if not np.all(np.isfinite(step)):
                break
            candidate = theta.copy()
            candidate[idx] = v - step
            new = self.f(candidate)
            if not (math.isfinite(new) and new >= ll):
                break
            improved = new - ll
            theta, ll = candidate, new
            if improved < 1e-12:
                break
        return theta, ll

    def _starts(self, starts):
        out = [("moment", self.moment)]
        if self.options.nested_starts:
            for edge in nesting.direct_submodels(self.fam):
                sub = self._fit_submodel(edge.sub)
                if sub is not None:
                    out.append((
                        "nested {}".format(edge.sub),
                        np.array(edge.embed_values(sub.estimates.values)),
                    ))
        for i, s in enumerate(starts or ()):
            s = np.array(s.values if isinstance(s, ParamVector) else s,
                         dtype=float)
            if not admissible(self.fam, s):
                raise ConstraintError(
                    "start {} is not a valid {} parameter".format(
                        i, self.fam.name)
                )
            out.append(("user {}".format(i), s))
        rng = np.random.default_rng(JITTER_SEED)
        for i in range(self.options.n_jitter):
            factor = 1.0 + rng.uniform(-JITTER_SCALE, JITTER_SCALE,
                                       self.fam.n_params)
            out.append(("jitter {}".format(i), self.moment * factor))
        return out

    def _fit_submodel(self, name):
        if name not in self.cache:
            try:
                sub = _Fitter(self.d, get_family(name), self.options,
                              self.cache)
                self.cache[name] = sub.run(None, finalize=False)
            except NonConvergenceError:
                self.cache[name] = None
        return self.cache[name]

    def _candidates(self, theta):
        """Boundary-fixed and interior searches from one start."""
        at_bound = {j: self._effective_lower(j)
                    for j in self._boundary_indices()
                    if theta[j] <= self._effective_lower(j)}
        out = []
        if at_bound:
            out.append(self._search(theta, at_bound))
        out.append(self._search(theta, {}))
        return out

    def _snap(self, theta, ll):
        """Try holding near-boundary parameters exactly on the bound."""
        tol = self.options.boundary_tol
        near = {}
        for j in self._boundary_indices():
            lower = self._effective_lower(j)
            if theta[j] - lower <= tol:
                near[j] = lower
        if not near:
            return theta, ll
        snapped = self._search(theta, near)
        if snapped is not None and snapped[1] >= ll - 1e-8:
            return snapped
        return theta, ll

    def run(self, starts, finalize=True):
        results = []
        for label, theta in self._starts(starts):
            for res in self._candidates(theta):
                if res is not None:
                    log.debug("%s start %s: loglik %.6f at %s",
                              self.fam.name, label, res[1],
                              np.round(res[0], 6).tolist())
                    results.append(res)
        if not results:
            raise NonConvergenceError(
                "all starting values failed for {}".format(self.fam.name)
            )
        theta, ll = results[0]
        for cand, value in results[1:]:
            if value > ll:
                theta, ll = cand, value
        theta, ll = self._snap(theta, ll)
        if self.options.polish:
            theta, ll = self._polish(theta, ll)
        if not finalize:
            return _bare_result(self, theta, ll)
        return self._finalize(theta, ll)

    def _finalize(self, theta, ll):
        fam = self.fam
        tol = self.options.boundary_tol
        boundary = {}
        fixed = {}
        for j, (name, c) in enumerate(zip(fam.param_names, fam.constraints)):
            on = (c.can_hit_boundary
                  and theta[j] - self._effective_lower(j) <= tol)
            boundary[name] = bool(on)
            if on:
                fixed[j] = theta[j]
        # refit from the optimum to confirm it
        again = self._search(theta, fixed)
        change = math.inf
        if again is not None:
            change = abs(again[1] - ll)
            if again[1] > ll:
                theta, ll = again
        converged = math.isfinite(ll) and (
            change <= max(1e-8, self.options.ftol * abs(ll)))
        free = [j for j in range(fam.n_params) if j not in fixed]
        if converged and free:
            g = gradient(lambda v: self.f(fill_free(theta, free, v)),
                         theta[free])
            gnorm = float(np.max(np.abs(g * np.maximum(1.0,
                                                       np.abs(theta[free])))))
            converged = gnorm <= self.options.gtol * max(1.0, abs(ll))
            log.debug("%s scaled gradient norm %.3g", fam.name, gnorm)
        estimates = ParamVector(fam, tuple(theta))
        result = FitResult(
            family=fam,
            thresh=self.d.thresh,
            estimates=estimates,
            se={n: None for n in fam.param_names},
            loglik=float(ll),
            n_exceedances=self.d.total_weight,
            converged=bool(converged),
            n_starts=self.n_searches,
            boundary=boundary,
            data=self.d,
        )
        if self.options.compute_se:
            try:
                se, vcov = _standard_errors(self.f, result)
            except SingularInformationError as e:
                log.warning("%s: standard errors unavailable (%s)",
                            fam.name, e)
            else:
                result = _replace(result, se=se, vcov=vcov)
        log.info("fitted %s above %g: loglik %.3f, %s", fam.name,
                 self.d.thresh, ll, estimates.as_dict())
        return result


def fill_free(theta, idx, values):
    out = np.array(theta, dtype=float)
    out[idx] = values
    return out


def _replace(result, **changes):
    values = dict(result.__dict__)
    values.update(changes)
    return FitResult(**values)


def _bare_result(fitter, theta, ll):
    fam = fitter.fam
    return FitResult(
        family=fam, thresh=fitter.d.thresh,
        estimates=ParamVector(fam, tuple(theta)),
        se={n: None for n in fam.param_names}, loglik=float(ll),
        n_exceedances=fitter.d.total_weight, converged=True,
        n_starts=fitter.n_searches,
        boundary={n: False for n in fam.param_names}, data=fitter.d,
    )


def _standard_errors(f, fr):
    names = fr.family.param_names
    theta = fr.estimates.array
    free = [j for j, n in enumerate(names) if not fr.boundary.get(n)]
    if not free:
        raise SingularInformationError("every parameter is on a boundary")
    h = hessian(lambda v: f(fill_free(theta, free, v)), theta[free])
    vcov = invert_information(h)
    se = {n: None for n in names}
    for i, j in enumerate(free):
        se[names[j]] = float(math.sqrt(vcov[i, i]))
    return se, vcov


def standard_errors(fr: FitResult, d: Optional[Dataset] = None
                    ) -> Dict[str, Optional[float]]:
    """Standard errors from the observed information at the optimum.

    Parameters flagged as on a boundary get ``None``. Raises
    SingularInformationError when the Hessian is not negative definite.
    """
    d = fr.data if d is None else to_exceedances(d, ExceedanceConfig(
        fr.thresh))
    f = loglik_function(d, fr.family)
    return _standard_errors(f, fr)[0]


def fit(d: Dataset, family, cfg: Optional[ExceedanceConfig] = None,
        starts: Optional[Sequence] = None,
        options: Optional[FitOptions] = None,
        thresholds: Optional[Sequence[float]] = None) -> FitResult:
    """Fit ``family`` to the exceedances of ``d`` over ``cfg.thresh``.

    Without ``cfg`` the dataset is used as is (it may already hold
    exceedances). ``thresholds`` is required for ``gppiece`` and is given on
    the exceedance scale.
    """
    fam = get_family(family, thresholds)
    if cfg is not None:
        d = to_exceedances(d, cfg)
    if d.total_weight <= 0:
        raise NoExceedancesError("no exceedances to fit")
    return _Fitter(d, fam, options or FitOptions()).run(starts)


def fit_many(d: Dataset, names: Sequence[str],
             cfg: Optional[ExceedanceConfig] = None,
             options: Optional[FitOptions] = None) -> List[FitResult]:
    """Fit several families to the same exceedances."""
    if cfg is not None:
        d = to_exceedances(d, cfg)
    return [fit(d, name, options=options) for name in names]


def _feasible_start(f, fam, theta, fixed):
    """Grow the scale parameter until ``theta`` has finite likelihood."""
    theta = np.array(theta, dtype=float)
    if "scale" not in fam.param_names or fam.index("scale") in fixed:
        return theta
    j = fam.index("scale")
    for _ in range(60):
        if math.isfinite(f(theta)):
            break
        theta[j] *= 2.0
    return theta


def constrained_fit(d: Dataset, family, fixed: Dict[str, float],
                    start=None, options: Optional[FitOptions] = None
                    ) -> Tuple[np.ndarray, float]:
    """Maximize the log likelihood with the ``fixed`` parameters held.

    Returns the full parameter vector and the maximized log likelihood,
    which is ``-inf`` when no feasible point was found.
    """
    fam = get_family(family)
    fitter = _Fitter(d, fam, options or FitOptions(
        n_jitter=0, nested_starts=False, compute_se=False))
    held = {fam.index(name): float(v) for name, v in fixed.items()}
    theta = np.array(fitter.moment if start is None else (
        start.values if isinstance(start, ParamVector) else start),
        dtype=float)
    for j, v in held.items():
        theta[j] = v
    theta = _feasible_start(fitter.f, fam, theta, held)
    res = fitter._search(theta, held)
    if res is None:
        return theta, -math.inf
    return res
