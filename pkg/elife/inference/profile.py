"""Profile likelihood: endpoint extrapolation, parameter intervals and
pointwise hazard bands."""

from dataclasses import (
    dataclass,
    field,
)
from logging import getLogger
import math
from typing import (
    Callable,
    Optional,
    Sequence,
)
import warnings

import numpy as np
import pandas as pd
from scipy import (
    interpolate,
    optimize,
    stats,
)

from .. import families
from ..data_model import (
    Dataset,
    ExceedanceConfig,
)
from ..errors import (
    ElifeValidationError,
    GridTooNarrowError,
    IoError,
    SingularInformationError,
)
from ..likelihood import loglik_function
from ..optim_fit import (
    constrained_fit,
    fill_free,
    fit,
    FitResult,
    gradient,
)

log = getLogger(__name__)

DEFAULT_LEVEL = 0.95
ENDPOINT_GRID = (0.9, 3.0, 101)
PARAMETER_GRID_SE = 4.0
PARAMETER_GRID_POINTS = 41
LOG_FLOOR = -1e10
AGREEMENT_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """Profile log likelihood on a grid with its confidence interval.

    ``lower``/``upper`` found outside the grid are extrapolated and flagged.
    """

    parameter: str
    psi: np.ndarray
    loglik: np.ndarray
    psi_hat: float
    loglik_hat: float
    level: float
    lower: float
    upper: float
    lower_extrapolated: bool = False
    upper_extrapolated: bool = False
    thresh: float = 0.0

    @property
    def cutoff(self):
        return float(stats.chi2.ppf(self.level, 1))

    @property
    def deviance(self):
        return 2.0 * (self.loglik - self.loglik_hat)

    def to_dict(self):
        return {
            "parameter": self.parameter,
            "thresh": self.thresh,
            "psi": self.psi.tolist(),
            "loglik": self.loglik.tolist(),
            "psi_hat": self.psi_hat,
            "loglik_hat": self.loglik_hat,
            "level": self.level,
            "lower": self.lower,
            "upper": self.upper,
            "lower_extrapolated": self.lower_extrapolated,
            "upper_extrapolated": self.upper_extrapolated,
        }

    def to_frame(self):
        return pd.DataFrame({"psi": self.psi, "loglik": self.loglik,
                             "deviance": self.deviance})


def _clipped(value):
    return value if math.isfinite(value) else LOG_FLOOR


def _crossing(psi, r, psi_hat, cutoff, side, profile_at, ll_hat):
    """Where ``2(l_p - l_hat) + cutoff`` changes sign on one side of
    ``psi_hat``; returns ``(bound, extrapolated)``."""
    if side == "lower":
        idx = np.flatnonzero(psi < psi_hat)[::-1]
    else:
        idx = np.flatnonzero(psi > psi_hat)
    points = [(psi_hat, cutoff)] if math.isfinite(psi_hat) else []
    for k in idx:
        if not r[k] < 0:
            points.append((psi[k], r[k]))
            continue
        if not points:
            return psi[k], True
        a, b = sorted((points[-1][0], psi[k]))
        guess = None
        finite = [pt for pt in points if math.isfinite(pt[1])]
        if math.isfinite(r[k]) and len(finite) >= 1:
            xs, ys = zip(*sorted(finite + [(psi[k], r[k])]))
            try:
                roots = interpolate.PchipInterpolator(xs, ys).solve(
                    0.0, extrapolate=False)
                roots = [x for x in roots if a <= x <= b]
                guess = roots[0] if roots else None
            except ValueError:
                guess = None

        def g(x):
            return _clipped(2.0 * (profile_at(x) - ll_hat)) + cutoff

        try:
            bound = optimize.brentq(g, a, b, xtol=1e-10, rtol=1e-12)
        except ValueError:
            bound = guess if guess is not None else 0.5 * (a + b)
        log.debug("%s bound %.6g (monotone interpolation %s)", side, bound,
                  guess)
        return float(bound), False
    finite = [pt for pt in points if math.isfinite(pt[1])]
    if len(finite) < 2:
        return (math.inf if side == "upper" else -math.inf), True
    (x1, r1), (x2, r2) = finite[-2], finite[-1]
    slope = (r2 - r1) / (x2 - x1)
    if side == "upper" and slope < 0:
        return float(x2 - r2 / slope), True
    if side == "lower" and slope > 0:
        return float(x2 - r2 / slope), True
    return (math.inf if side == "upper" else -math.inf), True


def _at_estimate(value, ll_hat, parameter):
    """Constrained maximum at the estimate, checked against the fit."""
    if not abs(value - ll_hat) <= AGREEMENT_TOL:
        log.warning("profile of %s at its estimate is %.6f but the fit "
                    "reports %.6f", parameter, value, ll_hat)
    return value


def _curve(parameter, grid, values, psi_hat, ll_hat, level, profile_at,
           thresh):
    cutoff = float(stats.chi2.ppf(level, 1))
    if np.any(values > ll_hat + 1e-6):
        log.warning("profile of %s exceeds the maximum by %.3g; the fit "
                    "may not be global", parameter,
                    float(np.max(values) - ll_hat))
    r = 2.0 * (values - ll_hat) + cutoff
    lower, lower_ext = _crossing(grid, r, psi_hat, cutoff, "lower",
                                 profile_at, ll_hat)
    upper, upper_ext = _crossing(grid, r, psi_hat, cutoff, "upper",
                                 profile_at, ll_hat)
    if not math.isfinite(psi_hat):
        upper, upper_ext = math.inf, False
    return ProfileCurve(parameter, grid, values, psi_hat, ll_hat, level,
                        lower, upper, lower_ext, upper_ext, thresh)


def profile_parameter(fr: FitResult, parameter: str,
                      grid: Optional[Sequence[float]] = None,
                      level=DEFAULT_LEVEL) -> ProfileCurve:
    """Profile one parameter of a fit, maximizing over the others."""
    if fr.data is None:
        raise ElifeValidationError("the fit does not carry its data")
    fam = fr.family
    j = fam.index(parameter)
    c = fam.constraints[j]
    psi_hat = fr.estimates[parameter]
    if grid is None:
        se = fr.se.get(parameter) or max(0.1 * abs(psi_hat), 0.05)
        grid = psi_hat + se * np.linspace(-PARAMETER_GRID_SE,
                                          PARAMETER_GRID_SE,
                                          PARAMETER_GRID_POINTS)
    grid = np.asarray(grid, dtype=float)
    lower = c.fit_lower if c.fit_lower is not None else -math.inf
    grid = grid[[c.admits(x) and x > lower for x in grid]]
    grid = np.union1d(grid, [psi_hat])

    def profile_at(x):
        value = constrained_fit(fr.data, fam, {parameter: x},
                                start=fr.estimates)[1]
        if x == psi_hat:
            return _at_estimate(value, fr.loglik, parameter)
        return value

    values = np.array([profile_at(x) for x in grid])
    return _curve(parameter, grid, values, psi_hat, fr.loglik, level,
                  profile_at, fr.thresh)


def _endpoint_profile(ex: Dataset) -> Callable[[float], float]:
    """``eta -> max_sigma l(sigma, -sigma/eta)`` on the exceedance scale."""
    f = loglik_function(ex, "gp")
    a = ex.arrays
    floor = float(np.max(np.where(np.isfinite(a.time1), a.time1, 0.0)))

    def at(eta):
        if not eta > floor:
            return -math.inf

        def objective(z):
            s = math.exp(z)
            return -_clipped(f((s, -s / eta)))

        res = optimize.minimize_scalar(
            objective, bounds=(math.log(1e-10 * eta), math.log(eta)),
            method="bounded", options={"xatol": 1e-10},
        )
        value = -float(res.fun)
        return value if value > LOG_FLOOR else -math.inf

    return at


def profile_endpoint(d: Dataset, cfg: Optional[ExceedanceConfig] = None,
                     psi_grid: Optional[Sequence[float]] = None,
                     level=DEFAULT_LEVEL) -> ProfileCurve:
    """Profile likelihood of the generalized Pareto endpoint.

    The endpoint ``psi`` is on the original time scale (threshold plus
    ``-sigma/xi``). When the fitted shape is nonnegative the estimate and
    the upper bound are infinite.
    """
    fr = fit(d, "gp", cfg)
    ex = fr.data
    u = ex.thresh
    sigma, xi = fr.estimates.values
    eta_hat = -sigma / xi if xi < 0 else math.inf
    psi_hat = u + eta_hat
    at = _endpoint_profile(ex)
    if psi_grid is None:
        lo, hi, n = ENDPOINT_GRID
        if math.isfinite(eta_hat):
            grid = psi_hat * np.linspace(lo, hi, n)
        else:
            a = ex.arrays
            top = float(np.max(np.where(np.isfinite(a.time2), a.time2,
                                        a.time1)))
            grid = u + top * np.linspace(1.0, 10.0 * hi, n)
    else:
        grid = np.sort(np.asarray(psi_grid, dtype=float))
        if math.isfinite(psi_hat) and not grid[0] < psi_hat < grid[-1]:
            raise GridTooNarrowError(
                "endpoint estimate {:.4f} is not inside the grid [{}, {}]"
                .format(psi_hat, grid[0], grid[-1])
            )
    if math.isfinite(psi_hat):
        grid = np.union1d(grid, [psi_hat])

    def profile_at(psi):
        if psi == psi_hat:
            return _at_estimate(at(eta_hat), fr.loglik, "endpoint")
        return at(psi - u)

    values = np.array([profile_at(x) for x in grid])
    curve = _curve("endpoint", grid, values, psi_hat, fr.loglik, level,
                   profile_at, u)
    log.info("endpoint %.4f, %g%% interval (%.4f, %.4f)", psi_hat,
             100 * level, curve.lower, curve.upper)
    return curve


@dataclass(frozen=True, eq=False)
class HazardBand:
    times: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    method: str
    level: float
    family: str = field(default="")

    def to_frame(self):
        return pd.DataFrame({
            "time": self.times,
            "hazard": self.estimate,
            "lower": self.lower,
            "upper": self.upper,
        })

    def to_csv(self, path):
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.10g")
        except OSError as e:
            raise IoError("cannot write {}: {}".format(path, e)) from e


def _log_hazard_at(fam, t):
    def lh(theta):
        with np.errstate(all="ignore"):
            return float(families._log_hazard(fam, np.asarray(theta), t))
    return lh


def _wald(fr, times, z):
    if fr.vcov is None:
        raise SingularInformationError(
            "Wald intervals need an invertible observed information; use "
            "method='profile'"
        )
    fam = fr.family
    theta = fr.estimates.array
    free = [j for j, n in enumerate(fam.param_names)
            if fr.se.get(n) is not None]
    out = []
    for t in times:
        lh = _log_hazard_at(fam, t)
        est = lh(theta)
        g = gradient(lambda v: lh(fill_free(theta, free, v)), theta[free])
        se = math.sqrt(max(float(g @ fr.vcov @ g), 0.0)) \
            if np.all(np.isfinite(g)) else math.inf
        out.append((math.exp(est), math.exp(est - z * se),
                    math.exp(est + z * se)))
    return out


def _profile(fr, times, level):
    if fr.data is None:
        raise ElifeValidationError("the fit does not carry its data")
    fam = fr.family
    f = loglik_function(fr.data, fam)
    target = fr.loglik - float(stats.chi2.ppf(level, 1)) / 2.0
    theta = fr.estimates.array
    bounds = []
    for c in fam.constraints:
        lower = c.fit_lower if c.fit_lower is not None else c.lower
        if lower == -math.inf:
            bounds.append((None, None))
        elif c.closed or c.limit:
            bounds.append((lower, None))
        else:
            bounds.append((lower + 1e-12 * max(1.0, abs(lower)), None))
    constraint = {"type": "ineq", "fun": lambda th: _clipped(f(th)) - target}
    out = []
    for t in times:
        lh = _log_hazard_at(fam, t)
        est = lh(theta)
        ends = []
        for sign in (1.0, -1.0):
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = optimize.minimize(
                    lambda th: sign * _clipped(lh(th)), theta,
                    method="SLSQP", bounds=bounds, constraints=[constraint],
                    options={"ftol": 1e-12, "maxiter": 500},
                )
            value = lh(res.x)
            if not (math.isfinite(value) and f(res.x) >= target - 1e-6):
                value = est
            ends.append(value)
        out.append((math.exp(est), math.exp(min(ends[0], est)),
                    math.exp(max(ends[1], est))))
    return out


def hazard_ci(fr: FitResult, times, method="wald",
              level=DEFAULT_LEVEL) -> HazardBand:
    """Pointwise hazard with Wald (delta method on the log scale) or
    profile likelihood bounds."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(np.isnan(times)):
        raise ElifeValidationError("times must be nonnegative")
    if not 0 < level < 1:
        raise ElifeValidationError("level must lie in (0, 1)")
    if method == "wald":
        rows = _wald(fr, times, float(stats.norm.ppf(0.5 + level / 2)))
    elif method == "profile":
        rows = _profile(fr, times, level)
    else:
        raise ElifeValidationError(
            "method must be 'wald' or 'profile', got {!r}".format(method)
        )
    est, lower, upper = (np.array(col) for col in zip(*rows))
    return HazardBand(times, est, lower, upper, method, level,
                      fr.family.name)
