"""Parametric hazard families for excess lifetimes.

Every family is described by its hazard ``h(t)`` and cumulative hazard
``H(t)``; survival, distribution, density and quantile functions derive
from those two. All closed forms are written in terms of the bounded
kernels ``expm1(x)/x`` and ``log1p(x)/x`` so that the limits β → 0 and
ξ → 0 are exact.

======================  ====================================================
family                  hazard
======================  ====================================================
``exp``                 1/σ
``gomp``                exp(βt/σ)/σ
``gp``                  1/(σ + ξt)₊
``weibull``             α σ^-α t^(α-1)
``extgp``               β exp(βt/σ) / σ[β + ξ{exp(βt/σ) - 1}]
``extweibull``          α σ^-α t^(α-1) / {1 + ξ(t/σ)^α}₊
``perks``               α exp(νt) / {1 + α exp(νt)}
``beard``               α exp(νt) / {1 + αβ exp(νt)}
``gompmake``            λ + gomp
``perksmake``           λ + perks
``beardmake``           λ + beard
``gppiece``             gp with piecewise-constant shape, continuous hazard
======================  ====================================================
"""

from dataclasses import dataclass
from logging import getLogger
import math
from typing import (
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from .errors import (
    ConstraintError,
    DomainError,
    NonConvergenceError,
)

log = getLogger(__name__)

INF = math.inf

SERIES_TOL = 1e-8
QUANTILE_TOL = 1e-12
MAX_NEWTON_STEPS = 200


@dataclass(frozen=True)
class Constraint:
    """Lower bound of one parameter.

    ``closed`` admits the bound itself; ``limit`` admits it as the
    continuous limit of an open constraint (β = 0 in ``gomp`` is the
    exponential). ``fit_lower`` tightens the bound while fitting.
    """

    lower: float = -INF
    closed: bool = False
    limit: bool = False
    fit_lower: Optional[float] = None

    def admits(self, value):
        if value > self.lower:
            return True
        return value == self.lower and (self.closed or self.limit)

    @property
    def can_hit_boundary(self):
        return self.lower > -INF and (self.closed or self.limit)

    def describe(self, name):
        if self.lower == -INF:
            return "{} real".format(name)
        sign = ">=" if self.closed else ">"
        return "{} {} {:g}".format(name, sign, self.lower)


POSITIVE = Constraint(0.0)
POSITIVE_LIMIT = Constraint(0.0, limit=True)
NONNEGATIVE = Constraint(0.0, closed=True)
SHAPE = Constraint(-INF, fit_lower=-1.0)

_LAYOUTS = {
    "exp": (("scale", POSITIVE),),
    "gomp": (("scale", POSITIVE), ("beta", POSITIVE_LIMIT)),
    "gp": (("scale", POSITIVE), ("shape", SHAPE)),
    "weibull": (("scale", POSITIVE), ("alpha", POSITIVE)),
    "extgp": (("scale", POSITIVE), ("beta", POSITIVE_LIMIT),
              ("shape", SHAPE)),
    "extweibull": (("scale", POSITIVE), ("alpha", POSITIVE),
                   ("shape", SHAPE)),
    "perks": (("alpha", POSITIVE), ("nu", NONNEGATIVE)),
    "beard": (("alpha", POSITIVE), ("nu", NONNEGATIVE),
              ("beta", NONNEGATIVE)),
    "gompmake": (("lambda", NONNEGATIVE), ("scale", POSITIVE),
                 ("beta", POSITIVE_LIMIT)),
    "perksmake": (("lambda", NONNEGATIVE), ("alpha", POSITIVE),
                  ("nu", NONNEGATIVE)),
    "beardmake": (("lambda", NONNEGATIVE), ("alpha", POSITIVE),
                  ("nu", NONNEGATIVE), ("beta", NONNEGATIVE)),
}

FAMILY_NAMES = tuple(_LAYOUTS) + ("gppiece",)

MAKEHAM = frozenset(("gompmake", "perksmake", "beardmake"))


@dataclass(frozen=True)
class Family:
    name: str
    param_names: Tuple[str, ...]
    constraints: Tuple[Constraint, ...]
    thresholds: Tuple[float, ...] = ()

    @property
    def n_params(self):
        return len(self.param_names)

    def index(self, name):
        try:
            return self.param_names.index(name)
        except ValueError:
            raise KeyError("{} has no parameter {!r}"
                           .format(self.name, name)) from None

    def __str__(self):
        return self.name


def get_family(name, thresholds: Optional[Sequence[float]] = None) -> Family:
    """Look up a family by name; ``gppiece`` also needs its thresholds."""
    if isinstance(name, Family):
        return name
    if name == "gppiece":
        if thresholds is None or len(thresholds) < 1:
            raise ConstraintError("gppiece needs at least one threshold")
        thresholds = tuple(float(u) for u in thresholds)
        if thresholds[0] < 0 or any(
            b <= a for a, b in zip(thresholds, thresholds[1:])
        ):
            raise ConstraintError(
                "gppiece thresholds must be nonnegative and increasing"
            )
        k = len(thresholds)
        names = ("scale",) + tuple("shape{}".format(i + 1) for i in range(k))
        return Family("gppiece", names, (POSITIVE,) + (SHAPE,) * k,
                      thresholds)
    try:
        layout = _LAYOUTS[name]
    except KeyError:
        raise ConstraintError(
            "unknown family {!r}, expected one of {}"
            .format(name, ", ".join(FAMILY_NAMES))
        ) from None
    return Family(name, tuple(n for n, _ in layout),
                  tuple(c for _, c in layout))


def stage_scales(scale, shapes, thresholds):
    """Scales of each piece of the piecewise generalized Pareto model."""
    scales = [scale]
    for k in range(len(thresholds) - 1):
        scales.append(scales[-1]
                      + shapes[k] * (thresholds[k + 1] - thresholds[k]))
    return np.array(scales, dtype=float)


def admissible(fam: Family, theta) -> bool:
    """Cheap constraint check on raw values, used inside optimizers."""
    if len(theta) != fam.n_params:
        return False
    for c, v in zip(fam.constraints, theta):
        if not (v < INF and c.admits(v)):
            return False
    if fam.name == "gppiece":
        return bool(np.all(stage_scales(theta[0], theta[1:],
                                        fam.thresholds) > 0))
    return True


@dataclass(frozen=True)
class ParamVector:
    family: Family
    values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        fam = self.family
        if len(values) != fam.n_params:
            raise ConstraintError(
                "{} expects {} parameters ({}), got {}".format(
                    fam.name, fam.n_params, ", ".join(fam.param_names),
                    len(values))
            )
        for name, c, v in zip(fam.param_names, fam.constraints, values):
            if math.isnan(v) or not c.admits(v) or v == INF:
                raise ConstraintError(
                    "{}: {} = {!r} violates {}".format(
                        fam.name, name, v, c.describe(name))
                )
        if fam.name == "gppiece":
            scales = stage_scales(values[0], values[1:], fam.thresholds)
            if np.any(scales <= 0):
                raise ConstraintError(
                    "gppiece stage scales must be positive, got {}"
                    .format(scales.tolist())
                )

    def __getitem__(self, name):
        return self.values[self.family.index(name)]

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    @property
    def array(self):
        return np.array(self.values, dtype=float)

    def as_dict(self):
        return dict(zip(self.family.param_names, self.values))

    def replace(self, **changes):
        values = list(self.values)
        for name, value in changes.items():
            values[self.family.index(name)] = value
        return ParamVector(self.family, tuple(values))


def params(family, *values, thresholds=None, **named) -> ParamVector:
    """Build a ParamVector positionally or by parameter name."""
    fam = get_family(family, thresholds)
    if values and named:
        raise TypeError("give parameter values positionally or by name")
    if named:
        missing = set(fam.param_names) - set(named)
        extra = set(named) - set(fam.param_names)
        if missing or extra:
            raise ConstraintError(
                "{} expects parameters {}".format(
                    fam.name, ", ".join(fam.param_names))
            )
        values = tuple(named[n] for n in fam.param_names)
    return ParamVector(fam, tuple(values))


def gppiece_params(scale, shapes, thresholds) -> ParamVector:
    fam = get_family("gppiece", thresholds)
    if len(shapes) != len(fam.thresholds):
        raise ConstraintError("need one shape per threshold")
    return ParamVector(fam, (scale,) + tuple(shapes))


# kernels

def expm1_ratio(x):
    """``expm1(x)/x`` with value 1 at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_TOL
    safe = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        out = np.expm1(safe) / safe
    return np.where(small, 1.0 + 0.5 * x, out)


def log1p_ratio(x):
    """``log1p(x)/x`` with value 1 at 0 and +inf for x <= -1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_TOL
    safe = np.where(small | (x <= -1) | np.isinf(x), 1.0, x)
    out = np.log1p(safe) / safe
    out = np.where(x <= -1, INF, out)
    out = np.where(x == INF, 0.0, out)
    return np.where(small, 1.0 - 0.5 * x, out)


def _times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("times must be nonnegative")
    return t


def _gp_cumhaz(s, xi, sigma):
    z = s / sigma
    return z * log1p_ratio(xi * z)


def _beard_cumhaz(t, alpha, nu, beta):
    a = alpha / (1.0 + alpha * beta)
    e = t * expm1_ratio(nu * t)
    with np.errstate(invalid="ignore", over="ignore"):
        out = a * e * log1p_ratio(beta * a * nu * e)
    return np.where(np.isinf(e), INF, out)


def _beard_log_hazard(t, alpha, nu, beta):
    with np.errstate(divide="ignore"):
        log_ab = np.log(alpha) + np.log(beta)
    return np.log(alpha) + nu * t - np.logaddexp(0.0, log_ab + nu * t)


def _gppiece_parts(fam, th):
    u = np.array(fam.thresholds)
    scales = stage_scales(th[0], th[1:], fam.thresholds)
    shapes = np.asarray(th[1:], dtype=float)
    widths = np.diff(u)
    pieces = _gp_cumhaz(widths, shapes[:-1], scales[:-1])
    offsets = np.concatenate(([0.0], np.cumsum(pieces)))
    return u, scales, shapes, offsets


def _cumhaz(fam, th, t):
    """Cumulative hazard for raw parameter values, no validation."""
    name = fam.name
    t = np.asarray(t, dtype=float)
    infinite = np.isinf(t)
    t = np.where(infinite, 0.0, t)
    with np.errstate(over="ignore", invalid="ignore"):
        if name == "exp":
            out = t / th[0]
        elif name == "gomp":
            out = t / th[0] * expm1_ratio(th[1] * t / th[0])
        elif name == "gp":
            out = _gp_cumhaz(t, th[1], th[0])
        elif name == "weibull":
            out = (t / th[0]) ** th[1]
        elif name == "extgp":
            g = t / th[0] * expm1_ratio(th[1] * t / th[0])
            out = np.where(np.isinf(g), INF, g * log1p_ratio(th[2] * g))
        elif name == "extweibull":
            z = (t / th[0]) ** th[1]
            out = np.where(np.isinf(z), INF, z * log1p_ratio(th[2] * z))
        elif name == "perks":
            out = _beard_cumhaz(t, th[0], th[1], 1.0)
        elif name == "beard":
            out = _beard_cumhaz(t, th[0], th[1], th[2])
        elif name == "gompmake":
            out = th[0] * t + t / th[1] * expm1_ratio(th[2] * t / th[1])
        elif name == "perksmake":
            out = th[0] * t + _beard_cumhaz(t, th[1], th[2], 1.0)
        elif name == "beardmake":
            out = th[0] * t + _beard_cumhaz(t, th[1], th[2], th[3])
        elif name == "gppiece":
            u, scales, shapes, offsets = _gppiece_parts(fam, th)
            k = np.clip(np.searchsorted(u, t, side="right") - 1, 0, None)
            s = np.maximum(t - u[k], 0.0)
            out = offsets[k] + _gp_cumhaz(s, shapes[k], scales[k])
            out = np.where(t < u[0], 0.0, out)
        else:
            raise ConstraintError("unknown family {!r}".format(name))
    out = np.where(np.isnan(out), INF, out)
    return np.where(infinite, INF, out)


def _log_hazard(fam, th, t):
    """Log hazard for raw parameter values; +inf beyond an endpoint."""
    name = fam.name
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if name == "exp":
            out = np.full_like(t, -np.log(th[0]))
        elif name == "gomp":
            out = -np.log(th[0]) + th[1] * t / th[0]
        elif name == "gp":
            out = -np.log(np.where(th[0] + th[1] * t > 0,
                                   th[0] + th[1] * t, 0.0))
        elif name in ("weibull", "extweibull"):
            alpha = th[1]
            power = (0.0 if alpha == 1 else (alpha - 1) * np.log(t))
            out = np.log(alpha) - alpha * np.log(th[0]) + power
            if name == "extweibull":
                den = 1.0 + th[2] * (t / th[0]) ** alpha
                out = out - np.log(np.where(den > 0, den, 0.0))
        elif name == "extgp":
            x = th[1] * t / th[0]
            den = 1.0 + th[2] * t / th[0] * expm1_ratio(x)
            out = (-np.log(th[0]) + x
                   - np.log(np.where(den > 0, den, 0.0)))
        elif name == "perks":
            out = _beard_log_hazard(t, th[0], th[1], 1.0)
        elif name == "beard":
            out = _beard_log_hazard(t, th[0], th[1], th[2])
        elif name == "gompmake":
            out = np.logaddexp(np.log(th[0]),
                               -np.log(th[1]) + th[2] * t / th[1])
        elif name == "perksmake":
            out = np.logaddexp(np.log(th[0]),
                               _beard_log_hazard(t, th[1], th[2], 1.0))
        elif name == "beardmake":
            out = np.logaddexp(np.log(th[0]),
                               _beard_log_hazard(t, th[1], th[2], th[3]))
        elif name == "gppiece":
            u, scales, shapes, _ = _gppiece_parts(fam, th)
            k = np.clip(np.searchsorted(u, t, side="right") - 1, 0, None)
            den = scales[k] + shapes[k] * (t - u[k])
            out = -np.log(np.where(den > 0, den, 0.0))
            out = np.where(t < u[0], -INF, out)
        else:
            raise ConstraintError("unknown family {!r}".format(name))
    return np.where(np.isnan(out), INF, out)


def _endpoint(fam, th):
    name = fam.name
    if name == "gp" and th[1] < 0:
        return -th[0] / th[1]
    if name == "extgp" and th[2] < 0:
        y = -th[1] / th[2]
        return float(th[0] / -th[2] * log1p_ratio(y))
    if name == "extweibull" and th[2] < 0:
        return th[0] * (-1.0 / th[2]) ** (1.0 / th[1])
    if name == "gppiece" and th[-1] < 0:
        u, scales, shapes, _ = _gppiece_parts(fam, th)
        return float(u[-1] + scales[-1] / -shapes[-1])
    return INF


def _closed_inverse(fam, th, e):
    name = fam.name
    with np.errstate(over="ignore", invalid="ignore"):
        if name == "exp":
            return th[0] * e
        if name == "gomp":
            return th[0] * e * log1p_ratio(th[1] * e)
        if name == "gp":
            return th[0] * e * expm1_ratio(th[1] * e)
        if name == "weibull":
            return th[0] * e ** (1.0 / th[1])
        if name == "extgp":
            g = e * expm1_ratio(th[2] * e)
            return th[0] * g * log1p_ratio(th[1] * g)
        if name == "extweibull":
            z = e * expm1_ratio(th[2] * e)
            return th[0] * z ** (1.0 / th[1])
        if name in ("perks", "beard"):
            alpha, nu = th[0], th[1]
            beta = 1.0 if name == "perks" else th[2]
            a = alpha / (1.0 + alpha * beta)
            y = nu * e / a * expm1_ratio(nu * beta * e)
            return e / a * expm1_ratio(nu * beta * e) * log1p_ratio(y)
        if name == "gppiece":
            u, scales, shapes, offsets = _gppiece_parts(fam, th)
            k = np.clip(np.searchsorted(offsets, e, side="right") - 1, 0,
                        None)
            r = e - offsets[k]
            return u[k] + scales[k] * r * expm1_ratio(shapes[k] * r)
    return None


def _numeric_inverse(fam, th, e):
    """Safeguarded Newton on H(t) = e, bisection when Newton leaves the
    bracket."""
    shape = np.shape(e)
    e = np.atleast_1d(np.asarray(e, dtype=float)).ravel()
    out = np.where(np.isinf(e), _endpoint(fam, th), 0.0)
    todo = (e > 0) & np.isfinite(e)
    if not np.any(todo):
        return out.reshape(shape)
    target = e[todo]
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    end = _endpoint(fam, th)
    for _ in range(2100):
        short = _cumhaz(fam, th, hi) < target
        if not np.any(short):
            break
        hi = np.where(short, np.minimum(hi * 2.0, end), hi)
    else:
        raise NonConvergenceError("cannot bracket quantile")
    t = 0.5 * (lo + hi)
    for _ in range(MAX_NEWTON_STEPS):
        f = _cumhaz(fam, th, t) - target
        lo = np.where(f < 0, t, lo)
        hi = np.where(f >= 0, t, hi)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            step = t - f / np.exp(_log_hazard(fam, th, t))
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        new = np.where(inside, step, 0.5 * (lo + hi))
        done = np.abs(new - t) <= QUANTILE_TOL * (1.0 + t)
        t = new
        if np.all(done):
            break
    out[todo] = t
    return out.reshape(shape)


def _inverse_cumhaz(fam, th, e):
    e = np.asarray(e, dtype=float)
    if fam.name in MAKEHAM:
        return _numeric_inverse(fam, th, e)
    shape = e.shape
    flat = np.atleast_1d(e).ravel()
    t = np.array(_closed_inverse(fam, th, flat), dtype=float).ravel()
    bad = ~np.isfinite(t) & np.isfinite(flat)
    if np.any(bad):
        t[bad] = _numeric_inverse(fam, th, flat[bad])
    t = np.where(np.isinf(flat), _endpoint(fam, th), t)
    return t.reshape(shape)


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def hazard(p: ParamVector, t):
    t_arr = _times(t)
    return _out(np.exp(_log_hazard(p.family, p.array, t_arr)), t)


def log_hazard(p: ParamVector, t):
    t_arr = _times(t)
    return _out(_log_hazard(p.family, p.array, t_arr), t)


def cum_hazard(p: ParamVector, t):
    t_arr = _times(t)
    return _out(_cumhaz(p.family, p.array, t_arr), t)


def survival(p: ParamVector, t):
    t_arr = _times(t)
    return _out(np.exp(-_cumhaz(p.family, p.array, t_arr)), t)


def cdf(p: ParamVector, t):
    t_arr = _times(t)
    return _out(-np.expm1(-_cumhaz(p.family, p.array, t_arr)), t)


def density(p: ParamVector, t):
    t_arr = _times(t)
    fam, th = p.family, p.array
    with np.errstate(invalid="ignore"):
        out = np.exp(_log_hazard(fam, th, t_arr) - _cumhaz(fam, th, t_arr))
    return _out(np.where(np.isnan(out), 0.0, out), t)


def quantile(p: ParamVector, q):
    q_arr = np.asarray(q, dtype=float)
    if np.any(np.isnan(q_arr)) or np.any((q_arr < 0) | (q_arr >= 1)):
        raise DomainError("quantile levels must lie in [0, 1)")
    e = -np.log1p(-q_arr)
    return _out(_inverse_cumhaz(p.family, p.array, e), q)


def inverse_cum_hazard(p: ParamVector, e):
    """Time at which the cumulative hazard reaches ``e`` (may be inf)."""
    e_arr = np.asarray(e, dtype=float)
    if np.any(np.isnan(e_arr)) or np.any(e_arr < 0):
        raise DomainError("cumulative hazard levels must be nonnegative")
    return _out(_inverse_cumhaz(p.family, p.array, e_arr), e)


def endpoint(p: ParamVector) -> float:
    return float(_endpoint(p.family, p.array))
