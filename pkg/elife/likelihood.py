"""Weighted log likelihood under censoring and interval truncation.

Each record contributes ``w * (c - t)`` where ``c`` is the log probability
of its censoring set and ``t`` the log probability of its truncation
window(s). Probabilities are computed from cumulative hazards as
``log{S(a) - S(b)} = -H(a) + log(1 - exp{-(H(b) - H(a))})`` which keeps
full precision deep in the upper tail.
"""

from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from . import families
from .data_model import (
    Dataset,
    ExceedanceConfig,
    to_exceedances,
)
from .errors import (
    ConstraintError,
    ElifeValidationError,
)

DEFAULT_FLOOR = 1e-300


@dataclass(frozen=True)
class LoglikOptions:
    cfg: Optional[ExceedanceConfig] = None
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if not 0 < self.floor < 1e-200:
            raise ElifeValidationError(
                "floor must lie in (0, 1e-200), got {!r}".format(self.floor)
            )


def _log_window(h_lo, h_hi):
    """``log{S(lo) - S(hi)}`` from the cumulative hazards at both ends."""
    with np.errstate(invalid="ignore", divide="ignore"):
        out = -h_lo + np.log(-np.expm1(-(h_hi - h_lo)))
    return np.where(np.isinf(h_lo), -math.inf, out)


def record_terms(fam, theta, arrays, floor=DEFAULT_FLOOR):
    """Per-record ``c - t`` (unweighted); ``-inf`` marks impossible records.
    """
    a = arrays
    n = a.time1.size
    lo2 = np.where(a.doubly, np.maximum(a.ltrunc2, 0.0), 0.0)
    hi2 = np.where(a.doubly, a.rtrunc2, math.inf)
    points = np.concatenate((
        np.maximum(a.time1, 0.0), np.maximum(a.time2, 0.0),
        np.maximum(a.ltrunc1, 0.0), a.rtrunc1, lo2, hi2,
    ))
    h = families._cumhaz(fam, theta, points)
    h1, h2, hl1, hr1, hl2, hr2 = (h[i * n:(i + 1) * n] for i in range(6))
    log_floor = math.log(floor)

    ev = a.event
    c = np.empty(n)
    obs = ev == 1
    if np.any(obs):
        logh = families._log_hazard(fam, theta, np.maximum(a.time1[obs], 0))
        with np.errstate(invalid="ignore"):
            dens = logh - h1[obs]
        c[obs] = np.where(np.isinf(h1[obs]) | np.isnan(dens), -math.inf,
                          dens)
    right = ev == 0
    c[right] = -h1[right]
    # a left-censored failure still lies inside its truncation window
    left = ev == 2
    c[left] = _log_window(np.maximum(h1, hl1)[left], h2[left])
    interval = ev == 3
    c[interval] = _log_window(h1[interval], h2[interval])
    c = np.where(~obs & (c <= log_floor), -math.inf, c)

    trunc = _log_window(hl1, hr1)
    if np.any(a.doubly):
        trunc = np.where(a.doubly,
                         np.logaddexp(trunc, _log_window(hl2, hr2)), trunc)
    trunc = np.where(trunc <= log_floor, -math.inf, trunc)
    with np.errstate(invalid="ignore"):
        terms = c - trunc
    return np.where(np.isnan(terms) | np.isinf(trunc), -math.inf, terms)


def loglik_value(fam, theta, arrays, floor=DEFAULT_FLOOR):
    terms = record_terms(fam, theta, arrays, floor)
    if not np.all(np.isfinite(terms)):
        return -math.inf
    # numpy reduces with pairwise summation in a fixed order
    return float(np.sum(arrays.weight * terms))


def loglik_function(d: Dataset, family,
                    options: Optional[LoglikOptions] = None):
    """Return ``theta -> loglik`` for raw parameter vectors of ``family``.

    Parameters outside the constraints map to ``-inf`` instead of raising,
    which is what optimizers and finite-difference schemes need.
    """
    options = options or LoglikOptions()
    if options.cfg is not None:
        d = to_exceedances(d, options.cfg)
    fam = families.get_family(family)
    arrays = d.arrays
    floor = options.floor

    def objective(theta):
        theta = np.asarray(theta, dtype=float)
        if not families.admissible(fam, theta):
            return -math.inf
        return loglik_value(fam, theta, arrays, floor)

    return objective


def loglik(d: Dataset, p: families.ParamVector,
           options: Optional[LoglikOptions] = None) -> float:
    if not isinstance(p, families.ParamVector):
        raise ConstraintError("expected a ParamVector, got {!r}".format(p))
    options = options or LoglikOptions()
    if options.cfg is not None:
        d = to_exceedances(d, options.cfg)
    return loglik_value(p.family, p.array, d.arrays, options.floor)


def deviance(d: Dataset, p: families.ParamVector,
             options: Optional[LoglikOptions] = None) -> float:
    return -2.0 * loglik(d, p, options)
