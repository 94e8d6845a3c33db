"""Threshold selection: parameter stability and the piecewise generalized
Pareto score test."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from logging import getLogger
import math
from typing import (
    Optional,
    Sequence,
    Tuple,
)

import pandas as pd
from scipy import stats

from ..data_model import (
    Dataset,
    ExceedanceConfig,
    to_exceedances,
)
from ..errors import (
    ElifeNumericalError,
    ElifeValidationError,
    SingularInformationError,
)
from ..families import gppiece_params
from ..likelihood import loglik_function
from ..optim_fit import (
    fit,
    gradient,
    hessian,
    invert_information,
)
from .profile import (
    DEFAULT_LEVEL,
    profile_parameter,
)

log = getLogger(__name__)

MIN_WEIGHT = 10.0


@dataclass(frozen=True)
class ThresholdEstimate:
    thresh: float
    n_exceedances: float
    estimate: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    statistic: Optional[float] = None
    pvalue: Optional[float] = None
    df: Optional[int] = None
    failed: bool = False
    message: str = ""


@dataclass(frozen=True)
class ThresholdDiag:
    kind: str
    parameter: str
    thresholds: Tuple[float, ...]
    entries: Tuple[ThresholdEstimate, ...]
    level: float = DEFAULT_LEVEL

    def __post_init__(self):
        u = self.thresholds
        if any(b <= a for a, b in zip(u, u[1:])):
            raise ElifeValidationError(
                "thresholds must be strictly increasing, got {}".format(
                    list(u))
            )

    @property
    def pvalues(self):
        return [e.pvalue for e in self.entries]

    def to_dict(self):
        return {
            "kind": self.kind,
            "parameter": self.parameter,
            "level": self.level,
            "thresholds": list(self.thresholds),
            "entries": [e.__dict__ for e in self.entries],
        }

    def to_frame(self):
        return pd.DataFrame([e.__dict__ for e in self.entries])


def _check_thresholds(thresholds, least):
    u = tuple(float(x) for x in thresholds)
    if len(u) < least:
        raise ElifeValidationError(
            "need at least {} threshold(s)".format(least))
    if any(b <= a for a, b in zip(u, u[1:])):
        raise ElifeValidationError(
            "thresholds must be strictly increasing, got {}".format(list(u))
        )
    return u


def _run(worker, tasks, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(worker, tasks))
    return [worker(t) for t in tasks]


def _stability(args):
    d, u, family, level, min_weight = args
    n = 0.0
    try:
        ex = to_exceedances(d, ExceedanceConfig(u))
        n = ex.total_weight
        if n < min_weight:
            raise ElifeValidationError(
                "only {:g} exceedances above {:g}".format(n, u)
            )
        fr = fit(ex, family)
        curve = profile_parameter(fr, "shape", level=level)
    except (ElifeNumericalError, ElifeValidationError) as e:
        log.warning("threshold %g failed: %s", u, e)
        return ThresholdEstimate(u, n, failed=True, message=str(e))
    return ThresholdEstimate(u, n, fr.estimates["shape"],
                             curve.lower, curve.upper)


def tstab(d: Dataset, thresholds: Sequence[float], family="gp",
          level=DEFAULT_LEVEL, min_weight=MIN_WEIGHT,
          jobs: int = 1) -> ThresholdDiag:
    """Shape estimates with profile likelihood intervals at each threshold.

    A threshold whose fit fails is marked and the others still run.
    """
    u = _check_thresholds(thresholds, 1)
    tasks = [(d, x, family, level, min_weight) for x in u]
    entries = _run(_stability, tasks, jobs)
    return ThresholdDiag("tstab", "shape", u, tuple(entries), level)


def _score(args):
    d, u, k = args
    base = u[k]
    try:
        ex = to_exceedances(d, ExceedanceConfig(base))
        null = fit(ex, "gp")
    except (ElifeNumericalError, ElifeValidationError) as e:
        log.warning("null fit above %g failed: %s", base, e)
        return ThresholdEstimate(base, 0.0, failed=True, message=str(e))
    sigma, xi = null.estimates.values
    breaks = [x - base for x in u[k:]]
    df = len(breaks) - 1
    try:
        p = gppiece_params(sigma, [xi] * len(breaks), breaks)
    except ElifeValidationError as e:
        return ThresholdEstimate(base, ex.total_weight, xi, df=df,
                                 failed=True, message=str(e))
    f = loglik_function(ex, p.family)
    theta = p.array
    g = gradient(f, theta)
    try:
        vcov = invert_information(hessian(f, theta))
    except SingularInformationError as e:
        log.warning("score test above %g: %s", base, e)
        return ThresholdEstimate(base, ex.total_weight, xi, df=df,
                                 failed=True, message=str(e))
    statistic = float(max(g @ vcov @ g, 0.0))
    pvalue = float(stats.chi2.sf(statistic, df))
    if not math.isfinite(statistic):
        return ThresholdEstimate(base, ex.total_weight, xi, df=df,
                                 failed=True, message="score not finite")
    log.debug("score test above %g: %.4f on %d df", base, statistic, df)
    return ThresholdEstimate(base, ex.total_weight, xi, statistic=statistic,
                             pvalue=pvalue, df=df)


def nc_score_test(d: Dataset, thresholds: Sequence[float],
                  jobs: int = 1) -> ThresholdDiag:
    """Score tests of equal shapes above each threshold.

    For each ``u_k`` but the last, the generalized Pareto model above
    ``u_k`` is the null and the piecewise model with breaks at the higher
    thresholds the alternative. Only the null is fitted; the score and the
    observed information of the piecewise model are evaluated at the null
    estimate. ``pvalue`` is ``None`` where the information is singular.
    """
    u = _check_thresholds(thresholds, 2)
    entries = _run(_score, [(d, u, k) for k in range(len(u) - 1)], jobs)
    return ThresholdDiag("ncscore", "shape", u[:-1], tuple(entries))
