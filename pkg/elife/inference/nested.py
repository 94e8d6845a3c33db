"""Likelihood ratio tests between nested families and between strata."""

from dataclasses import dataclass
from logging import getLogger
import math
from typing import (
    Hashable,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from scipy import stats

from ..data_model import (
    Dataset,
    ExceedanceConfig,
    to_exceedances,
)
from ..errors import (
    ElifeValidationError,
    EmptyStratumError,
    InvalidThresholdError,
    NoExceedancesError,
    NotNestedError,
    OptimizationOrderError,
)
from ..likelihood import loglik
from ..nesting import (
    comparison_edge,
    find_edge,
)
from ..optim_fit import (
    fit,
    FitResult,
)

log = getLogger(__name__)

ORDER_TOL = 1e-8


def mixture_pvalue(statistic, mixture):
    """``sum_k w_k P(chi2_k > statistic)``; ``chi2_0`` is a point mass at 0.
    """
    statistic = max(0.0, float(statistic))
    p = 0.0
    for weight, df in mixture:
        if df > 0:
            p += weight * float(stats.chi2.sf(statistic, df))
    return min(1.0, max(0.0, p))


def describe_mixture(mixture):
    if len(mixture) == 1:
        return "chi2({})".format(mixture[0][1])
    return " + ".join("{:g} chi2({})".format(w, df) for w, df in mixture)


@dataclass(frozen=True)
class NestedTestResult:
    null: str
    alt: str
    statistic: float
    mixture: Tuple[Tuple[float, int], ...]
    pvalue: float
    method: str = "asymptotic"
    replicates: Optional[int] = None

    @property
    def df(self):
        return max((df for _, df in self.mixture), default=None)

    @property
    def description(self):
        if self.method == "bootstrap":
            return "parametric bootstrap, {} replicates".format(
                self.replicates)
        return describe_mixture(self.mixture)

    def to_dict(self):
        return {
            "null": self.null,
            "alt": self.alt,
            "statistic": self.statistic,
            "mixture": [list(m) for m in self.mixture],
            "df": self.df,
            "description": self.description,
            "pvalue": self.pvalue,
            "method": self.method,
            "replicates": self.replicates,
        }

    @classmethod
    def from_bootstrap(cls, result):
        """Wrap a :class:`~elife.sampling.BootstrapResult`."""
        try:
            mixture = find_edge(result.null, result.alt).mixture
        except NotNestedError:
            mixture = ()
        return cls(
            null=result.null,
            alt=result.alt,
            statistic=result.statistic,
            mixture=mixture,
            pvalue=result.pvalue,
            method="bootstrap",
            replicates=int(np.sum(~result.failed)),
        )


def lrt_nested(fit0: FitResult, fit1: FitResult,
               d: Optional[Dataset] = None) -> NestedTestResult:
    """Deviance test of the smaller family against the larger one.

    The arguments may come in either order. When ``d`` is given, both log
    likelihoods are recomputed on its exceedances.
    """
    edge = comparison_edge(fit0.family.name, fit1.family.name)
    if edge.sub != fit0.family.name:
        fit0, fit1 = fit1, fit0
    if fit0.thresh != fit1.thresh:
        raise ElifeValidationError(
            "fits use different thresholds ({} and {})".format(
                fit0.thresh, fit1.thresh)
        )
    ll0, ll1 = fit0.loglik, fit1.loglik
    if d is not None:
        ex = to_exceedances(d, ExceedanceConfig(fit0.thresh))
        ll0, ll1 = loglik(ex, fit0.estimates), loglik(ex, fit1.estimates)
    if ll1 < ll0 - ORDER_TOL:
        raise OptimizationOrderError(
            "log likelihood of {} ({:.6f}) is below that of its submodel {} "
            "({:.6f}); refit with other starting values".format(
                edge.sup, ll1, edge.sub, ll0)
        )
    statistic = max(0.0, 2.0 * (ll1 - ll0))
    pvalue = mixture_pvalue(statistic, edge.mixture)
    log.info("%s vs %s: deviance %.4f, %s, p-value %.4g", edge.sub,
             edge.sup, statistic, describe_mixture(edge.mixture), pvalue)
    return NestedTestResult(edge.sub, edge.sup, statistic, edge.mixture,
                            pvalue)


@dataclass(frozen=True)
class AnovaRow:
    family: str
    npar: int
    deviance: float
    statistic: Optional[float] = None
    pvalue: Optional[float] = None
    description: str = ""


@dataclass(frozen=True)
class AnovaTable:
    rows: Tuple[AnovaRow, ...]
    tests: Tuple[NestedTestResult, ...]

    def to_dict(self):
        return {
            "rows": [r.__dict__ for r in self.rows],
            "tests": [t.to_dict() for t in self.tests],
        }

    def __str__(self):
        lines = ["{:<12} {:>4} {:>12} {:>10} {:>12}".format(
            "", "npar", "Deviance", "Chisq", "Pr(>Chisq)")]
        for r in self.rows:
            lines.append("{:<12} {:>4d} {:>12.3f} {:>10} {:>12}".format(
                r.family, r.npar, r.deviance,
                "" if r.statistic is None else "{:.3f}".format(r.statistic),
                "" if r.pvalue is None else "{:.4g}".format(r.pvalue),
            ))
        return "\n".join(lines)


def anova(*fits: FitResult) -> AnovaTable:
    """Analysis of deviance for a sequence of nested fits.

    Fits are ordered by number of parameters and each consecutive pair is
    tested with :func:`lrt_nested`.
    """
    if len(fits) < 2:
        raise ElifeValidationError("anova needs at least two fits")
    ordered = sorted(fits, key=lambda f: f.n_params)
    rows = [AnovaRow(ordered[0].family.name, ordered[0].n_params,
                     ordered[0].deviance)]
    tests = []
    for small, big in zip(ordered, ordered[1:]):
        test = lrt_nested(small, big)
        tests.append(test)
        rows.append(AnovaRow(big.family.name, big.n_params, big.deviance,
                             test.statistic, test.pvalue, test.description))
    return AnovaTable(tuple(rows), tuple(tests))


def test_strata(d: Dataset, family, cfg: Optional[ExceedanceConfig] = None,
                labels: Optional[Sequence[Hashable]] = None,
                thresholds=None) -> NestedTestResult:
    """Test whether strata share their parameters.

    Records are split by ``labels`` (their stratum labels by default)
    before taking exceedances. The statistic compares the sum of per-stratum
    maxima with the pooled maximum on ``(K - 1) * npar`` degrees of freedom.
    """
    groups = d.split(labels)
    if len(groups) < 2:
        raise EmptyStratumError("need at least two strata", None)
    cfg = cfg or ExceedanceConfig(d.thresh)
    pooled = fit(d, family, cfg, thresholds=thresholds)
    total = 0.0
    for label, sub in groups.items():
        try:
            stratum_fit = fit(sub, family, cfg, thresholds=thresholds)
        except (NoExceedancesError, InvalidThresholdError):
            raise EmptyStratumError(
                "stratum {!r} has no exceedances above {}".format(
                    label, cfg.thresh), label
            ) from None
        log.debug("stratum %r: loglik %.6f", label, stratum_fit.loglik)
        total += stratum_fit.loglik
    df = (len(groups) - 1) * pooled.n_params
    statistic = max(0.0, 2.0 * (total - pooled.loglik))
    pvalue = float(stats.chi2.sf(statistic, df))
    if not math.isfinite(statistic):
        raise OptimizationOrderError("stratified log likelihood not finite")
    log.info("%d strata, %s: statistic %.4f on %d df, p-value %.4g",
             len(groups), pooled.family.name, statistic, df, pvalue)
    return NestedTestResult(
        null="pooled {}".format(pooled.family.name),
        alt="stratified {}".format(pooled.family.name),
        statistic=statistic,
        mixture=((1.0, df),),
        pvalue=pvalue,
    )


# not a test case
test_strata.__test__ = False
