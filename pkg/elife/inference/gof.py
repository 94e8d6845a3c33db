"""Chi-squared goodness-of-fit for cohort-by-age-band count tables.

Cohorts are the distinct truncation windows of the exceedances; columns are
the distinct age bands, with every band starting at or above ``pool_min``
merged into one. The null distribution is simulated from the fitted model
holding the cohort totals fixed.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import (
    dataclass,
    field,
)
from logging import getLogger
import math
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from .. import families
from ..data_model import (
    Dataset,
    ExceedanceConfig,
    to_exceedances,
)
from ..errors import (
    DegenerateTableError,
    ElifeNumericalError,
    ElifeValidationError,
)
from ..optim_fit import (
    fit,
    FitOptions,
    FitResult,
)
from ..sampling import (
    bootstrap_pvalue,
    build_template,
    MIN_REPLICATES,
    Seed,
    simulate_template,
)

log = getLogger(__name__)

POOL_MIN = 5.0


@dataclass(frozen=True, eq=False)
class ChisqGofResult:
    family: str
    statistic: float
    pvalue: float
    asymptotic_pvalue: float
    df: int
    observed: pd.DataFrame = field(repr=False)
    expected: pd.DataFrame = field(repr=False)
    replicates: np.ndarray = field(repr=False)
    B: int = 0
    pool_min: float = POOL_MIN

    @property
    def n_failed(self):
        return int(np.sum(np.isnan(self.replicates)))

    def to_dict(self):
        return {
            "family": self.family,
            "statistic": self.statistic,
            "pvalue": self.pvalue,
            "asymptotic_pvalue": self.asymptotic_pvalue,
            "df": self.df,
            "B": self.B,
            "n_failed": self.n_failed,
            "pool_min": self.pool_min,
            "observed": self.observed.to_dict(orient="split"),
            "expected": self.expected.to_dict(orient="split"),
        }


def chisq_statistic(observed, expected):
    """Pearson statistic over the cells with positive expectation."""
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    cells = e > 0
    return float(np.sum((o[cells] - e[cells]) ** 2 / e[cells]))


@dataclass(frozen=True)
class _Layout:
    cohorts: tuple
    edges: np.ndarray

    @property
    def columns(self):
        return ["[{:g}, {:g})".format(a, b)
                for a, b in zip(self.edges, self.edges[1:])]


def _cohorts(d: Dataset):
    a = d.arrays
    return list(zip(np.maximum(a.ltrunc1, 0.0), a.rtrunc1))


def _layout(d: Dataset, pool_min) -> _Layout:
    a = d.arrays
    if np.any((a.event != 1) & (a.event != 3)):
        raise ElifeValidationError(
            "a count table needs observed failures or interval-censored "
            "bands only"
        )
    starts = np.unique(a.time1[a.time1 < pool_min])
    edges = np.concatenate((starts, [pool_min, math.inf]))
    return _Layout(tuple(sorted(set(_cohorts(d)))), edges)


def _observed(d: Dataset, layout: _Layout):
    a = d.arrays
    rows = {c: i for i, c in enumerate(layout.cohorts)}
    table = np.zeros((len(rows), layout.edges.size - 1))
    col = np.clip(np.searchsorted(layout.edges, a.time1, side="right") - 1,
                  0, None)
    for cohort, j, w in zip(_cohorts(d), col, a.weight):
        table[rows[cohort], j] += w
    return table


def _expected(p, layout: _Layout, totals):
    table = np.zeros((len(layout.cohorts), layout.edges.size - 1))
    for i, (lower, upper) in enumerate(layout.cohorts):
        ends = np.clip(layout.edges, lower, upper)
        s = families.survival(p, ends)
        mass = families.survival(p, lower) - families.survival(p, upper)
        if mass > 0:
            table[i] = totals[i] * -np.diff(s) / mass
    return table


def _statistic(d, p, layout):
    observed = _observed(d, layout)
    expected = _expected(p, layout, observed.sum(axis=1))
    return chisq_statistic(observed, expected), observed, expected


def _replicate(args):
    template, fr, layout, child, granularity, options = args
    try:
        d = simulate_template(template, fr.estimates, child, granularity)
        refit = fit(d, fr.family, starts=[fr.estimates], options=options)
        return _statistic(d, refit.estimates, layout)[0]
    except (ElifeNumericalError, ElifeValidationError, KeyError) as e:
        log.debug("chi-squared replicate failed: %s", e)
        return math.nan


def chisq_gof(d: Dataset, fr: FitResult, pool_min=POOL_MIN, B: int = 999,
              seed: Seed = None, cfg: Optional[ExceedanceConfig] = None,
              granularity=1.0, jobs: int = 1) -> ChisqGofResult:
    """Pearson test of a fitted model on an aggregated cohort table.

    ``d`` holds the exceedances the model was fitted to (or the raw data
    with ``cfg``). ``pool_min`` is on the exceedance scale.
    """
    if B < MIN_REPLICATES:
        raise ElifeValidationError(
            "need at least {} simulated tables".format(MIN_REPLICATES))
    if seed is None:
        raise ElifeValidationError("the simulated p-value needs a seed")
    if cfg is not None:
        d = to_exceedances(d, cfg)
    if d.thresh != fr.thresh:
        raise ElifeValidationError(
            "data above {} but model fitted above {}".format(d.thresh,
                                                            fr.thresh)
        )
    layout = _layout(d, pool_min)
    statistic, observed, expected = _statistic(d, fr.estimates, layout)
    empty = np.flatnonzero(observed.sum(axis=0) == 0)
    if empty.size:
        raise DegenerateTableError(
            "age band {} has no observations".format(
                layout.columns[empty[0]]))
    if np.any(observed.sum(axis=1) == 0):
        raise DegenerateTableError("a cohort has no observations")
    k, c = observed.shape[1], observed.shape[0]
    df = max((k - 1) * (c - 1), 1)
    options = FitOptions(n_jitter=0, nested_starts=False, compute_se=False,
                         polish=False)
    root = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    template = build_template(d)
    tasks = [(template, fr, layout, child, granularity, options)
             for child in root.spawn(B)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            replicates = np.array(list(executor.map(_replicate, tasks,
                                                    chunksize=8)))
    else:
        replicates = np.array([_replicate(t) for t in tasks])
    pvalue = bootstrap_pvalue(statistic, replicates)
    index = ["({:g}, {:g}]".format(lo, hi) for lo, hi in layout.cohorts]
    result = ChisqGofResult(
        family=fr.family.name,
        statistic=statistic,
        pvalue=pvalue,
        asymptotic_pvalue=float(stats.chi2.sf(statistic, df)),
        df=df,
        observed=pd.DataFrame(observed, index=index, columns=layout.columns),
        expected=pd.DataFrame(expected, index=index, columns=layout.columns),
        replicates=replicates,
        B=B,
        pool_min=pool_min,
    )
    log.info("chi-squared goodness of fit for %s: %.3f, p-value %.4g (%d "
             "failed tables)", fr.family.name, statistic, pvalue,
             result.n_failed)
    return result
