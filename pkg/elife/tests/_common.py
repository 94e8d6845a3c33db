import math

import numpy as np

from ..data_model import (
    Dataset,
    LifetimeRecord,
)
from ..families import params
from ..sampling import (
    sample_elife,
    SamplingScheme,
)

# Table 1 counts for ages 108-117, summed over the six birth cohorts
JAPANESE_WEIGHT_ABOVE_108 = 2230

# (time, event) pairs of the product-limit toy data
TOY_TIMES = ((1.0, 0), (1.0, 1), (2.0, 1))

ALL_FAMILY_PARAMS = (
    ("exp", (2.0,)),
    ("gomp", (1.5, 0.2)),
    ("gp", (1.0, -0.2)),
    ("gp", (1.0, 0.3)),
    ("weibull", (2.0, 1.5)),
    ("extgp", (1.5, 0.1, 0.2)),
    ("extweibull", (2.0, 1.5, 0.3)),
    ("perks", (0.5, 0.1)),
    ("beard", (0.1, 0.2, 2.0)),
    ("gompmake", (0.05, 1.5, 0.2)),
    ("perksmake", (0.01, 0.5, 0.1)),
    ("beardmake", (0.02, 0.1, 0.2, 2.0)),
)


def exact(times, weights=None, **bounds):
    """Dataset of observed failures."""
    return Dataset.from_arrays(np.asarray(times, dtype=float),
                               weight=weights, **bounds)


def toy():
    return Dataset(tuple(
        LifetimeRecord(t, t if e else math.inf, e) for t, e in TOY_TIMES
    ))


def simulate(family, values, n, seed, scheme=None):
    return sample_elife(n, params(family, *values), scheme, seed)


def gp_exceedances(n, scale, shape, seed):
    return simulate("gp", (scale, shape), n, seed).to_dataset()


def interval_truncated(n, seed, scale=1.0, shape=-0.1):
    """gp lifetimes observed only inside per-record windows."""
    rng = np.random.default_rng(seed)
    lower = rng.uniform(0.0, 1.0, n)
    upper = lower + rng.uniform(1.0, 4.0, n)
    scheme = SamplingScheme("ltrt", lower, upper)
    return simulate("gp", (scale, shape), n, seed, scheme).to_dataset()
