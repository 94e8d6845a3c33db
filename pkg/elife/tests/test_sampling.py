import math

import numpy as np
import pytest
from scipy import stats

from .. import (
    errors,
    families,
)
from ..data_model import (
    ExceedanceConfig,
    load_japanese_female,
    to_exceedances,
)
from ..families import (
    gppiece_params,
    params,
)
from ..sampling import (
    bootstrap_lrt,
    bootstrap_pvalue,
    build_template,
    discretize,
    generator,
    sample_elife,
    SamplingScheme,
    simulate_template,
)
from ._common import (
    exact,
    gp_exceedances,
    JAPANESE_WEIGHT_ABOVE_108,
)


@pytest.fixture(scope="module")
def japanese_exceedances():
    return to_exceedances(load_japanese_female(), ExceedanceConfig(108))


def test_identical_seeds_identical_draws():
    p = params("gomp", 1.5, 0.2)
    first = sample_elife(50, p, seed=42)
    again = sample_elife(50, p, seed=42)
    other = sample_elife(50, p, seed=43)
    np.testing.assert_array_equal(first.time, again.time)
    assert not np.array_equal(first.time, other.time)


def test_generator_passes_through():
    rng = generator(1)
    assert generator(rng) is rng


def test_truncated_exponential_distribution():
    p = params("exp", 1.0)
    s = sample_elife(2000, p, SamplingScheme("ltrt", 0.5, 2.0), seed=2)
    assert np.all((s.time > 0.5) & (s.time < 2.0))
    norm = math.exp(-0.5) - math.exp(-2.0)

    def cdf(x):
        return (math.exp(-0.5) - np.exp(-x)) / norm

    assert stats.kstest(s.time, cdf).pvalue > 1e-3


def test_per_record_windows():
    lower = np.array([0.0, 1.0, 2.0, 3.0])
    upper = lower + 0.25
    s = sample_elife(4, params("gp", 1.0, 0.1),
                     SamplingScheme("ltrt", lower, upper), seed=3)
    assert np.all((s.time > lower) & (s.time < upper))
    np.testing.assert_array_equal(s.ltrunc, lower)


def test_left_truncated_right_censored():
    p = params("exp", 1.0)
    s = sample_elife(5000, p, SamplingScheme("ltrc", 0.5, 1.5), seed=4)
    censored = s.event == 0
    assert np.mean(censored) == pytest.approx(math.exp(-1.0), abs=0.03)
    assert np.all(s.time[censored] == 1.5)
    assert np.all(s.time[~censored] > 0.5)
    d = s.to_dataset()
    assert all(r.rtrunc1 == math.inf for r in d)


def test_doubly_truncated_draws():
    p = params("exp", 1.0)
    scheme = SamplingScheme("ditrunc", 0.0, 1.0, 2.0, 4.0)
    s = sample_elife(4000, p, scheme, seed=5)
    first = s.time <= 1.0
    assert np.all(first | ((s.time > 2.0) & (s.time < 4.0)))
    mass1 = 1 - math.exp(-1.0)
    mass2 = math.exp(-2.0) - math.exp(-4.0)
    assert np.mean(~first) == pytest.approx(mass2 / (mass1 + mass2),
                                            abs=0.02)
    assert s.to_frame().columns.tolist() == [
        "time", "event", "ltrunc", "rtrunc", "ltrunc2", "rtrunc2"]


def test_window_without_mass():
    with pytest.raises(errors.ZeroMassError):
        sample_elife(3, params("gp", 1.0, -0.5),
                     SamplingScheme("ltrt", 3.0, 4.0), seed=1)


@pytest.mark.parametrize(("kwargs",), (
    ({"kind": "weird"},),
    ({"kind": "ltrt", "lower": 2.0, "upper": 1.0},),
    ({"kind": "ltrt", "lower": -1.0},),
    ({"kind": "ditrunc", "lower": 0.0, "upper": 2.0},),
    ({"kind": "ditrunc", "lower": 0.0, "upper": 2.0, "lower2": 1.0,
      "upper2": 3.0},),
))
def test_invalid_schemes(kwargs):
    with pytest.raises(errors.ElifeValidationError):
        SamplingScheme(**kwargs)


def test_sample_size_positive():
    with pytest.raises(errors.ElifeValidationError):
        sample_elife(0, params("exp", 1.0), seed=1)


def test_unbounded_draws_follow_quantiles():
    p = params("weibull", 2.0, 1.5)
    s = sample_elife(4000, p, seed=6)
    assert stats.kstest(s.time, lambda x: families.cdf(p, x)).pvalue > 1e-3


TRUNCATION_LEVELS = ((0.0, 0.5), (0.2, 0.9), (0.5, 0.999))

SAMPLER_PARAMS = {
    "exp": params("exp", 2.0),
    "gomp": params("gomp", 1.5, 0.2),
    "gp": params("gp", 1.0, -0.2),
    "weibull": params("weibull", 2.0, 1.5),
    "extgp": params("extgp", 1.5, 0.1, 0.2),
    "extweibull": params("extweibull", 2.0, 1.5, 0.3),
    "perks": params("perks", 0.5, 0.1),
    "beard": params("beard", 0.1, 0.2, 2.0),
    "gompmake": params("gompmake", 0.05, 1.5, 0.2),
    "perksmake": params("perksmake", 0.01, 0.5, 0.1),
    "beardmake": params("beardmake", 0.02, 0.1, 0.2, 2.0),
    "gppiece": gppiece_params(1.0, [0.1, -0.1], [0.0, 1.0]),
}


@pytest.mark.parametrize(("family", "levels"), (
    (family, levels) for family in families.FAMILY_NAMES
    for levels in TRUNCATION_LEVELS
))
def test_truncated_draws_follow_conditional_distribution(family, levels):
    p = SAMPLER_PARAMS[family]
    lower = 0.0 if levels[0] == 0 else families.quantile(p, levels[0])
    upper = families.quantile(p, levels[1])
    s = sample_elife(100_000, p, SamplingScheme("ltrt", lower, upper),
                     seed=[families.FAMILY_NAMES.index(family), 7])
    assert np.all((s.time >= lower) & (s.time <= upper))
    s_lower = families.survival(p, lower)
    mass = s_lower - families.survival(p, upper)

    def cdf(x):
        return (s_lower - families.survival(p, x)) / mass

    # one percent across the whole grid
    alpha = 0.01 / (len(families.FAMILY_NAMES) * len(TRUNCATION_LEVELS))
    assert stats.kstest(s.time, cdf).pvalue > alpha



def test_template_counts(japanese_exceedances):
    template = build_template(japanese_exceedances)
    assert template.count.sum() == JAPANESE_WEIGHT_ABOVE_108
    assert template.thresh == 108
    assert np.all(template.ltrunc == 0)


def test_template_needs_integer_weights():
    halves = exact([0.5, 1.0, 2.0, 3.0, 4.0], weights=0.5)
    with pytest.raises(errors.ElifeValidationError):
        build_template(halves)


def test_simulated_template_keeps_frame(japanese_exceedances):
    template = build_template(japanese_exceedances)
    d = simulate_template(template, params("gomp", 1.7, 0.1), seed=8)
    assert d.total_weight == JAPANESE_WEIGHT_ABOVE_108
    assert d.thresh == 108
    assert all(r.event == 3 for r in d)
    assert {r.rtrunc1 for r in d} <= set(template.rtrunc)


def test_simulated_template_without_binning():
    d = gp_exceedances(20, 1.0, 0.1, seed=2)
    out = simulate_template(build_template(d), params("gp", 1.0, 0.1),
                            seed=9, granularity=None)
    assert len(out) == 20
    assert all(r.event == 1 for r in out)


@pytest.mark.parametrize(("x", "lower", "upper", "g", "expected"), (
    (2.3, 0.0, 10.0, 1.0, (2.0, 3.0)),
    (2.3, 2.1, 10.0, 1.0, (2.1, 3.1)),
    (9.6, 0.0, 9.8, 1.0, (9.0, 9.8)),
    (0.26, 0.0, math.inf, 0.25, (0.25, 0.5)),
))
def test_discretize(x, lower, upper, g, expected):
    y, z = discretize(np.array([x]), lower, upper, g)
    assert (float(y[0]), float(z[0])) == pytest.approx(expected)


def test_bootstrap_pvalue_counts_ties():
    replicates = np.array([1.0, 2.0, 3.0, math.nan])
    assert bootstrap_pvalue(2.0, replicates) == pytest.approx(0.75)
    assert bootstrap_pvalue(10.0, replicates) == pytest.approx(0.25)


def test_bootstrap_needs_seed_and_replicates():
    d = gp_exceedances(30, 1.0, 0.1, seed=3)
    with pytest.raises(errors.ElifeValidationError):
        bootstrap_lrt(d, "exp", "gp", B=50, seed=1)
    with pytest.raises(errors.ElifeValidationError):
        bootstrap_lrt(d, "exp", "gp", B=99)


@pytest.mark.slow
def test_bootstrap_lrt_is_reproducible():
    d = gp_exceedances(80, 1.0, 0.1, seed=4)
    first = bootstrap_lrt(d, "exp", "gp", B=99, seed=12, granularity=None)
    again = bootstrap_lrt(d, "exp", "gp", B=99, seed=12, granularity=None)
    assert first.replicates.size == 99
    np.testing.assert_array_equal(first.replicates, again.replicates)
    assert 1 / 100 <= first.pvalue <= 1
    assert first.to_frame().shape == (99, 3)


def test_bootstrap_rejects_forbidden_pairs(mocker):
    refit = mocker.patch("elife.sampling.fit")
    d = gp_exceedances(30, 1.0, 0.1, seed=3)
    with pytest.raises(errors.ForbiddenComparisonError):
        bootstrap_lrt(d, "exp", "perksmake", B=99, seed=1)
    with pytest.raises(errors.NotNestedError):
        bootstrap_lrt(d, "gp", "weibull", B=99, seed=1)
    refit.assert_not_called()
