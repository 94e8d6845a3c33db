import math

import numpy as np
import pytest

from .. import (
    errors,
    families,
)
from ..data_model import (
    Dataset,
    ExceedanceConfig,
    LifetimeRecord,
    load_japanese_female,
    to_exceedances,
)
from ..families import params
from ..likelihood import (
    deviance,
    loglik,
    loglik_function,
    LoglikOptions,
)
from ._common import exact


def one(*args, **kwargs):
    return Dataset((LifetimeRecord(*args, **kwargs),))


def test_observed_exponential():
    assert loglik(one(1.0, 1.0, 1), params("exp", 1.0)) == \
        pytest.approx(-1.0, abs=1e-14)


def test_interval_censored_right_truncated():
    value = loglik(one(0.0, 1.0, 3, rtrunc1=2.0), params("exp", 1.0))
    expected = math.log((1 - math.exp(-1)) / (1 - math.exp(-2)))
    assert value == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize(("record", "expected"), (
    (LifetimeRecord(2.0, math.inf, 0), -2.0),
    (LifetimeRecord(-math.inf, 2.0, 2), math.log(1 - math.exp(-2))),
    (LifetimeRecord(-math.inf, 2.0, 2, ltrunc1=1.0),
     math.log(1 - math.exp(-1))),
    (LifetimeRecord(3.0, 3.0, 1, ltrunc1=1.0), -2.0),
    (LifetimeRecord(3.0, math.inf, 0, ltrunc1=1.0), -2.0),
))
def test_censoring_kinds(record, expected):
    value = loglik(Dataset((record,)), params("exp", 1.0))
    assert value == pytest.approx(expected, rel=1e-13)


def test_doubly_truncated_window():
    d = one(3.0, 3.0, 1, ltrunc1=0.0, rtrunc1=1.0, ltrunc2=2.0,
            rtrunc2=4.0)
    mass = (1 - math.exp(-1)) + (math.exp(-2) - math.exp(-4))
    expected = -3.0 - math.log(mass)
    assert loglik(d, params("exp", 1.0)) == pytest.approx(expected,
                                                          rel=1e-13)


def test_weights_multiply():
    p = params("gomp", 1.5, 0.2)
    single = loglik(exact([0.5, 2.0]), p)
    doubled = loglik(exact([0.5, 2.0], weights=[2.0, 2.0]), p)
    assert doubled == pytest.approx(2 * single, rel=1e-14)


def test_deep_tail_window_keeps_precision():
    # S(a) - S(b) by subtraction would lose every significant digit
    d = one(600.0, 600.5, 3)
    assert loglik(d, params("exp", 1.0)) == pytest.approx(
        -600.0 + math.log(1 - math.exp(-0.5)), rel=1e-13)


def test_impossible_record_gives_minus_infinity():
    d = exact([3.0])
    assert loglik(d, params("gp", 1.0, -0.5)) == -math.inf


def test_objective_rejects_inadmissible_values():
    f = loglik_function(exact([1.0, 2.0]), "gp")
    assert f((-1.0, 0.1)) == -math.inf
    assert math.isfinite(f((1.0, 0.1)))


def test_objective_matches_loglik():
    d = exact([0.2, 1.1, 3.4])
    p = params("weibull", 2.0, 1.3)
    assert loglik_function(d, "weibull")(p.array) == loglik(d, p)


def test_threshold_option():
    japanese = load_japanese_female()
    cfg = ExceedanceConfig(108)
    p = params("gomp", 1.7, 0.1)
    assert loglik(japanese, p, LoglikOptions(cfg)) == \
        loglik(to_exceedances(japanese, cfg), p)


def test_japanese_cells_by_direct_summation():
    ex = to_exceedances(load_japanese_female(), ExceedanceConfig(108))
    p = params("gomp", 1.7, 0.1)
    total = 0.0
    for r in ex:
        s = families.survival
        cell = s(p, r.time1) - s(p, r.time2)
        window = s(p, 0.0) - s(p, r.rtrunc1)
        total += r.weight * math.log(cell / window)
    assert loglik(ex, p) == pytest.approx(total, rel=1e-10)


@pytest.mark.parametrize(("value", "expected"), (
    (-3599.037, 7198.074),
    (0.0, 0.0),
    (-1.0, 2.0),
))
def test_deviance(value, expected, mocker):
    mocker.patch("elife.likelihood.loglik", return_value=value)
    assert deviance(None, None) == pytest.approx(expected)


def test_loglik_needs_parameter_vector():
    with pytest.raises(errors.ConstraintError):
        loglik(exact([1.0]), (1.0,))


@pytest.mark.parametrize(("floor",), ((0.0,), (1e-100,)))
def test_floor_range(floor):
    with pytest.raises(errors.ElifeValidationError):
        LoglikOptions(floor=floor)


def test_permutation_invariance():
    t = np.array([0.3, 1.7, 0.9, 2.2])
    p = params("extgp", 1.2, 0.3, 0.1)
    assert loglik(exact(t), p) == pytest.approx(loglik(exact(t[::-1]), p),
                                                rel=1e-14)
