import math

import numpy as np
import pytest
from scipy import optimize

from .. import errors
from ..data_model import (
    Dataset,
    ExceedanceConfig,
    load_japanese_female,
    to_exceedances,
)
from ..families import (
    get_family,
    params,
)
from ..likelihood import loglik
from ..optim_fit import (
    _Fitter,
    constrained_fit,
    fit,
    fit_many,
    FitOptions,
    invert_information,
    moment_start,
    NU_FLOOR,
    search_lower,
    standard_errors,
)
from ._common import (
    exact,
    gp_exceedances,
    simulate,
)


@pytest.fixture(scope="module")
def decreasing_hazard():
    return simulate("weibull", (1.0, 0.5), 500, seed=7).to_dataset()


@pytest.fixture(scope="module")
def gp_sample():
    return gp_exceedances(2000, 1.0, 0.1, seed=1)


def test_exponential_closed_form():
    t = np.array([0.4, 1.3, 2.2, 0.7, 5.1])
    fr = fit(exact(t), "exp")
    assert fr.converged
    assert fr.estimates["scale"] == pytest.approx(t.mean(), rel=1e-6)
    assert fr.se["scale"] == pytest.approx(t.mean() / math.sqrt(t.size),
                                           rel=1e-4)


def test_right_censored_exponential():
    d = Dataset.from_arrays([1.0, 2.0, 3.0, 4.0],
                            time2=[1.0, 2.0, math.inf, math.inf],
                            event=[1, 1, 0, 0])
    fr = fit(d, "exp")
    assert fr.estimates["scale"] == pytest.approx(5.0, rel=1e-6)
    assert fr.se["scale"] == pytest.approx(5.0 / math.sqrt(2), rel=1e-4)


def test_weights_act_as_replication():
    by_weight = fit(exact([1.0, 2.0], weights=[1, 3]), "weibull")
    replicated = fit(exact([1.0, 2.0, 2.0, 2.0]), "weibull")
    np.testing.assert_allclose(by_weight.estimates.values,
                               replicated.estimates.values, rtol=1e-5)
    assert by_weight.loglik == pytest.approx(replicated.loglik, rel=1e-9)


def test_gp_recovers_truth(gp_sample):
    fr = fit(gp_sample, "gp")
    assert fr.converged
    assert fr.estimates["scale"] == pytest.approx(1.0, abs=0.15)
    assert fr.estimates["shape"] == pytest.approx(0.1, abs=0.1)
    assert set(fr.free_params) == {"scale", "shape"}
    assert fr.vcov.shape == (2, 2)


def test_loglik_matches_estimates(gp_sample):
    fr = fit(gp_sample, "gp")
    assert fr.loglik == pytest.approx(loglik(gp_sample, fr.estimates),
                                      rel=1e-12)
    assert fr.deviance == pytest.approx(-2 * fr.loglik)


def test_boundary_estimate(decreasing_hazard):
    gomp = fit(decreasing_hazard, "gomp")
    expo = fit(decreasing_hazard, "exp")
    assert gomp.boundary["beta"]
    assert gomp.se["beta"] is None
    assert gomp.se["scale"] is not None
    assert gomp.loglik == pytest.approx(expo.loglik, rel=1e-7)
    assert "(boundary)" in gomp.summary()


def test_nested_fit_never_worse(decreasing_hazard):
    sub = fit(decreasing_hazard, "weibull")
    sup = fit(decreasing_hazard, "extweibull")
    assert sup.loglik >= sub.loglik - 1e-6


def test_threshold_config():
    d = exact([1.0, 2.0, 4.0, 7.0])
    fr = fit(d, "exp", ExceedanceConfig(1.5))
    assert fr.thresh == 1.5
    assert fr.n_exceedances == 3
    assert fr.estimates["scale"] == pytest.approx((0.5 + 2.5 + 5.5) / 3,
                                                  rel=1e-6)


def test_fit_many_shares_exceedances(gp_sample):
    fits = fit_many(gp_sample, ["exp", "gp"])
    assert [f.family.name for f in fits] == ["exp", "gp"]
    assert fits[1].loglik >= fits[0].loglik


def test_constrained_fit(gp_sample):
    theta, ll = constrained_fit(gp_sample, "gp", {"shape": 0.0})
    assert theta[1] == 0.0
    expo = fit(gp_sample, "exp")
    assert theta[0] == pytest.approx(expo.estimates["scale"], rel=1e-5)
    assert ll == pytest.approx(expo.loglik, rel=1e-9)


def test_standard_errors_recomputed(gp_sample):
    fr = fit(gp_sample, "gp")
    se = standard_errors(fr)
    assert se["shape"] == pytest.approx(fr.se["shape"], rel=1e-8)


def test_options_skip_standard_errors():
    fr = fit(exact([1.0, 2.0, 3.0]), "exp",
             options=FitOptions(compute_se=False))
    assert fr.se == {"scale": None}
    assert fr.vcov is None


def test_explicit_start():
    fr = fit(exact([1.0, 2.0, 3.0]), "exp", starts=[(10.0,)],
             options=FitOptions(n_jitter=0, nested_starts=False))
    assert fr.estimates["scale"] == pytest.approx(2.0, rel=1e-6)


def test_moment_start():
    assert moment_start(exact([1.0, 3.0]), get_family("gp")) == (2.0, 0.05)


def test_information_must_be_positive_definite():
    with pytest.raises(errors.SingularInformationError):
        invert_information(np.array([[1.0]]))
    np.testing.assert_allclose(invert_information(np.array([[-4.0]])),
                               [[0.25]])


def test_summary_and_dict():
    fr = fit(exact([1.0, 2.0, 3.0]), "exp")
    text = fr.summary()
    assert text.startswith("Model: exp distribution.")
    assert "Convergence: TRUE" in text
    out = fr.to_dict()
    assert out["family"] == "exp"
    assert out["estimates"]["scale"] == pytest.approx(2.0, rel=1e-6)
    assert out["deviance"] == pytest.approx(-2 * out["loglik"])


def test_parameters_round_trip_into_loglik():
    fr = fit(exact([0.5, 1.5]), "exp")
    assert loglik(exact([0.5, 1.5]), params("exp", 1.0)) <= fr.loglik


def _refined_maximum(f, start):
    """Nelder-Mead followed by a shrinking 3 x 3 grid search."""
    res = optimize.minimize(lambda theta: -f(theta), start,
                            method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12,
                                     "maxiter": 20000})
    best, value = np.asarray(res.x, dtype=float), f(res.x)
    offsets = [np.array((i, j)) for i in (-1, 0, 1) for j in (-1, 0, 1)]
    step = 1e-3
    while step > 1e-10:
        grid = [best + step * o for o in offsets]
        values = [f(g) for g in grid]
        k = int(np.argmax(values))
        if values[k] > value:
            best, value = grid[k], values[k]
        else:
            step /= 2
    return best, value


def _central_hessian(f, theta, rel=1e-4):
    h = rel * np.maximum(1.0, np.abs(theta))
    k = theta.size
    out = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            ei, ej = np.eye(k)[i] * h[i], np.eye(k)[j] * h[j]
            out[i, j] = (f(theta + ei + ej) - f(theta + ei - ej)
                         - f(theta - ei + ej) + f(theta - ei - ej)) / (
                4 * h[i] * h[j])
    return out


@pytest.mark.slow
def test_gompertz_on_japanese_matches_grid_refined_maximum():
    ex = to_exceedances(load_japanese_female(), ExceedanceConfig(108))
    fr = fit(ex, "gomp")

    def f(theta):
        if not (theta[0] > 0 and theta[1] >= 0):
            return -math.inf
        return loglik(ex, params("gomp", *theta))

    best, value = _refined_maximum(f, [2.0, 0.05])
    assert not fr.boundary["beta"]
    assert fr.loglik == pytest.approx(value, abs=1e-4)
    np.testing.assert_allclose(fr.estimates.values, best, rtol=1e-4)
    se = np.sqrt(np.diag(np.linalg.inv(-_central_hessian(f, best))))
    np.testing.assert_allclose([fr.se["scale"], fr.se["beta"]], se,
                               rtol=1e-3)


@pytest.mark.parametrize(("family", "name", "expected"), (
    ("perksmake", "nu", NU_FLOOR),
    ("beardmake", "nu", NU_FLOOR),
    ("gompmake", "beta", 0.0),
    ("perks", "nu", 0.0),
    ("gp", "shape", -1.0),
))
def test_search_lower(family, name, expected):
    fam = get_family(family)
    assert search_lower(fam, fam.param_names.index(name)) == expected


def test_makeham_nu_never_held_below_floor(mocker):
    d = simulate("exp", (1.0,), 300, seed=9).to_dataset()
    spy = mocker.spy(_Fitter, "_search")
    fr = fit(d, "perksmake")
    j = fr.family.param_names.index("nu")
    held = [c.args[2][j] for c in spy.call_args_list if j in c.args[2]]
    assert all(v >= NU_FLOOR for v in held)
    assert fr.estimates["nu"] >= NU_FLOOR
