import math

import numpy as np
import pytest
from scipy import optimize

from .. import errors
from ..data_model import (
    Dataset,
    ExceedanceConfig,
    LifetimeRecord,
    load_japanese_female,
)
from ..npmle import (
    _Problem,
    em_fit,
    eval_cdf,
    kkt_check,
    npmle,
    StepCDF,
    turnbull_intervals,
)
from ._common import (
    exact,
    interval_truncated,
    toy,
)


def test_toy_product_limit():
    scdf = npmle(toy())
    np.testing.assert_allclose(scdf.a, [1.0, 2.0])
    np.testing.assert_allclose(scdf.b, [1.0, 2.0])
    np.testing.assert_allclose(scdf.p, [1 / 3, 2 / 3], atol=1e-7)
    assert scdf.kkt.passed
    assert scdf.loglik == pytest.approx(math.log(4 / 27), abs=1e-9)


def test_distinct_exact_times_give_ecdf():
    t = [0.4, 2.5, 1.1, 3.3]
    scdf = npmle(exact(t))
    np.testing.assert_allclose(scdf.a, sorted(t))
    np.testing.assert_allclose(scdf.p, [0.25] * 4, atol=1e-7)
    assert scdf(2.5) == pytest.approx(0.75, abs=1e-7)


def test_kaplan_meier_oracle():
    d = Dataset.from_arrays(
        [1.0, 2.0, 3.0, 4.0, 5.0],
        time2=[1.0, math.inf, 3.0, math.inf, 5.0],
        event=[1, 0, 1, 0, 1],
    )
    scdf = npmle(d)
    np.testing.assert_allclose(scdf.a, [1.0, 3.0, 5.0])
    np.testing.assert_allclose(scdf.p, [1 / 5, 4 / 15, 8 / 15], atol=1e-6)
    np.testing.assert_allclose(scdf.survival([1.0, 3.0, 4.9]),
                               [4 / 5, 8 / 15, 8 / 15], atol=1e-6)


def test_left_truncated_product_limit():
    d = Dataset.from_arrays([2.0, 3.0, 4.0], ltrunc1=[0.0, 2.5, 0.0])
    scdf = npmle(d)
    np.testing.assert_allclose(scdf.p, [0.5, 0.25, 0.25], atol=1e-6)
    assert scdf.kkt.passed


def test_overlapping_censoring_intervals():
    d = Dataset((LifetimeRecord(0.0, 2.0, 3), LifetimeRecord(1.0, 3.0, 3)))
    iv = turnbull_intervals(d)
    assert iv.as_pairs() == [(1.0, 2.0)]
    assert iv.left_open.tolist() == [True]
    scdf = npmle(d)
    assert scdf(1.5, "interpolate") == pytest.approx(0.5)
    assert scdf(1.5, "right") == pytest.approx(1.0)
    assert scdf(1.5, "left") == pytest.approx(0.0)


@pytest.mark.parametrize(("t", "expected"), (
    (0.5, 0.0),
    (1.0, 1 / 3),
    (1.5, 1 / 3),
    (2.0, 1.0),
    (9.0, 1.0),
))
def test_eval_cdf_steps(t, expected):
    scdf = npmle(toy())
    assert eval_cdf(scdf, t) == pytest.approx(expected, abs=1e-7)


def test_eval_cdf_is_monotone():
    scdf = npmle(interval_truncated(300, seed=3))
    grid = np.linspace(0, 12, 200)
    for convention in ("left", "right", "interpolate"):
        values = eval_cdf(scdf, grid, convention)
        assert np.all(np.diff(values) >= 0)
        assert values[0] >= 0 and values[-1] <= 1


def test_unknown_convention():
    with pytest.raises(errors.DomainError):
        eval_cdf(npmle(toy()), 1.0, "middle")


def test_em_never_decreases(monkeypatch):
    d = interval_truncated(200, seed=11)
    iv = turnbull_intervals(d)
    original = _Problem.step
    seen = []

    def step(self, p):
        new, ll = original(self, p)
        seen.append(ll)
        return new, ll

    monkeypatch.setattr(_Problem, "step", step)
    scdf = em_fit(d, iv)
    assert np.all(np.diff(seen) >= -1e-10 * max(1.0, abs(seen[-1])))
    assert scdf.converged
    assert scdf.loglik >= seen[0]


def test_truncated_npmle():
    d = interval_truncated(300, seed=5)
    scdf = npmle(d)
    assert np.sum(scdf.p) == pytest.approx(1.0)
    assert np.all(scdf.p >= 0)
    report = kkt_check(scdf, d)
    assert report.passed == (not report.violations)


def test_maxit_with_failed_check_raises():
    with pytest.raises(errors.MaxIterError):
        npmle(interval_truncated(300, seed=5), maxit=2)


def test_japanese_exceedances():
    scdf = npmle(load_japanese_female(), ExceedanceConfig(108))
    assert scdf.thresh == 108
    assert scdf.survival(0.0) == pytest.approx(1.0, abs=1e-9)
    s = scdf.survival(np.arange(0.0, 10.0))
    assert np.all(np.diff(s) <= 1e-12)


def test_cumulative_hazard():
    scdf = npmle(toy())
    assert scdf.cum_hazard(1.0) == pytest.approx(math.log(1.5), abs=1e-6)
    assert scdf.cum_hazard(2.0) > scdf.cum_hazard(1.9)


def test_to_dict():
    out = npmle(toy()).to_dict()
    assert out["a"] == [1.0, 2.0]
    assert out["kkt"]["passed"] is True
    assert out["convention"] == "right"


def _atoms(records):
    """Censoring sets, windows and endpoint sets on an atom grid.

    Atom ``2k + 1`` is the k-th distinct finite value, atom ``2k`` the open
    gap below it and atom ``2K`` everything above the last value.
    """
    values = sorted({
        v for r in records
        for v in (r.time1, r.time2, r.ltrunc1, r.rtrunc1, r.ltrunc2,
                  r.rtrunc2)
        if v is not None and math.isfinite(v)
    })
    top = 2 * len(values)
    point = {v: 2 * k + 1 for k, v in enumerate(values)}

    def start(v, is_open):
        if v == -math.inf:
            return 0
        return point[v] + 1 if is_open else point[v]

    def end(v):
        return top if v == math.inf else point[v]

    sets = [(start(r.time1, r.event != 1), end(r.time2)) for r in records]
    windows = [[(start(lo, False), end(hi)) for lo, hi in r.windows]
               for r in records]
    lefts = {s for s, _ in sets} | {
        point[hi] + 1 for r in records for _, hi in r.windows
        if math.isfinite(hi)
    }
    rights = {e for _, e in sets} | {
        point[lo] - 1 for r in records for lo, _ in r.windows
        if math.isfinite(lo)
    }
    return values, top, sets, windows, lefts, rights


def _brute_force_intervals(records):
    """Innermost intervals by exhaustive search, with membership."""
    values, top, sets, windows, lefts, rights = _atoms(records)
    found = []
    for lo in sorted(lefts):
        for hi in sorted(rights):
            if hi < lo:
                continue
            if any(lo < x <= hi for x in lefts):
                continue
            if any(lo <= x < hi for x in rights):
                continue
            if any(s <= lo and hi <= e for s, e in sets):
                found.append((lo, hi))

    def lower(atom):
        if atom == 0:
            return -math.inf
        return values[(atom - 1) // 2] if atom % 2 else values[atom // 2 - 1]

    def upper(atom):
        if atom == top:
            return math.inf
        return values[(atom - 1) // 2] if atom % 2 else values[atom // 2]

    pairs = [(lower(lo), upper(hi)) for lo, hi in found]
    left_open = [lo % 2 == 0 for lo, _ in found]
    alpha = np.array([[float(s <= lo and hi <= e) for lo, hi in found]
                      for s, e in sets])
    beta = np.array([[float(sum(s <= lo and hi <= e for s, e in w))
                      for lo, hi in found] for w in windows])
    return pairs, left_open, alpha, beta


def _direct_loglik(alpha, beta, w, p):
    with np.errstate(divide="ignore"):
        return float(np.sum(w * (np.log(alpha @ p) - np.log(beta @ p))))


def _simplex_maximum(alpha, beta, w, starts):
    """Largest log likelihood SLSQP finds on the simplex from ``starts``."""
    m = alpha.shape[1]

    def objective(p):
        pa = np.maximum(alpha @ p, 1e-300)
        pb = np.maximum(beta @ p, 1e-300)
        return -float(np.sum(w * (np.log(pa) - np.log(pb))))

    def jacobian(p):
        pa = np.maximum(alpha @ p, 1e-300)
        pb = np.maximum(beta @ p, 1e-300)
        return -(alpha.T @ (w / pa) - beta.T @ (w / pb))

    total = {
        "type": "eq",
        "fun": lambda p: np.sum(p) - 1.0,
        "jac": lambda p: np.ones(m),
    }
    best, best_p = -math.inf, None
    for p0 in starts:
        res = optimize.minimize(objective, p0, jac=jacobian, method="SLSQP",
                                bounds=[(0.0, 1.0)] * m,
                                constraints=(total,),
                                options={"ftol": 1e-15, "maxiter": 2000})
        p = np.clip(res.x, 0.0, None)
        p = p / np.sum(p)
        value = _direct_loglik(alpha, beta, w, p)
        if value > best:
            best, best_p = value, p
    return best, best_p


def _starts(rng, m, extra=()):
    return [np.full(m, 1.0 / m)] + [rng.dirichlet(np.ones(m))
                                     for _ in range(3)] + list(extra)


def _random_record(rng):
    kind = ("exact", "interval", "right")[rng.integers(3)]
    style = int(rng.integers(2 if kind == "right" else 4))
    if style == 0:
        windows = [(-math.inf, math.inf)]
    elif style == 1:
        windows = [(float(rng.integers(0, 3)), math.inf)]
    elif style == 2:
        lo = float(rng.integers(0, 3))
        windows = [(lo, lo + float(rng.integers(2, 5)))]
    else:
        lo = float(rng.integers(0, 2))
        hi = lo + float(rng.integers(1, 3))
        lo2 = hi + float(rng.integers(1, 3))
        windows = [(lo, hi), (lo2, lo2 + float(rng.integers(1, 3)))]
    bounds = {"ltrunc1": windows[0][0], "rtrunc1": windows[0][1]}
    if len(windows) == 2:
        bounds.update(ltrunc2=windows[1][0], rtrunc2=windows[1][1])
    weight = float(rng.integers(1, 3))
    lo, hi = windows[int(rng.integers(len(windows)))]
    lo = int(max(lo, 0.0))
    hi = lo + 6 if hi == math.inf else int(hi)
    if kind == "exact":
        t = float(rng.integers(lo, hi + 1))
        return LifetimeRecord(t, t, 1, weight=weight, **bounds)
    if kind == "interval":
        left = int(rng.integers(lo, hi))
        right = int(rng.integers(left + 1, hi + 1))
        return LifetimeRecord(float(left), float(right), 3, weight=weight,
                              **bounds)
    return LifetimeRecord(float(rng.integers(lo, lo + 6)), math.inf, 0,
                          weight=weight, **bounds)


def _random_instances(count, seed):
    rng = np.random.default_rng(seed)
    return [Dataset(tuple(_random_record(rng)
                          for _ in range(int(rng.integers(3, 9)))))
            for _ in range(count)]


@pytest.mark.parametrize(("d",), ((d,) for d in _random_instances(50, 41)))
def test_intervals_match_exhaustive_search(d):
    pairs, left_open, _, _ = _brute_force_intervals(d.records)
    iv = turnbull_intervals(d)
    assert iv.as_pairs() == pairs
    assert iv.left_open.tolist() == left_open


@pytest.mark.parametrize(("d",), ((d,) for d in _random_instances(50, 43)))
def test_em_matches_simplex_maximization(d):
    _, _, alpha, beta = _brute_force_intervals(d.records)
    w = d.arrays.weight
    scdf = npmle(d, tol=1e-11)
    assert scdf.kkt.passed
    assert _direct_loglik(alpha, beta, w, scdf.p) == pytest.approx(
        scdf.loglik, abs=1e-9)
    rng = np.random.default_rng(len(scdf.p))
    best, _ = _simplex_maximum(alpha, beta, w,
                               _starts(rng, len(scdf.p), [scdf.p]))
    assert best <= scdf.loglik + 1e-6


@pytest.fixture
def right_truncated_intervals():
    return Dataset((
        LifetimeRecord(0.0, 2.0, 3, ltrunc1=0.0, rtrunc1=4.0),
        LifetimeRecord(1.0, 3.0, 3, ltrunc1=0.0, rtrunc1=3.0),
        LifetimeRecord(2.0, 4.0, 3, ltrunc1=0.0, rtrunc1=5.0),
        LifetimeRecord(1.5, 1.5, 1, ltrunc1=0.0, rtrunc1=2.5),
        LifetimeRecord(0.5, 2.5, 3, ltrunc1=0.0, rtrunc1=3.5),
    ))


def test_interval_censored_right_truncated_example(
        right_truncated_intervals):
    d = right_truncated_intervals
    pairs, _, alpha, beta = _brute_force_intervals(d.records)
    iv = turnbull_intervals(d)
    assert iv.as_pairs() == pairs == [(1.5, 1.5), (2.0, 2.5), (2.5, 3.0),
                                      (3.5, 4.0)]
    scdf = em_fit(d, iv, tol=1e-12)
    np.testing.assert_allclose(scdf.p, [0.5, 0.0, 0.0, 0.5], atol=1e-6)
    assert scdf.loglik == pytest.approx(2 * math.log(0.5), abs=1e-7)
    assert kkt_check(scdf, d).passed
    w = d.arrays.weight
    best, best_p = _simplex_maximum(alpha, beta, w,
                                    _starts(np.random.default_rng(5),
                                            len(iv)))
    assert scdf.loglik == pytest.approx(best, abs=1e-7)
    cleaned = np.where(best_p < 1e-6, 0.0, best_p)
    oracle = StepCDF(iv, cleaned / np.sum(cleaned))
    np.testing.assert_allclose(oracle.p, scdf.p, atol=1e-4)
    assert kkt_check(oracle, d, tol=1e-4).passed


def test_non_optimal_masses_fail_the_check():
    d = toy()
    scdf = npmle(d)
    report = kkt_check(StepCDF(scdf.intervals, np.array([0.5, 0.5])), d)
    assert not report.passed
    assert [j for j, _ in report.violations] == [0, 1]
    assert report.max_violation == pytest.approx(1 / 3)


def test_truncation_endpoints_join_the_support():
    d = Dataset((
        LifetimeRecord(1.0, 1.0, 1),
        LifetimeRecord(2.0, 2.0, 1, ltrunc1=1.5),
        LifetimeRecord(1.2, math.inf, 0),
    ))
    amended = npmle(d)
    plain = npmle(d, amend=False)
    assert plain.intervals.as_pairs() == [(1.0, 1.0), (2.0, 2.0)]
    assert amended.intervals.as_pairs() == [(1.0, 1.0), (1.2, 1.5),
                                            (2.0, 2.0)]
    pairs, _, alpha, beta = _brute_force_intervals(d.records)
    assert amended.intervals.as_pairs() == pairs
    assert amended.loglik >= plain.loglik - 1e-9
    assert amended.loglik == pytest.approx(2 * math.log(0.5), abs=1e-6)
    w = d.arrays.weight
    assert _direct_loglik(alpha, beta, w, amended.p) == pytest.approx(
        amended.loglik, abs=1e-9)


def test_left_censored_mass_stays_inside_the_window():
    d = Dataset((
        LifetimeRecord(-math.inf, 2.0, 2, ltrunc1=1.0),
        LifetimeRecord(1.5, 1.5, 1),
        LifetimeRecord(0.5, 0.5, 1),
    ))
    scdf = npmle(d)
    assert scdf.intervals.as_pairs() == [(0.5, 0.5), (1.5, 1.5)]
    np.testing.assert_allclose(scdf.p, [0.5, 0.5], atol=1e-6)
    assert scdf.loglik == pytest.approx(2 * math.log(0.5), abs=1e-9)
