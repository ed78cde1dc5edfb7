import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bopforest.forest import ForestConfig
from bopforest.interval import HdrRegion, Interval
from bopforest.simbench import (PROBLEMS, BenchmarkConfig, SimSpec, evaluate, evaluate_bounds, gen_friedman1,
                                gen_friedman2, gen_friedman3, gen_h2c, gen_peak, gen_tree, generate,
                                relative_length, run_benchmark, tree_mean)


def quiet(problem, n=1):
    return SimSpec(problem, n, seed=0, noise_sd=0.0)


def test_friedman1_formula():
    ds = gen_friedman1(quiet("friedman1"), X=np.full((1, 10), 0.5))
    assert ds.response[0] == pytest.approx(10 * math.sin(math.pi / 4) + 7.5, abs=1e-10)
    assert ds.response[0] == pytest.approx(14.5711, abs=1e-4)


def test_friedman1_sample_properties():
    n = 4000
    ds = gen_friedman1(SimSpec("friedman1", n, seed=3))
    assert ds.p == 10
    assert np.all((ds.features >= 0) & (ds.features <= 1))
    assert np.all(np.abs(ds.features[:, 5:].mean(0) - 0.5) < 3 / math.sqrt(12 * n))
    a = gen_friedman1(SimSpec("friedman1", 50, seed=1, noise_sd=0.0))
    b = gen_friedman1(quiet("friedman1"), X=a.features)
    assert np.array_equal(a.response, b.response)


def test_friedman2_formula():
    ds = gen_friedman2(quiet("friedman2"), X=[[0, 40 * math.pi, 0, 1]])
    assert ds.response[0] == pytest.approx(1 / (40 * math.pi), abs=1e-6)
    x2, x4 = 100.0, 3.0
    ds = gen_friedman2(quiet("friedman2"), X=[[7.0, x2, 1 / (x2 ** 2 * x4), x4]])
    assert ds.response[0] == pytest.approx(7.0, abs=1e-9)
    ds = gen_friedman2(SimSpec("friedman2", 500, seed=2, noise_sd=0.0))
    assert np.all(ds.response >= 0)
    lo = np.array([0, 40 * math.pi, 0, 1])
    hi = np.array([100, 560 * math.pi, 1, 11])
    assert np.all((ds.features >= lo) & (ds.features <= hi))


def test_friedman3_formula():
    ds = gen_friedman3(quiet("friedman3"), X=[[1, 40 * math.pi, 1, 1]])
    assert ds.response[0] == pytest.approx(math.atan(40 * math.pi - 1 / (40 * math.pi)), abs=1e-10)
    assert ds.response[0] == pytest.approx(1.56284, abs=1e-4)
    x2, x4 = 200.0, 2.0
    ds = gen_friedman3(quiet("friedman3"), X=[[3.0, x2, 1 / (x2 ** 2 * x4), x4]])
    assert ds.response[0] == pytest.approx(0.0, abs=1e-12)
    ds = gen_friedman3(SimSpec("friedman3", 500, seed=4, noise_sd=0.0))
    assert np.all(np.abs(ds.response) < math.pi / 2)
    assert np.all(ds.features[:, 0] != 0)
    with pytest.raises(ValueError):
        gen_friedman3(quiet("friedman3"), X=[[0.0, 200.0, 0.5, 2.0]])


def test_peak():
    ds = gen_peak(SimSpec("peak", 300, seed=5))
    r = np.linalg.norm(ds.features, axis=1)
    assert ds.p == 20
    assert np.all(r <= 3)
    np.testing.assert_allclose(ds.response, 25 * np.exp(-0.5 * r ** 2), rtol=1e-12)
    x = np.zeros((2, 20))
    x[1, 7] = 3.0
    ds = gen_peak(SimSpec("peak", 2), X=x)
    assert ds.response[0] == 25
    assert ds.response[1] == pytest.approx(25 * math.exp(-4.5), abs=1e-12)
    assert ds.response[1] == pytest.approx(0.27775, abs=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2 ** 32))
def test_peak_rows_on_sphere(n, seed):
    ds = gen_peak(SimSpec("peak", n, seed=seed))
    r = np.linalg.norm(ds.features, axis=1)
    np.testing.assert_allclose(ds.response, 25 * np.exp(-0.5 * r ** 2), rtol=0, atol=1e-12)


def test_h2c():
    from bopforest.simbench import h2c_moments
    X = np.random.default_rng(0).uniform(size=(400, 10))
    mu, sd = h2c_moments(X)
    assert mu.min() == -1.5 and mu.max() == pytest.approx(1.5, abs=1e-15)
    assert sd.min() == pytest.approx(math.exp(-1.5)) and sd.max() == pytest.approx(math.exp(1.5))
    assert math.exp(-1.5) == pytest.approx(0.2231, abs=1e-4) and math.exp(1.5) == pytest.approx(4.4817, abs=1e-4)
    ds = gen_h2c(SimSpec("h2c", 400, seed=1))
    assert ds.p == 10
    with pytest.raises(ValueError):
        gen_h2c(SimSpec("h2c", 1))


def test_tree_model():
    X = np.array([[-1, -1, 0, -1, 0, 0, 0], [1, 0, 1, 0, 0, 0, 1]], dtype=float)
    assert list(gen_tree(quiet("tree_normal", 2), "normal", X).response) == [5, 40]
    # all eight sign patterns of the relevant inputs
    for leaf in range(8):
        right, second, third = leaf >> 2, (leaf >> 1) & 1, leaf & 1
        x = np.full(7, np.nan)
        x[0] = 1 if right else -1
        x[2 if right else 1] = 1 if second else -1
        x[3 + 2 * right + second] = 1 if third else -1
        x = np.nan_to_num(x, nan=0.25)
        assert tree_mean(x[None])[0] == 5 * (leaf + 1)
    ds = gen_tree(SimSpec("tree_exp", 2000, seed=3), "exponential")
    resid = ds.response - tree_mean(ds.features)
    assert np.all(resid >= 0) and resid.mean() == pytest.approx(1, abs=0.1)
    with pytest.raises(ValueError):
        gen_tree(quiet("tree_exp"), "cauchy")


@pytest.mark.parametrize("problem", PROBLEMS)
def test_generators_deterministic(problem):
    a = generate(SimSpec(problem, 30, seed=9))
    b = generate(SimSpec(problem, 30, seed=9))
    c = generate(SimSpec(problem, 30, seed=10))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.response, b.response)
    assert not np.array_equal(a.features, c.features)


def test_simspec_validation():
    with pytest.raises(ValueError):
        SimSpec("nope", 10)
    with pytest.raises(ValueError):
        SimSpec("peak", 0)
    assert SimSpec("friedman2", 3).noise == 125 and SimSpec("friedman3", 3).noise == 0.01


def test_evaluate_examples():
    rep = evaluate([Interval(0, 4), Interval(0, 4)], [1, 2], [2, 2])
    assert rep.coverage == 1.0
    assert rep.mae == 0.5 and rep.rmse == pytest.approx(0.7071, abs=1e-4)
    assert relative_length(12, 10) == pytest.approx(20)
    rep = evaluate([HdrRegion((Interval(0, 1), Interval(3, 5)))], [0.5], [2.0], baseline_length=2.0)
    assert rep.mean_pi_length == 3 and rep.coverage == 0.0 and rep.relative_length == pytest.approx(50)
    with pytest.raises(ValueError):
        evaluate([Interval(0, 1)], [1, 2])
    assert evaluate([Interval(0, 1)], [0.5]).coverage is None


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 5), st.floats(-10, 10)), min_size=1, max_size=30))
def test_coverage_matches_counting(rows):
    pis = [Interval(a, a + w) for a, w, _ in rows]
    truth = [t for _, _, t in rows]
    rep = evaluate(pis, np.zeros(len(rows)), truth)
    assert rep.coverage == sum(a <= t <= a + w for a, w, t in rows) / len(rows)
    fast = evaluate_bounds([p.lower for p in pis], [p.upper for p in pis], np.zeros(len(rows)), truth)
    assert fast.coverage == rep.coverage and fast.mean_pi_length == pytest.approx(rep.mean_pi_length)


def test_benchmark_harness_small():
    cfg = BenchmarkConfig("friedman1", n_train=60, n_test=30, replications=2, forest=ForestConfig(num_trees=30),
                          pibf_calibrations=("none", "cv", "oob"), rfpi_rules=("ls",), rfpi_methods=("quant", "hdr"))
    res = run_benchmark(cfg)
    assert res.methods == ["pibf-none", "pibf-cv", "pibf-oob", "ls-quant", "ls-hdr"]
    summ = res.summary()
    assert min(r.relative_length for r in summ.values()) == 0
    # the PIBF variants share one pair of forests, so point errors agree
    assert len({round(summ[m].mae, 12) for m in ("pibf-none", "pibf-cv", "pibf-oob")}) == 1
    again = run_benchmark(cfg)
    assert [r["pibf-cv"].coverage for r in again.runs] == [r["pibf-cv"].coverage for r in res.runs]
