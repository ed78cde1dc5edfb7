import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bopforest.interval import (HdrRegion, Interval, build_intervals, chdr_interval, compress, coverage_count,
                                covered_counts, hdr_region, lm_interval, quantile_interval, shortest_interval,
                                silverman_bandwidth)

alphas = st.floats(0.01, 0.99)
samples = st.lists(st.integers(-50, 50).map(lambda v: v / 4), min_size=1, max_size=50)


def brute_spi(sample, alpha):
    s = np.sort(np.asarray(sample, float))
    k = math.ceil((1 - alpha) * len(s) - 1e-9)
    k = min(max(k, 1), len(s))
    best = None
    for i in range(len(s) - k + 1):
        if best is None or s[i + k - 1] - s[i] < best[1] - best[0]:
            best = (s[i], s[i + k - 1])
    return best


def count_inside(sample, region):
    return sum(region.contains(v) for v in sample)


# ---------------------------------------------------------------------------
# shortest interval
# ---------------------------------------------------------------------------


def test_shortest_interval_examples():
    assert shortest_interval([1, 2, 3, 10], 0.25) == Interval(1, 3)
    assert shortest_interval([5, 5, 5, 5], 0.3) == Interval(5, 5)
    # three 2-point windows of length 1, 1, 7: the first wins
    assert shortest_interval([1, 2, 3, 10], 0.5) == Interval(1, 2)


@settings(max_examples=300, deadline=None)
@given(samples, alphas)
def test_shortest_interval_matches_brute_force(sample, alpha):
    iv = shortest_interval(sample, alpha)
    assert (iv.lower, iv.upper) == brute_spi(sample, alpha)
    assert count_inside(sample, iv) >= coverage_count(alpha, len(sample))


@settings(max_examples=100, deadline=None)
@given(samples, alphas, st.floats(-1e3, 1e3), st.floats(0.1, 10))
def test_shortest_interval_equivariance(sample, alpha, c, scale):
    base = shortest_interval(sample, alpha)
    moved = shortest_interval(np.asarray(sample) * scale + c, alpha)
    assert moved.lower == pytest.approx(base.lower * scale + c, abs=1e-9)
    assert moved.upper == pytest.approx(base.upper * scale + c, abs=1e-9)


def test_coverage_count_clamps():
    assert coverage_count(0.05, 20) == 19
    assert coverage_count(0.05, 1) == 1
    assert coverage_count(0.99, 10) == 1
    # (1 - 0.1) * 10 is 9.000000000000002 in floating point
    assert coverage_count(0.1, 10) == 9


# ---------------------------------------------------------------------------
# quantile and LM intervals
# ---------------------------------------------------------------------------


def test_quantile_interval_examples():
    iv = quantile_interval(np.arange(1, 11), 0.2)
    assert iv.lower == pytest.approx(1.9) and iv.upper == pytest.approx(9.1)
    iv = quantile_interval([-3, -1, 0, 1, 3], 0.3)
    assert iv.lower == pytest.approx(-iv.upper)
    iv = quantile_interval([4, 1, 7, 2], 1e-9)
    assert iv.lower == pytest.approx(1) and iv.upper == pytest.approx(7)
    with pytest.raises(ValueError):
        quantile_interval([1.0], 0.1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), alphas)
def test_quantile_interval_matches_numpy_linear(sample, alpha):
    iv = quantile_interval(sample, alpha)
    lo, hi = np.quantile(sample, [alpha / 2, 1 - alpha / 2], method="linear")
    assert iv.lower == pytest.approx(lo, abs=1e-9) and iv.upper == pytest.approx(hi, abs=1e-9)


def test_lm_interval_examples():
    iv = lm_interval([-1, 0, 1], 0.05)
    assert iv.upper == pytest.approx(4.968, abs=1e-3) and iv.lower == pytest.approx(-4.968, abs=1e-3)
    assert lm_interval([2.5, 2.5, 2.5], 0.1) == Interval(2.5, 2.5)
    a, b = lm_interval([1, 2, 4, 7], 0.1), lm_interval([2, 4, 8, 14], 0.1)
    assert b.length == pytest.approx(2 * a.length)
    assert (b.lower + b.upper) / 2 == pytest.approx(a.lower + a.upper)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), alphas)
def test_lm_interval_closed_form(sample, alpha):
    s = np.asarray(sample)
    m = s.size
    half = stats.t.ppf(1 - alpha / 2, m - 1) * s.std(ddof=1) * math.sqrt(1 + 1 / m)
    iv = lm_interval(s, alpha)
    assert iv.lower == pytest.approx(s.mean() - half, abs=1e-9)
    assert iv.upper == pytest.approx(s.mean() + half, abs=1e-9)


# ---------------------------------------------------------------------------
# HDR / CHDR
# ---------------------------------------------------------------------------


def grid_hdr_oracle(sample, alpha, bw):
    """Dense-grid KDE: the region {f >= c} for the largest c whose mass holds the points."""
    s = np.sort(np.asarray(sample, float))
    grid = np.linspace(s[0] - 1, s[-1] + 1, 20001)
    f = np.exp(-0.5 * ((grid[:, None] - s[None, :]) / bw) ** 2).sum(1)
    fs = np.exp(-0.5 * ((s[:, None] - s[None, :]) / bw) ** 2).sum(1)
    k = math.ceil((1 - alpha) * s.size - 1e-9)
    c = np.sort(fs)[::-1][k - 1]
    inside = f >= c
    edges = np.flatnonzero(np.diff(inside.astype(int)))
    return int((edges.size + inside[0] + inside[-1]) // 2)


def test_hdr_bimodal_two_clusters():
    sample = [0, 0.1, 0.2, 10, 10.1, 10.2]
    region = hdr_region(sample, 0.3)
    assert len(region.intervals) == 2
    assert region.intervals[0].upper < 5 < region.intervals[1].lower
    assert count_inside(sample, region) >= 5
    bw = silverman_bandwidth(sample)
    assert grid_hdr_oracle(sample, 0.3, bw) == 2


def test_hdr_degenerate_and_full_coverage():
    region = hdr_region([3.0, 3.0, 3.0], 0.2)
    assert region.intervals == (Interval(3.0, 3.0),)
    sample = [0.0, 1.0, 2.5, 7.0]
    region = hdr_region(sample, 0.01)
    assert count_inside(sample, region) == 4
    assert region.lower == 0.0 and region.upper == 7.0


def test_hdr_unimodal_normal_close_to_quantiles():
    s = np.random.default_rng(0).standard_normal(2000)
    region = hdr_region(s, 0.05)
    assert len(region.intervals) == 1
    assert region.lower == pytest.approx(-1.96, abs=0.15) and region.upper == pytest.approx(1.96, abs=0.15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_subnormal=False), min_size=2, max_size=50), alphas)
def test_hdr_holds_required_points(sample, alpha):
    region = hdr_region(sample, alpha)
    assert count_inside(sample, region) >= coverage_count(alpha, len(sample))
    hull = chdr_interval(region)
    assert all(hull.lower <= iv.lower and iv.upper <= hull.upper for iv in region.intervals)
    assert region.density_threshold >= 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-40, 40), min_size=2, max_size=30), alphas, st.integers(-1000, 1000))
def test_hdr_translation_equivariant(sample, alpha, c):
    a = hdr_region(sample, alpha)
    b = hdr_region(np.asarray(sample, float) + c, alpha)
    assert len(a.intervals) == len(b.intervals)
    for u, v in zip(a.intervals, b.intervals):
        assert v.lower == pytest.approx(u.lower + c) and v.upper == pytest.approx(u.upper + c)


def test_chdr_examples():
    region = HdrRegion((Interval(0, 0.2), Interval(10, 10.2)))
    assert chdr_interval(region) == Interval(0, 10.2)
    assert chdr_interval(HdrRegion((Interval(1, 2),))) == Interval(1, 2)
    three = HdrRegion((Interval(0, 1), Interval(2, 3), Interval(5, 6)))
    assert chdr_interval(three) == Interval(0, 6)


def test_region_validation():
    with pytest.raises(ValueError):
        HdrRegion(())
    with pytest.raises(ValueError):
        HdrRegion((Interval(0, 2), Interval(1, 3)))
    with pytest.raises(ValueError):
        Interval(2, 1)


def test_shortest_interval_rejects_bad_input():
    with pytest.raises(ValueError):
        shortest_interval([], 0.1)
    with pytest.raises(ValueError):
        shortest_interval([1.0, np.nan], 0.1)
    with pytest.raises(ValueError):
        shortest_interval([1.0, 2.0], 1.0)


# ---------------------------------------------------------------------------
# batch helpers agree with the single-sample functions
# ---------------------------------------------------------------------------


def _batch(samples_):
    parts = [compress(s) for s in samples_]
    ptr = np.concatenate([[0], np.cumsum([v.size for v, _ in parts])]).astype(np.int64)
    return np.concatenate([v for v, _ in parts]), np.concatenate([w for _, w in parts]), ptr


SINGLE = {"lm": lm_interval, "quant": quantile_interval, "spi": shortest_interval, "hdr": hdr_region,
          "chdr": lambda s, a: chdr_interval(hdr_region(s, a))}


@pytest.mark.parametrize("method", list(SINGLE))
def test_batch_matches_single(method):
    rng = np.random.default_rng(3)
    batch = [np.round(rng.gamma(2, 2, size=rng.integers(2, 60)), 1) for _ in range(25)]
    fv, fw, ptr = _batch(batch)
    out = build_intervals(fv, fw, ptr, 0.1, method)
    for s, got in zip(batch, out):
        assert got == SINGLE[method](s, 0.1)


@pytest.mark.parametrize("method", list(SINGLE))
def test_covered_counts_match_counting(method):
    rng = np.random.default_rng(4)
    batch = [rng.normal(size=rng.integers(3, 40)) for _ in range(30)]
    targets = rng.normal(size=30)
    fv, fw, ptr = _batch(batch)
    grid = np.array([0.05, 0.1, 0.3])
    hits = covered_counts(fv, fw, ptr, targets, grid, method)
    for a, h in zip(grid, hits):
        assert h == sum(SINGLE[method](s, a).contains(t) for s, t in zip(batch, targets))


@pytest.mark.parametrize("method", ["lm", "quant"])
def test_coverage_monotone_in_alpha(method):
    rng = np.random.default_rng(5)
    batch = [rng.normal(size=rng.integers(5, 80)) for _ in range(200)]
    fv, fw, ptr = _batch(batch)
    grid = np.arange(1, 41) * 0.005
    hits = covered_counts(fv, fw, ptr, rng.normal(size=200), grid, method)
    assert np.all(np.diff(hits) <= 0)


def test_shortest_windows_are_not_nested():
    # coverage of a fixed target can rise with alpha under SPI
    s = [0, 0.1, 5, 6, 7]
    assert shortest_interval(s, 0.4) == Interval(5, 7)
    assert shortest_interval(s, 0.6) == Interval(0, 0.1)
    fv, fw, ptr = _batch([s])
    assert list(covered_counts(fv, fw, ptr, [0.0], [0.4, 0.6], "spi")) == [0, 1]


@settings(max_examples=100, deadline=None)
@given(samples, alphas, alphas)
def test_shortest_length_non_increasing_in_alpha(sample, a, b):
    lo, hi = sorted((a, b))
    assert shortest_interval(sample, hi).length <= shortest_interval(sample, lo).length
