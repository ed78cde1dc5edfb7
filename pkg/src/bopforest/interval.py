"""Prediction intervals from a univariate sample: LM, Quant, SPI, HDR and CHDR.

Every method works on a *compressed* sample: strictly increasing distinct
values with positive integer multiplicities.  Bags of observations collected
across many trees repeat the same training rows thousands of times, so the
compressed form keeps interval construction linear in the number of distinct
rows.  The public functions accept plain samples and compress them first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy import stats

METHODS = ("lm", "quant", "spi", "hdr", "chdr")

# exp(-0.5 * z**2) underflows to exactly 0.0 beyond this many bandwidths
_KDE_CUTOFF = 39.0


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper

    def shift(self, c: float) -> "Interval":
        return Interval(self.lower + c, self.upper + c)


@dataclass(frozen=True)
class HdrRegion:
    """Union of disjoint intervals sorted by lower bound."""

    intervals: tuple[Interval, ...]
    density_threshold: float = 0.0

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("HDR region needs at least one interval")
        for a, b in zip(self.intervals, self.intervals[1:]):
            if not a.upper < b.lower:
                raise ValueError("HDR intervals must be sorted and disjoint")

    @property
    def lower(self) -> float:
        return self.intervals[0].lower

    @property
    def upper(self) -> float:
        return self.intervals[-1].upper

    @property
    def length(self) -> float:
        return float(sum(iv.length for iv in self.intervals))

    def contains(self, y: float) -> bool:
        return any(iv.contains(y) for iv in self.intervals)

    def shift(self, c: float) -> "HdrRegion":
        return HdrRegion(tuple(iv.shift(c) for iv in self.intervals), self.density_threshold)


# ---------------------------------------------------------------------------
# numba kernels on compressed samples (vals strictly increasing, wts > 0)
# ---------------------------------------------------------------------------


@njit(cache=True)
def coverage_count(alpha, m):
    """Number of points ceil((1 - alpha) m) an interval must hold, in [1, m]."""
    k = int(math.ceil((1.0 - alpha) * m - 1e-9))
    if k < 1:
        k = 1
    if k > m:
        k = m
    return k


@njit(cache=True)
def shortest_window_length(s, m, alpha):
    """Length of the shortest window over the first m entries of sorted s."""
    if m <= 1:
        return 0.0
    k = coverage_count(alpha, m)
    best = np.inf
    for i in range(m - k + 1):
        d = s[i + k - 1] - s[i]
        if d < best:
            best = d
    return best


@njit(cache=True)
def _spi_w(vals, wts, alpha):
    u = vals.shape[0]
    m = 0
    for i in range(u):
        m += wts[i]
    k = coverage_count(alpha, m)
    best = np.inf
    lo = vals[0]
    hi = vals[0]
    j = 0
    acc = 0  # weight of vals[i..j-1]
    for i in range(u):
        while acc < k and j < u:
            acc += wts[j]
            j += 1
        if acc < k:
            break
        d = vals[j - 1] - vals[i]
        if d < best:
            best = d
            lo = vals[i]
            hi = vals[j - 1]
        acc -= wts[i]
    return lo, hi


@njit(cache=True)
def _order_stat(vals, wts, r):
    # r-th smallest (1-based) element of the expanded sample
    acc = 0
    for i in range(vals.shape[0]):
        acc += wts[i]
        if acc >= r:
            return vals[i]
    return vals[vals.shape[0] - 1]


@njit(cache=True)
def _quantile_w(vals, wts, prob):
    m = 0
    for i in range(wts.shape[0]):
        m += wts[i]
    h = (m - 1) * prob + 1.0
    fl = int(math.floor(h))
    if fl < 1:
        fl = 1
    if fl >= m:
        return _order_stat(vals, wts, m)
    a = _order_stat(vals, wts, fl)
    b = _order_stat(vals, wts, fl + 1)
    return a + (h - fl) * (b - a)


@njit(cache=True)
def _moments_w(vals, wts):
    m = 0
    tot = 0.0
    for i in range(vals.shape[0]):
        m += wts[i]
        tot += wts[i] * vals[i]
    mean = tot / m
    ss = 0.0
    for i in range(vals.shape[0]):
        d = vals[i] - mean
        ss += wts[i] * d * d
    sd = math.sqrt(ss / (m - 1)) if m > 1 else 0.0
    return m, mean, sd


@njit(cache=True)
def _silverman_w(vals, wts):
    m, _, sd = _moments_w(vals, wts)
    iqr = _quantile_w(vals, wts, 0.75) - _quantile_w(vals, wts, 0.25)
    spread = min(sd, iqr / 1.34)
    if spread <= 0.0:
        spread = sd
    bw = 0.9 * spread * m ** (-0.2)
    floor = 1e-9 * (vals[vals.shape[0] - 1] - vals[0] + 1.0)
    return max(bw, floor)


@njit(cache=True)
def _kde_at(vals, wts, z, bw):
    lo = np.searchsorted(vals, z - _KDE_CUTOFF * bw)
    hi = np.searchsorted(vals, z + _KDE_CUTOFF * bw, side="right")
    acc = 0.0
    for j in range(lo, hi):
        t = (z - vals[j]) / bw
        acc += wts[j] * math.exp(-0.5 * t * t)
    return acc


@njit(cache=True)
def _hdr_densities(vals, wts, bw):
    # unnormalized densities at each value and at midpoints of neighbours
    u = vals.shape[0]
    dens = np.empty(u)
    mid = np.empty(max(u - 1, 0))
    for i in range(u):
        dens[i] = _kde_at(vals, wts, vals[i], bw)
    for i in range(u - 1):
        mid[i] = _kde_at(vals, wts, 0.5 * (vals[i] + vals[i + 1]), bw)
    return dens, mid


@njit(cache=True)
def _hdr_threshold(wts, dens, alpha):
    m = 0
    for i in range(wts.shape[0]):
        m += wts[i]
    k = coverage_count(alpha, m)
    order = np.argsort(-dens, kind="mergesort")
    acc = 0
    for t in range(order.shape[0]):
        acc += wts[order[t]]
        if acc >= k:
            return dens[order[t]]
    return dens[order[order.shape[0] - 1]]


@njit(cache=True)
def _hdr_runs(vals, dens, mid, fc, out_lo, out_hi):
    """Write the runs of selected values; a run breaks at an unselected value
    or where the density between two neighbours falls below the threshold."""
    u = vals.shape[0]
    r = 0
    open_run = False
    for i in range(u):
        if dens[i] >= fc:
            if open_run and mid[i - 1] >= fc:
                out_hi[r - 1] = vals[i]
            else:
                out_lo[r] = vals[i]
                out_hi[r] = vals[i]
                r += 1
                open_run = True
        else:
            open_run = False
    return r


@njit(cache=True)
def _interval_batch(flat_vals, flat_wts, ptr, alpha, method):
    """SPI (method 2) or Quant (method 1) bounds for each compressed sample."""
    nq = ptr.shape[0] - 1
    lo = np.empty(nq)
    hi = np.empty(nq)
    for q in range(nq):
        v = flat_vals[ptr[q]:ptr[q + 1]]
        w = flat_wts[ptr[q]:ptr[q + 1]]
        if method == 2:
            lo[q], hi[q] = _spi_w(v, w, alpha)
        elif method == 1:
            lo[q] = _quantile_w(v, w, alpha / 2.0)
            hi[q] = _quantile_w(v, w, 1.0 - alpha / 2.0)
    return lo, hi


@njit(cache=True)
def _moments_batch(flat_vals, flat_wts, ptr):
    nq = ptr.shape[0] - 1
    ms = np.empty(nq)
    means = np.empty(nq)
    sds = np.empty(nq)
    for q in range(nq):
        m, mean, sd = _moments_w(flat_vals[ptr[q]:ptr[q + 1]], flat_wts[ptr[q]:ptr[q + 1]])
        ms[q] = m
        means[q] = mean
        sds[q] = sd
    return ms, means, sds


@njit(cache=True)
def _hdr_batch(flat_vals, flat_wts, ptr, alpha, bandwidth):
    nq = ptr.shape[0] - 1
    rptr = np.zeros(nq + 1, np.int64)
    cap = flat_vals.shape[0]
    rlo = np.empty(cap)
    rhi = np.empty(cap)
    thr = np.empty(nq)
    for q in range(nq):
        v = flat_vals[ptr[q]:ptr[q + 1]]
        w = flat_wts[ptr[q]:ptr[q + 1]]
        bw = bandwidth if bandwidth > 0 else _silverman_w(v, w)
        dens, mid = _hdr_densities(v, w, bw)
        fc = _hdr_threshold(w, dens, alpha)
        thr[q] = fc
        r = _hdr_runs(v, dens, mid, fc, rlo[rptr[q]:], rhi[rptr[q]:])
        rptr[q + 1] = rptr[q] + r
    return rlo[:rptr[nq]], rhi[:rptr[nq]], rptr, thr


@njit(cache=True)
def _covered_grid(flat_vals, flat_wts, ptr, targets, alphas, method):
    """Covered counts per alpha for SPI (2), Quant (1), HDR (3), CHDR (4)."""
    nq = ptr.shape[0] - 1
    na = alphas.shape[0]
    hits = np.zeros(na, np.int64)
    buf_lo = np.empty(flat_vals.shape[0] + 1)
    buf_hi = np.empty(flat_vals.shape[0] + 1)
    for q in range(nq):
        v = flat_vals[ptr[q]:ptr[q + 1]]
        w = flat_wts[ptr[q]:ptr[q + 1]]
        y = targets[q]
        dens = np.empty(0)
        mid = np.empty(0)
        if method >= 3:
            bw = _silverman_w(v, w)
            dens, mid = _hdr_densities(v, w, bw)
        for a in range(na):
            alpha = alphas[a]
            if method == 2:
                lo, hi = _spi_w(v, w, alpha)
                ok = lo <= y and y <= hi
            elif method == 1:
                lo = _quantile_w(v, w, alpha / 2.0)
                hi = _quantile_w(v, w, 1.0 - alpha / 2.0)
                ok = lo <= y and y <= hi
            else:
                fc = _hdr_threshold(w, dens, alpha)
                r = _hdr_runs(v, dens, mid, fc, buf_lo, buf_hi)
                if method == 4:
                    ok = buf_lo[0] <= y and y <= buf_hi[r - 1]
                else:
                    ok = False
                    for t in range(r):
                        if buf_lo[t] <= y and y <= buf_hi[t]:
                            ok = True
                            break
            if ok:
                hits[a] += 1
    return hits


# ---------------------------------------------------------------------------
# public API on plain samples
# ---------------------------------------------------------------------------


def compress(sample: Sequence[float] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct sorted values and their multiplicities."""
    s = np.asarray(sample, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("sample must be non-empty")
    if not np.all(np.isfinite(s)):
        raise ValueError("sample contains non-finite values")
    vals, counts = np.unique(s, return_counts=True)
    return vals, counts.astype(np.int64)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def shortest_interval(sample, alpha: float) -> Interval:
    """Shortest window of sorted sample points holding ceil((1-alpha) m) of them.

    Ties go to the window with the smallest starting point.
    """
    vals, wts = compress(sample)
    lo, hi = _spi_w(vals, wts, _check_alpha(alpha))
    return Interval(float(lo), float(hi))


def quantile_interval(sample, alpha: float) -> Interval:
    """[q(alpha/2), q(1-alpha/2)] with linearly interpolated empirical quantiles."""
    vals, wts = compress(sample)
    alpha = _check_alpha(alpha)
    if wts.sum() < 2:
        raise ValueError("quantile interval needs at least two observations")
    lo = _quantile_w(vals, wts, alpha / 2.0)
    hi = _quantile_w(vals, wts, 1.0 - alpha / 2.0)
    return Interval(float(lo), float(hi))


def lm_half_width(m, sd, alpha):
    """Half-width t_{1-alpha/2, m-1} * sd * sqrt(1 + 1/m); broadcasts."""
    m = np.asarray(m, dtype=np.float64)
    sd = np.asarray(sd, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = stats.t.ppf(1.0 - np.asarray(alpha) / 2.0, np.maximum(m - 1.0, 1.0))
        half = t * sd * np.sqrt(1.0 + 1.0 / m)
    return np.where(sd > 0, half, 0.0)


def lm_interval(sample, alpha: float) -> Interval:
    """Intercept-only regression prediction interval around the sample mean."""
    vals, wts = compress(sample)
    alpha = _check_alpha(alpha)
    if wts.sum() < 2:
        raise ValueError("LM interval needs at least two observations")
    m, mean, sd = _moments_w(vals, wts)
    half = float(lm_half_width(m, sd, alpha))
    return Interval(mean - half, mean + half)


def silverman_bandwidth(sample) -> float:
    vals, wts = compress(sample)
    return float(_silverman_w(vals, wts))


def hdr_region(sample, alpha: float, bandwidth: float | None = None) -> HdrRegion:
    """Highest density region from a Gaussian KDE evaluated at the sample points.

    The density threshold is the largest value such that points at or above it
    hold ceil((1-alpha) m) of the sample; runs of selected points become the
    region's intervals.
    """
    vals, wts = compress(sample)
    alpha = _check_alpha(alpha)
    bw = -1.0 if bandwidth is None else float(bandwidth)
    if bandwidth is not None and not bw > 0:
        raise ValueError("bandwidth must be positive")
    ptr = np.array([0, vals.size], dtype=np.int64)
    rlo, rhi, _, thr = _hdr_batch(vals, wts, ptr, alpha, bw)
    return HdrRegion(tuple(Interval(float(a), float(b)) for a, b in zip(rlo, rhi)), float(thr[0]))


def chdr_interval(region: HdrRegion) -> Interval:
    return Interval(min(iv.lower for iv in region.intervals), max(iv.upper for iv in region.intervals))


def build_intervals(flat_vals, flat_wts, ptr, alpha: float, method: str) -> list:
    """Apply one method to a batch of compressed samples.

    Returns Interval objects, or HdrRegion objects for ``method == "hdr"``.
    """
    if method in ("hdr", "chdr"):
        rlo, rhi, rptr, thr = _hdr_batch(flat_vals, flat_wts, ptr, alpha, -1.0)
        out = []
        for q in range(ptr.size - 1):
            ivs = tuple(Interval(float(rlo[t]), float(rhi[t])) for t in range(rptr[q], rptr[q + 1]))
            region = HdrRegion(ivs, float(thr[q]))
            out.append(region if method == "hdr" else chdr_interval(region))
        return out
    if method == "lm":
        m, mean, sd = _moments_batch(flat_vals, flat_wts, ptr)
        half = lm_half_width(m, sd, alpha)
        return [Interval(float(c - h), float(c + h)) for c, h in zip(mean, half)]
    code = {"quant": 1, "spi": 2}[method]
    lo, hi = _interval_batch(flat_vals, flat_wts, ptr, alpha, code)
    return [Interval(float(a), float(b)) for a, b in zip(lo, hi)]


def covered_counts(flat_vals, flat_wts, ptr, targets, alphas, method: str) -> np.ndarray:
    """How many targets each method's interval covers, for every alpha in the grid."""
    alphas = np.asarray(alphas, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if method == "lm":
        m, mean, sd = _moments_batch(flat_vals, flat_wts, ptr)
        half = lm_half_width(m[None, :], sd[None, :], alphas[:, None])
        lo = mean[None, :] - half
        hi = mean[None, :] + half
        return ((lo <= targets) & (targets <= hi)).sum(axis=1)
    code = {"quant": 1, "spi": 2, "hdr": 3, "chdr": 4}[method]
    return _covered_grid(flat_vals, flat_wts, ptr, targets, alphas, code)
