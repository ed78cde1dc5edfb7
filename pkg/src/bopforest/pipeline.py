"""PIBF (boosted two-forest intervals) and RFPI (single forest, five PI methods)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np

from . import _kernels as K
from .data import Dataset
from .forest import Forest, ForestConfig, derive_seed, fit_arrays
from .interval import (METHODS, HdrRegion, Interval, _interval_batch, build_intervals, compress,
                       covered_counts)

log = logging.getLogger(__name__)

DEFAULT_RANGE = (0.945, 0.955)
RANGE_HALF_WIDTH = 0.005
GRID_STEP = 0.005
# queries per gather pass; bounds the memory held by compressed samples
_CHUNK = 512


@dataclass(frozen=True)
class Bop:
    """Bag of observations: training-row indices, repeated by multiplicity."""

    indices: np.ndarray
    flavor: Literal["inbag", "oob"]

    @property
    def size(self) -> int:
        return int(self.indices.size)

    @property
    def empty(self) -> bool:
        return self.indices.size == 0


@dataclass
class Samples:
    """Compressed per-query samples: query q owns vals[ptr[q]:ptr[q+1]]."""

    vals: np.ndarray
    wts: np.ndarray
    ptr: np.ndarray
    size: np.ndarray

    @property
    def n(self) -> int:
        return self.ptr.size - 1

    def subset(self, keep: np.ndarray) -> "Samples":
        keep = np.flatnonzero(keep)
        pieces_v = [self.vals[self.ptr[q]:self.ptr[q + 1]] for q in keep]
        pieces_w = [self.wts[self.ptr[q]:self.ptr[q + 1]] for q in keep]
        return _concat(pieces_v, pieces_w, self.size[keep])

    @staticmethod
    def concat(parts: list["Samples"]) -> "Samples":
        vals = np.concatenate([p.vals for p in parts])
        wts = np.concatenate([p.wts for p in parts])
        sizes = np.concatenate([p.size for p in parts])
        ptr = [np.zeros(1, np.int64)]
        off = 0
        for p in parts:
            ptr.append(p.ptr[1:] + off)
            off += p.ptr[-1]
        return Samples(vals, wts, np.concatenate(ptr), sizes)


def _concat(pieces_v, pieces_w, sizes) -> Samples:
    ptr = np.zeros(len(pieces_v) + 1, np.int64)
    ptr[1:] = np.cumsum([len(v) for v in pieces_v])
    vals = np.concatenate(pieces_v) if pieces_v else np.empty(0)
    wts = np.concatenate(pieces_w) if pieces_w else np.empty(0, np.int64)
    return Samples(vals, wts, ptr, np.asarray(sizes, np.int64))


def _gather(forest: Forest, leaves, tree_use, oob_flavor: bool, values, usable) -> Samples:
    order = np.argsort(values, kind="stable")
    parts = []
    for a in range(0, leaves.shape[0], _CHUNK):
        fv, fw, ptr, size = K.gather_samples(
            np.ascontiguousarray(leaves[a:a + _CHUNK]), np.ascontiguousarray(tree_use[a:a + _CHUNK]),
            forest.member, forest.leaf_start, forest.inbag, oob_flavor, values, order, usable)
        parts.append(Samples(fv, fw, ptr, size))
    if not parts:
        return Samples(np.empty(0), np.empty(0, np.int64), np.zeros(1, np.int64), np.empty(0, np.int64))
    return parts[0] if len(parts) == 1 else Samples.concat(parts)


def query_samples(forest: Forest, X, flavor: str, values, usable=None) -> Samples:
    """Samples of ``values`` over each query row's bag of observations."""
    leaves = forest.apply(X)
    use = np.ones(leaves.shape, dtype=np.bool_)
    usable = np.isfinite(values) if usable is None else usable
    return _gather(forest, leaves, use, flavor == "oob", np.ascontiguousarray(values, np.float64), usable)


def oob_training_samples(forest: Forest, values, usable=None) -> Samples:
    """Samples over each training row's OOB-BOP (in-bag comembers, OOB trees only)."""
    leaves = forest.leaf_of.T
    use = forest.inbag.T == 0
    usable = np.isfinite(values) if usable is None else usable
    return _gather(forest, leaves, use, False, np.ascontiguousarray(values, np.float64), usable)


def build_bop(f: Forest, x, flavor: Literal["inbag", "oob"] = "inbag") -> Bop:
    leaves = f.apply(x)[0]
    use = np.ones(f.num_trees, dtype=np.bool_)
    idx = K.bop_indices(leaves, use, f.member, f.leaf_start, f.inbag, flavor == "oob")
    return Bop(np.sort(idx), flavor)


def build_oob_bop_training(f: Forest, i: int) -> Bop:
    if not 0 <= i < f.n_train:
        raise IndexError(f"training index {i} out of range")
    use = f.inbag[:, i] == 0
    idx = K.bop_indices(np.ascontiguousarray(f.leaf_of[:, i]), use, f.member, f.leaf_start, f.inbag, False)
    bop = Bop(np.sort(idx), "inbag")
    if bop.empty:
        log.debug("training row %d has an empty OOB-BOP", i)
    return bop


# ---------------------------------------------------------------------------
# working-level selection
# ---------------------------------------------------------------------------


def calibration_grid(alpha: float) -> np.ndarray:
    top = min(0.995, 4.0 * alpha)
    k = int(np.floor(top / GRID_STEP + 1e-9))
    return np.round(np.arange(1, k + 1) * GRID_STEP, 6)


def select_working_alpha(alpha: float, hits: np.ndarray, n: int, coverage_range) -> float:
    """Pick the working level from covered counts.

    ``hits[0]`` is the count at ``alpha`` itself and ``hits[1:]`` follow
    ``calibration_grid(alpha)``.  Inside the acceptable range the target
    level is kept; otherwise the grid level whose coverage is closest to
    1 - alpha wins, ties going to the larger level.
    """
    lo, hi = coverage_range
    cov = hits[0] / n
    if lo <= cov <= hi:
        return float(alpha)
    grid = calibration_grid(alpha)
    gap = np.round(np.abs(hits[1:] / n - (1.0 - alpha)), 12)
    best = np.flatnonzero(gap == gap.min())[-1]
    log.debug("coverage %.4f at alpha=%.3f outside %s; working level %.3f", cov, alpha, coverage_range, grid[best])
    return float(grid[best])


def default_range(alpha: float) -> tuple[float, float]:
    """Acceptable coverage band 1 - alpha +/- 0.005, i.e. [0.945, 0.955] at alpha = 0.05."""
    c = 1.0 - alpha
    return round(max(c - RANGE_HALF_WIDTH, 0.0), 10), round(min(c + RANGE_HALF_WIDTH, 1.0), 10)


def _check_range(alpha: float, coverage_range=None) -> tuple[float, float]:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if coverage_range is None:
        return default_range(alpha)
    lo, hi = (float(v) for v in coverage_range)
    if not (0 <= lo <= 1 - alpha <= hi <= 1):
        raise ValueError(f"coverage range {coverage_range} must bracket the target coverage {1 - alpha:g}")
    return lo, hi


def _working_alpha(samples: Samples, targets, alpha: float, coverage_range, method: str) -> float:
    alphas = np.concatenate([[alpha], calibration_grid(alpha)])
    hits = covered_counts(samples.vals, samples.wts, samples.ptr, targets, alphas, method)
    return select_working_alpha(alpha, hits, samples.n, coverage_range)


# ---------------------------------------------------------------------------
# PIBF
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PibfModel:
    """Two-forest PIBF fit.

    ``forest2`` is trained on the rows ``rows2`` whose first-forest OOB
    prediction exists; its indices refer to positions within ``rows2``.
    Residual vectors are indexed by training row and hold NaN where undefined.
    """

    forest1: Forest
    forest2: Forest
    response: np.ndarray
    rows2: np.ndarray
    oob_pred1: np.ndarray
    oob_resid_raw: np.ndarray
    oob_pred2: np.ndarray
    oob_resid_corrected: np.ndarray
    alpha_target: float = 0.05
    alpha_working: float = 0.05
    coverage_range: tuple[float, float] = DEFAULT_RANGE
    calibration: str = "none"

    @property
    def oob_pred_corrected(self) -> np.ndarray:
        return self.oob_pred1 + self.oob_pred2

    @property
    def _resid2(self) -> np.ndarray:
        return self.oob_resid_corrected[self.rows2]


@dataclass
class PibfPrediction:
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    fallback: np.ndarray
    bop_size: np.ndarray

    def intervals(self) -> list[Interval]:
        return [Interval(float(a), float(b)) for a, b in zip(self.lower, self.upper)]


def _fit_pibf_core(X, y, cfg: ForestConfig, alpha: float, coverage_range) -> PibfModel:
    cfg1 = replace(cfg, split_rule="ls", seed=derive_seed(cfg.seed, 1))
    cfg2 = replace(cfg, split_rule="ls", seed=derive_seed(cfg.seed, 2))
    f1 = fit_arrays(X, y, cfg1)
    pred1, valid1 = f1.oob_predictions()
    if not valid1.any():
        raise ValueError("no training row is out-of-bag in any tree; increase the number of trees")
    rows2 = np.flatnonzero(valid1)
    if rows2.size < cfg.min_node_size:
        raise ValueError("too few rows with OOB predictions to fit the residual forest")
    resid = y - pred1
    f2 = fit_arrays(X[rows2], resid[rows2], cfg2)
    pred2_local, valid2 = f2.oob_predictions()
    pred2 = np.full(y.size, np.nan)
    pred2[rows2[valid2]] = pred2_local[valid2]
    corrected = y - (pred1 + pred2)
    return PibfModel(f1, f2, np.asarray(y, np.float64), rows2, pred1, resid, pred2, corrected,
                     alpha_target=alpha, alpha_working=alpha, coverage_range=tuple(coverage_range))


def pibf_samples(m: PibfModel, X) -> tuple[np.ndarray, Samples, np.ndarray]:
    """Point predictions and corrected-residual samples over each BOP*.

    Queries whose BOP* is empty get the pooled corrected residuals; the
    returned mask flags them.
    """
    X = m.forest1._check_X(X)
    point = m.forest1.predict(X) + m.forest2.predict(X)
    resid = m._resid2
    smp = query_samples(m.forest2, X, "oob", resid)
    empty = smp.size == 0
    if empty.any():
        pooled_v, pooled_w = compress(resid[np.isfinite(resid)])
        pieces_v, pieces_w, sizes = [], [], []
        for q in range(smp.n):
            if empty[q]:
                pieces_v.append(pooled_v)
                pieces_w.append(pooled_w)
                sizes.append(int(pooled_w.sum()))
            else:
                pieces_v.append(smp.vals[smp.ptr[q]:smp.ptr[q + 1]])
                pieces_w.append(smp.wts[smp.ptr[q]:smp.ptr[q + 1]])
                sizes.append(int(smp.size[q]))
        smp = _concat(pieces_v, pieces_w, sizes)
    return point, smp, empty


def pibf_predict(m: PibfModel, X, alpha: float | None = None) -> PibfPrediction:
    alpha = m.alpha_working if alpha is None else alpha
    point, smp, empty = pibf_samples(m, X)
    lo, hi = _interval_batch(smp.vals, smp.wts, smp.ptr, alpha, 2)
    return PibfPrediction(point, point + lo, point + hi, empty, smp.size)


def pibf_predict_interval(m: PibfModel, x) -> tuple[float, Interval]:
    pred = pibf_predict(m, np.atleast_2d(x))
    return float(pred.point[0]), Interval(float(pred.lower[0]), float(pred.upper[0]))


def pibf_residual_sample(m: PibfModel, x) -> np.ndarray:
    """F-hat(x): corrected OOB residuals of the BOP* members, with multiplicity."""
    bop = build_bop(m.forest2, x, "oob")
    return m._resid2[bop.indices]


def _cv_samples(X, y, cfg: ForestConfig, alpha: float, folds: int, coverage_range) -> tuple[Samples, np.ndarray]:
    n = y.size
    if folds < 2:
        raise ValueError("cross-validation needs at least two folds")
    if folds > n:
        raise ValueError(f"folds={folds} exceeds the number of training rows {n}")
    perm = np.random.default_rng(derive_seed(cfg.seed, 3)).permutation(n)
    parts, targets = [], []
    for k, test_idx in enumerate(np.array_split(perm, folds)):
        train_idx = np.sort(np.setdiff1d(perm, test_idx))
        test_idx = np.sort(test_idx)
        fold = _fit_pibf_core(X[train_idx], y[train_idx], replace(cfg, seed=derive_seed(cfg.seed, 4, k)),
                              alpha, coverage_range)
        point, smp, _ = pibf_samples(fold, X[test_idx])
        parts.append(smp)
        targets.append(y[test_idx] - point)
    return Samples.concat(parts), np.concatenate(targets)


def calibrate_cv(train: Dataset, cfg: ForestConfig, alpha: float = 0.05, folds: int = 5,
                 coverage_range=None) -> float:
    """Working level from k-fold cross-validated PIBF coverage."""
    coverage_range = _check_range(alpha, coverage_range)
    smp, targets = _cv_samples(train.features, train.response, cfg, alpha, folds, coverage_range)
    return _working_alpha(smp, targets, alpha, coverage_range, "spi")


def _pibf_oob_samples(m: PibfModel) -> tuple[Samples, np.ndarray, np.ndarray]:
    resid = m._resid2
    smp = oob_training_samples(m.forest2, resid)
    return smp, resid, m.rows2


def calibrate_oob(model, train: Dataset, alpha: float = 0.05, coverage_range=None,
                  method: str | None = None) -> float:
    """Working level from training coverage of PIs built on OOB-BOPs.

    For a PibfModel the samples are corrected residuals and ``method`` is
    SPI; an RfpiModel needs the PI ``method`` to calibrate.
    """
    coverage_range = _check_range(alpha, coverage_range)
    if isinstance(model, PibfModel):
        if train.n != model.response.size:
            raise ValueError("training data does not match the model")
        smp, targets, _ = _pibf_oob_samples(model)
        method = "spi"
    elif isinstance(model, RfpiModel):
        if method is None:
            raise ValueError("RFPI calibration needs a PI method")
        smp = oob_training_samples(model.forest, model.response)
        targets = model.response
    else:
        raise TypeError(f"cannot calibrate {type(model).__name__}")
    ok = (smp.size > 0) & np.isfinite(targets)
    if (~ok).mean() > 0.5:
        raise ValueError(f"{int((~ok).sum())} of {ok.size} training rows have empty OOB-BOPs; use more trees")
    return _working_alpha(smp.subset(ok), targets[ok], alpha, coverage_range, method)


def fit_pibf(train: Dataset, cfg: ForestConfig, alpha: float = 0.05,
             calibration: Literal["none", "cv", "oob"] = "cv", folds: int = 5,
             coverage_range=None) -> PibfModel:
    if train.response is None:
        raise ValueError("training data needs a response")
    coverage_range = _check_range(alpha, coverage_range)
    if calibration not in ("none", "cv", "oob"):
        raise ValueError(f"unknown calibration {calibration!r}")
    alpha_w = alpha
    if calibration == "cv":
        alpha_w = calibrate_cv(train, cfg, alpha, folds, coverage_range)
    model = _fit_pibf_core(train.features, train.response, cfg, alpha, coverage_range)
    if calibration == "oob":
        alpha_w = calibrate_oob(model, train, alpha, coverage_range)
    return replace(model, alpha_working=alpha_w, calibration=calibration)


@dataclass
class OobSummary:
    mean_length: float
    coverage: float
    mae: float
    rmse: float


def pibf_oob_summary(m: PibfModel) -> OobSummary:
    """Training-set PIs from OOB-BOPs at the working level, with OOB errors."""
    smp, resid, rows = _pibf_oob_samples(m)
    ok = (smp.size > 0) & np.isfinite(resid)
    smp = smp.subset(ok)
    lo, hi = _interval_batch(smp.vals, smp.wts, smp.ptr, m.alpha_working, 2)
    target = resid[ok]
    err = resid[np.isfinite(resid)]
    return OobSummary(float(np.mean(hi - lo)), float(np.mean((lo <= target) & (target <= hi))),
                      float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2))))


# ---------------------------------------------------------------------------
# RFPI
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RfpiModel:
    forest: Forest
    response: np.ndarray
    pi_methods: tuple[str, ...]
    alpha_target: float = 0.05
    alpha_working: dict[str, float] = field(default_factory=dict)
    coverage_range: tuple[float, float] = DEFAULT_RANGE
    calibrated: bool = False

    @property
    def split_rule(self) -> str:
        return self.forest.config.split_rule


@dataclass
class RfpiPrediction:
    point: np.ndarray
    intervals: dict[str, list]  # method -> Interval per query (HdrRegion for "hdr")


def _check_methods(pi_methods: Iterable[str]) -> tuple[str, ...]:
    methods = tuple(dict.fromkeys(m.lower() for m in pi_methods))
    if not methods:
        raise ValueError("at least one PI method is required")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown PI methods {bad}; choose from {METHODS}")
    return methods


def fit_rfpi(train: Dataset, cfg: ForestConfig, alpha: float = 0.05, pi_methods: Iterable[str] = METHODS,
             calibrate: bool = True, coverage_range=None) -> RfpiModel:
    if train.response is None:
        raise ValueError("training data needs a response")
    methods = _check_methods(pi_methods)
    if calibrate:
        coverage_range = _check_range(alpha, coverage_range)
    elif coverage_range is None:
        coverage_range = default_range(alpha)
    if cfg.split_alpha is None:
        cfg = replace(cfg, split_alpha=alpha)
    forest = fit_arrays(train.features, train.response, cfg)
    model = RfpiModel(forest, train.response.copy(), methods, alpha, {m: alpha for m in methods},
                      tuple(coverage_range), calibrate)
    if not calibrate:
        return model
    smp = oob_training_samples(forest, model.response)
    ok = smp.size > 0
    if (~ok).mean() > 0.5:
        raise ValueError(f"{int((~ok).sum())} of {ok.size} training rows have empty OOB-BOPs; use more trees")
    smp = smp.subset(ok)
    targets = model.response[ok]
    working = {m: _working_alpha(smp, targets, alpha, coverage_range, m) for m in methods}
    return replace(model, alpha_working=working)


def rfpi_predict(m: RfpiModel, X, methods: Iterable[str] | None = None) -> RfpiPrediction:
    methods = m.pi_methods if methods is None else _check_methods(methods)
    leaves = m.forest.apply(X)
    point = K.predict_from_leaves(m.forest.value, leaves)
    use = np.ones(leaves.shape, dtype=np.bool_)
    smp = _gather(m.forest, leaves, use, False, m.response, np.ones(m.response.size, np.bool_))
    out = {meth: build_intervals(smp.vals, smp.wts, smp.ptr, m.alpha_working[meth], meth) for meth in methods}
    return RfpiPrediction(point, out)


def rfpi_predict_intervals(m: RfpiModel, x) -> tuple[float, dict[str, Interval | HdrRegion]]:
    pred = rfpi_predict(m, np.atleast_2d(x))
    return float(pred.point[0]), {k: v[0] for k, v in pred.intervals.items()}
