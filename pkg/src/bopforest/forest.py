"""Bagged regression trees with LS, L1 and SPI split rules."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from . import _kernels as K
from .data import Dataset
from .interval import shortest_interval

SPLIT_RULES = {"ls": K.RULE_LS, "l1": K.RULE_L1, "spi": K.RULE_SPI}


def default_mtry(p: int) -> int:
    return max(p // 3, 1)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic 63-bit child seed for (seed, path...)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in path))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def n_threads() -> int:
    env = os.environ.get("BOPFOREST_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 1000
    mtry: int | None = None          # None -> max(floor(p/3), 1)
    min_node_size: int = 5
    split_rule: Literal["ls", "l1", "spi"] = "ls"
    split_alpha: float | None = None  # SPI rule only; None -> 0.05
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.split_rule not in SPLIT_RULES:
            raise ValueError(f"unknown split rule {self.split_rule!r}")
        if self.split_alpha is not None and not 0 < self.split_alpha < 1:
            raise ValueError("split_alpha must lie in (0, 1)")

    def resolved_mtry(self, p: int) -> int:
        mtry = default_mtry(p) if self.mtry is None else self.mtry
        if mtry > p:
            raise ValueError(f"mtry={mtry} exceeds the number of features {p}")
        return mtry


@dataclass(frozen=True)
class Forest:
    """Fitted trees plus in-bag multiplicities and training-row leaf buckets.

    Node arrays are padded to a common width; ``n_nodes[b]`` gives the used
    prefix of tree b.
    """

    config: ForestConfig
    n_features: int
    feature: np.ndarray      # (B, cap) int32, -1 at leaves
    threshold: np.ndarray    # (B, cap) float64
    left: np.ndarray         # (B, cap) int32
    right: np.ndarray        # (B, cap) int32
    value: np.ndarray        # (B, cap) float64, in-bag mean of each node
    n_nodes: np.ndarray      # (B,) int32
    inbag: np.ndarray        # (B, n) int32 bootstrap multiplicities
    leaf_of: np.ndarray      # (B, n) int32 leaf of each training row
    member: np.ndarray       # (B, n) int32 training rows grouped by leaf
    leaf_start: np.ndarray   # (B, cap + 1) int32 bucket offsets into member

    @property
    def num_trees(self) -> int:
        return self.feature.shape[0]

    @property
    def n_train(self) -> int:
        return self.inbag.shape[1]

    def _check_X(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def apply(self, X) -> np.ndarray:
        """Leaf index per (row, tree)."""
        return K.apply_trees(self.feature, self.threshold, self.left, self.right, self._check_X(X))

    def predict(self, X) -> np.ndarray:
        return K.predict_from_leaves(self.value, self.apply(X))

    def oob_predictions(self) -> tuple[np.ndarray, np.ndarray]:
        """OOB prediction per training row and the mask of rows that have one."""
        return K.oob_predict(self.value, self.leaf_of, self.inbag)

    def leaf_comembers(self, x, b: int, flavor: str = "inbag") -> np.ndarray:
        if not 0 <= b < self.num_trees:
            raise IndexError(f"tree index {b} out of range")
        leaf = self.apply(x)[0, b]
        use = np.zeros(self.num_trees, dtype=np.bool_)
        use[b] = True
        leaves = np.zeros(self.num_trees, dtype=np.int32)
        leaves[b] = leaf
        return K.bop_indices(leaves, use, self.member, self.leaf_start, self.inbag, _is_oob(flavor))

    def tree_structure(self, b: int) -> dict[str, np.ndarray]:
        k = int(self.n_nodes[b])
        return {
            "feature": self.feature[b, :k],
            "threshold": self.threshold[b, :k],
            "left": self.left[b, :k],
            "right": self.right[b, :k],
            "value": self.value[b, :k],
        }


def _is_oob(flavor: str) -> bool:
    if flavor not in ("inbag", "oob"):
        raise ValueError(f"flavor must be 'inbag' or 'oob', got {flavor!r}")
    return flavor == "oob"


def fit_arrays(X: np.ndarray, y: np.ndarray, cfg: ForestConfig) -> Forest:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("need at least one feature")
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("response length does not match feature rows")
    if n < cfg.min_node_size:
        raise ValueError(f"n={n} is smaller than min_node_size={cfg.min_node_size}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("features and response must be finite")
    mtry = cfg.resolved_mtry(p)
    B = cfg.num_trees
    cap = K.node_capacity(n, cfg.min_node_size)
    seeds = np.array([derive_seed(cfg.seed, b) for b in range(B)], dtype=np.uint64)
    split_alpha = 0.05 if cfg.split_alpha is None else cfg.split_alpha

    feature = np.empty((B, cap), np.int32)
    threshold = np.empty((B, cap))
    left = np.empty((B, cap), np.int32)
    right = np.empty((B, cap), np.int32)
    value = np.empty((B, cap))
    inbag = np.empty((B, n), np.int32)
    leaf_of = np.empty((B, n), np.int32)
    member = np.empty((B, n), np.int32)
    leaf_start = np.empty((B, cap + 1), np.int32)
    n_nodes = np.empty(B, np.int32)
    args = (feature, threshold, left, right, value, inbag, leaf_of, member, leaf_start, n_nodes)
    rule = SPLIT_RULES[cfg.split_rule]

    workers = min(n_threads(), B)
    if workers == 1:
        K.grow_trees(X, y, seeds, 0, B, mtry, cfg.min_node_size, rule, split_alpha, *args)
    else:
        bounds = np.linspace(0, B, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            jobs = [pool.submit(K.grow_trees, X, y, seeds, int(a), int(b), mtry,
                                cfg.min_node_size, rule, split_alpha, *args)
                    for a, b in zip(bounds[:-1], bounds[1:])]
            for job in jobs:
                job.result()
    return Forest(cfg, p, feature, threshold, left, right, value, n_nodes, inbag, leaf_of, member, leaf_start)


def fit_forest(ds: Dataset, cfg: ForestConfig) -> Forest:
    if ds.response is None:
        raise ValueError("training data needs a response")
    return fit_arrays(ds.features, ds.response, cfg)


def predict_point(f: Forest, x) -> float:
    return float(f.predict(x)[0])


def oob_predictions(f: Forest, ds: Dataset | None = None) -> tuple[np.ndarray, np.ndarray]:
    if ds is not None and ds.n != f.n_train:
        raise ValueError("dataset is not the forest's training data")
    return f.oob_predictions()


def leaf_comembers(f: Forest, x, b: int, flavor: str = "inbag") -> np.ndarray:
    return f.leaf_comembers(x, b, flavor)


def with_rule(cfg: ForestConfig, rule: str, split_alpha: float | None = None) -> ForestConfig:
    return replace(cfg, split_rule=rule, split_alpha=split_alpha if split_alpha is not None else cfg.split_alpha)


# ---------------------------------------------------------------------------
# split criteria on explicit child samples (lower is better)
# ---------------------------------------------------------------------------


def _sides(y_left, y_right) -> tuple[np.ndarray, np.ndarray]:
    yl = np.asarray(y_left, dtype=np.float64).ravel()
    yr = np.asarray(y_right, dtype=np.float64).ravel()
    if yl.size == 0 or yr.size == 0:
        raise ValueError("both sides of a split must be non-empty")
    return yl, yr


def eval_split_ls(y_left, y_right) -> float:
    yl, yr = _sides(y_left, y_right)
    return float(((yl - yl.mean()) ** 2).sum() + ((yr - yr.mean()) ** 2).sum())


def eval_split_l1(y_left, y_right) -> float:
    yl, yr = _sides(y_left, y_right)
    return float(np.abs(yl - np.median(yl)).sum() + np.abs(yr - np.median(yr)).sum())


def eval_split_spi(y_left, y_right, alpha: float) -> float:
    yl, yr = _sides(y_left, y_right)
    return float(sum(0.0 if s.size == 1 else shortest_interval(s, alpha).length for s in (yl, yr)))
