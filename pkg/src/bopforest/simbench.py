"""Simulated regression problems and a benchmark harness for interval methods."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import Dataset, from_arrays
from .forest import ForestConfig, derive_seed
from .interval import METHODS, HdrRegion, Interval
from .pipeline import calibrate_oob, fit_pibf, fit_rfpi, pibf_predict, rfpi_predict, _check_methods

PROBLEMS = ("friedman1", "friedman2", "friedman3", "peak", "h2c", "tree_normal", "tree_exp")
DEFAULT_NOISE = {"friedman1": 1.0, "friedman2": 125.0, "friedman3": 0.01, "tree_normal": 1.0, "tree_exp": 1.0}
TREE_MEANS = np.array([5.0, 10, 15, 20, 25, 30, 35, 40])
PEAK_DIM = 20


@dataclass(frozen=True)
class SimSpec:
    problem: str
    n: int
    seed: int = 0
    noise_sd: float | None = None  # tree_exp: mean of the exponential error

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    @property
    def noise(self) -> float:
        return DEFAULT_NOISE.get(self.problem, 0.0) if self.noise_sd is None else float(self.noise_sd)


def _rng(spec: SimSpec) -> np.random.Generator:
    return np.random.default_rng(spec.seed)


def friedman1_mean(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
            + 10 * X[:, 3] + 5 * X[:, 4])


def friedman2_mean(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.sqrt(X[:, 0] ** 2 + (X[:, 1] * X[:, 2] - 1 / (X[:, 1] * X[:, 3])) ** 2)


def friedman3_mean(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.arctan((X[:, 1] * X[:, 2] - 1 / (X[:, 1] * X[:, 3])) / X[:, 0])


def peak_mean(X) -> np.ndarray:
    r = np.linalg.norm(np.asarray(X, dtype=np.float64), axis=1)
    return 25 * np.exp(-0.5 * r ** 2)


def tree_mean(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    right = X[:, 0] >= 0
    second = np.where(right, X[:, 2], X[:, 1]) >= 0
    # third-level split variable: x4/x5 under x1<0, x6/x7 under x1>=0
    col = 3 + 2 * right + second
    third = X[np.arange(X.shape[0]), col] >= 0
    return TREE_MEANS[4 * right + 2 * second + third]


def _uniform_f2(rng, n) -> np.ndarray:
    lo = np.array([0.0, 40 * np.pi, 0.0, 1.0])
    hi = np.array([100.0, 560 * np.pi, 1.0, 11.0])
    return lo + (hi - lo) * rng.uniform(size=(n, 4))


def gen_friedman1(spec: SimSpec, X=None) -> Dataset:
    rng = _rng(spec)
    X = rng.uniform(size=(spec.n, 10)) if X is None else np.asarray(X, dtype=np.float64)
    return from_arrays(X, friedman1_mean(X) + spec.noise * rng.standard_normal(X.shape[0]))


def gen_friedman2(spec: SimSpec, X=None) -> Dataset:
    rng = _rng(spec)
    X = _uniform_f2(rng, spec.n) if X is None else np.asarray(X, dtype=np.float64)
    return from_arrays(X, friedman2_mean(X) + spec.noise * rng.standard_normal(X.shape[0]))


def gen_friedman3(spec: SimSpec, X=None) -> Dataset:
    rng = _rng(spec)
    if X is None:
        X = _uniform_f2(rng, spec.n)
        while np.any(X[:, 0] == 0):
            bad = X[:, 0] == 0
            X[bad] = _uniform_f2(rng, int(bad.sum()))
    else:
        X = np.asarray(X, dtype=np.float64)
        if np.any(X[:, 0] == 0):
            raise ValueError("x1 must be non-zero")
    return from_arrays(X, friedman3_mean(X) + spec.noise * rng.standard_normal(X.shape[0]))


def gen_peak(spec: SimSpec, X=None) -> Dataset:
    rng = _rng(spec)
    if X is None:
        r = 3 * rng.uniform(size=spec.n)
        d = rng.standard_normal((spec.n, PEAK_DIM))
        X = d / np.linalg.norm(d, axis=1, keepdims=True) * r[:, None]
    else:
        X = np.asarray(X, dtype=np.float64)
    return from_arrays(X, peak_mean(X))


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        raise ValueError("min-max scaling is undefined for a constant sample")
    return (v - lo) / (hi - lo)


def h2c_moments(X) -> tuple[np.ndarray, np.ndarray]:
    """Sample-scaled mean and standard deviation of the heteroscedastic problem."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("the heteroscedastic problem needs n >= 2 for its sample scaling")
    mu = 3 * _minmax(friedman1_mean(X[:, :5])) - 1.5
    sd = np.exp(3 * _minmax(friedman1_mean(X[:, 5:])) - 1.5)
    return mu, sd


def gen_h2c(spec: SimSpec, X=None) -> Dataset:
    rng = _rng(spec)
    X = rng.uniform(size=(spec.n, 10)) if X is None else np.asarray(X, dtype=np.float64)
    mu, sd = h2c_moments(X)
    return from_arrays(X, mu + sd * rng.standard_normal(X.shape[0]))


def gen_tree(spec: SimSpec, error: str = "normal", X=None) -> Dataset:
    if error not in ("normal", "exponential"):
        raise ValueError("error must be 'normal' or 'exponential'")
    rng = _rng(spec)
    X = rng.standard_normal((spec.n, 7)) if X is None else np.asarray(X, dtype=np.float64)
    if error == "normal":
        eps = spec.noise * rng.standard_normal(X.shape[0])
    else:
        eps = rng.exponential(spec.noise, X.shape[0])
    return from_arrays(X, tree_mean(X) + eps)


GENERATORS: dict[str, Callable[..., Dataset]] = {
    "friedman1": gen_friedman1,
    "friedman2": gen_friedman2,
    "friedman3": gen_friedman3,
    "peak": gen_peak,
    "h2c": gen_h2c,
    "tree_normal": lambda spec, X=None: gen_tree(spec, "normal", X),
    "tree_exp": lambda spec, X=None: gen_tree(spec, "exponential", X),
}


def generate(spec: SimSpec, X=None) -> Dataset:
    return GENERATORS[spec.problem](spec, X)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkReport:
    coverage: float | None
    mean_pi_length: float
    mae: float | None
    rmse: float | None
    wall_time_s: float = 0.0
    relative_length: float | None = None
    per_method: dict[str, "BenchmarkReport"] = field(default_factory=dict)


def relative_length(ml: float, ml_best: float) -> float:
    """Percentage increase of a mean PI length over the best one."""
    return 100.0 * (ml - ml_best) / ml_best


def evaluate(pis: Sequence[Interval | HdrRegion], points, truth=None, baseline_length: float | None = None,
             wall_time_s: float = 0.0) -> BenchmarkReport:
    points = np.asarray(points, dtype=np.float64)
    if len(pis) != points.size:
        raise ValueError("intervals and predictions differ in length")
    lengths = np.array([pi.length for pi in pis])
    ml = float(lengths.mean())
    rel = None if baseline_length is None else relative_length(ml, baseline_length)
    if truth is None:
        return BenchmarkReport(None, ml, None, None, wall_time_s, rel)
    truth = np.asarray(truth, dtype=np.float64)
    if truth.size != points.size:
        raise ValueError("truth and predictions differ in length")
    cov = float(np.mean([pi.contains(t) for pi, t in zip(pis, truth)]))
    err = points - truth
    return BenchmarkReport(cov, ml, float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2))), wall_time_s, rel)


def evaluate_bounds(lower, upper, points, truth) -> BenchmarkReport:
    """Vectorized ``evaluate`` for plain intervals given as bound arrays."""
    lower, upper, points, truth = (np.asarray(a, dtype=np.float64) for a in (lower, upper, points, truth))
    err = points - truth
    return BenchmarkReport(float(np.mean((lower <= truth) & (truth <= upper))), float(np.mean(upper - lower)),
                           float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2))))


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkConfig:
    problem: str = "friedman1"
    n_train: int = 200
    n_test: int = 1000
    replications: int = 10
    alpha: float = 0.05
    forest: ForestConfig = ForestConfig(num_trees=2000)
    pibf_calibrations: tuple[str, ...] = ("cv",)
    rfpi_rules: tuple[str, ...] = ()
    rfpi_methods: tuple[str, ...] = METHODS
    folds: int = 5
    coverage_range: tuple[float, float] | None = None  # None -> 1 - alpha +/- 0.005
    seed: int = 0
    noise_sd: float | None = None


def replicate_data(cfg: BenchmarkConfig, r: int) -> tuple[Dataset, Dataset]:
    train = generate(SimSpec(cfg.problem, cfg.n_train, derive_seed(cfg.seed, r, 0), cfg.noise_sd))
    test = generate(SimSpec(cfg.problem, cfg.n_test, derive_seed(cfg.seed, r, 1), cfg.noise_sd))
    return train, test


def run_replication(cfg: BenchmarkConfig, r: int) -> dict[str, BenchmarkReport]:
    """All configured methods on one train/test draw, keyed by method label.

    PIBF variants share one forest pair; only the working level changes.
    RFPI methods of one split rule share one forest.
    """
    train, test = replicate_data(cfg, r)
    fcfg = replace(cfg.forest, seed=derive_seed(cfg.seed, r, 2))
    out: dict[str, BenchmarkReport] = {}
    cals = tuple(cfg.pibf_calibrations)
    if cals:
        t0 = time.perf_counter()
        first = "cv" if "cv" in cals else "none"
        model = fit_pibf(train, fcfg, cfg.alpha, first, cfg.folds, cfg.coverage_range)
        base_time = time.perf_counter() - t0
        for cal in cals:
            t1 = time.perf_counter()
            if cal == "none":
                a = cfg.alpha
            elif cal == "cv":
                a = model.alpha_working
            else:
                a = calibrate_oob(model, train, cfg.alpha, cfg.coverage_range)
            pred = pibf_predict(model, test.features, a)
            rep = evaluate_bounds(pred.lower, pred.upper, pred.point, test.response)
            rep.wall_time_s = base_time + time.perf_counter() - t1
            out[f"pibf-{cal}"] = rep
    methods = _check_methods(cfg.rfpi_methods)
    for rule in cfg.rfpi_rules:
        t0 = time.perf_counter()
        model = fit_rfpi(train, replace(fcfg, split_rule=rule), cfg.alpha, methods, True, cfg.coverage_range)
        pred = rfpi_predict(model, test.features)
        elapsed = time.perf_counter() - t0
        for meth in methods:
            out[f"{rule}-{meth}"] = evaluate(pred.intervals[meth], pred.point, test.response,
                                             wall_time_s=elapsed)
    return out


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    runs: list[dict[str, BenchmarkReport]]

    @property
    def methods(self) -> list[str]:
        return list(self.runs[0]) if self.runs else []

    def values(self, method: str, metric: str) -> np.ndarray:
        return np.array([getattr(run[method], metric) for run in self.runs], dtype=np.float64)

    def summary(self) -> dict[str, BenchmarkReport]:
        """Mean over replications; relative length against the shortest mean length."""
        means = {m: {k: float(np.mean(self.values(m, k)))
                     for k in ("coverage", "mean_pi_length", "mae", "rmse", "wall_time_s")}
                 for m in self.methods}
        best = min(v["mean_pi_length"] for v in means.values()) if means else 0.0
        return {m: BenchmarkReport(v["coverage"], v["mean_pi_length"], v["mae"], v["rmse"], v["wall_time_s"],
                                   relative_length(v["mean_pi_length"], best))
                for m, v in means.items()}


def run_benchmark(cfg: BenchmarkConfig, replications: Iterable[int] | None = None,
                  progress: Callable[[int], None] | None = None) -> BenchmarkResult:
    reps = range(cfg.replications) if replications is None else replications
    runs = []
    for r in reps:
        runs.append(run_replication(cfg, r))
        if progress is not None:
            progress(r)
    return BenchmarkResult(cfg, runs)
