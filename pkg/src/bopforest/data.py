"""Tabular data ingestion: CSV loading, categorical encoding, train/test split."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

COMBINED_LEVEL = "combinedLevels"
RAW_KINDS = ("ordered", "unordered")


@dataclass(frozen=True)
class ColumnMeta:
    """One feature column.

    kind is "numeric", "ordered" / "unordered" (raw integer codes into
    ``levels``), "ordinal" (ordered levels encoded 1..L) or "indicator"
    (one-hot column of ``source`` flagging ``level``).
    """

    name: str
    kind: str = "numeric"
    levels: tuple[str, ...] = ()
    source: str | None = None
    level: str | None = None
    merged: tuple[str, ...] = ()


@dataclass(frozen=True)
class LoadReport:
    rows_read: int
    rows_kept: int

    @property
    def rows_dropped(self) -> int:
        return self.rows_read - self.rows_kept


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    response: np.ndarray | None
    columns: tuple[ColumnMeta, ...]
    target: str = "y"
    row_ids: np.ndarray | None = None
    report: LoadReport | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        object.__setattr__(self, "features", X)
        n = X.shape[0]
        if n < 1:
            raise ValueError("dataset has no rows")
        if len(self.columns) != X.shape[1]:
            raise ValueError("column metadata does not match the feature matrix")
        if self.response is not None:
            y = np.asarray(self.response, dtype=np.float64)
            if y.shape != (n,):
                raise ValueError("response length does not match feature rows")
            object.__setattr__(self, "response", y)
        ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        object.__setattr__(self, "row_ids", ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def has_response(self) -> bool:
        return self.response is not None

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        y = None if self.response is None else self.response[idx]
        return replace(self, features=self.features[idx], response=y, row_ids=self.row_ids[idx], report=None)

    def with_response(self, y) -> "Dataset":
        return replace(self, response=np.asarray(y, dtype=np.float64))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.features, columns=self.feature_names)
        for c in self.columns:
            if c.kind in RAW_KINDS:  # raw codes back to their labels
                df[c.name] = np.asarray(c.levels, dtype=object)[df[c.name].to_numpy(np.int64)]
        if self.response is not None:
            df[self.target] = self.response
        return df


def from_arrays(X, y=None, names: Sequence[str] | None = None, target: str = "y") -> Dataset:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    return Dataset(X, y, tuple(ColumnMeta(nm) for nm in names), target=target)


def load_csv(path, target: str, delimiter: str = ",",
             ordered: Mapping[str, Sequence[str]] | None = None,
             require_target: bool = True) -> Dataset:
    """Read a delimited file with a header row.

    Rows with any missing cell are dropped.  Numeric columns become reals;
    string columns become unordered categoricals unless ``ordered`` lists
    their level order.
    """
    ordered = dict(ordered or {})
    df = pd.read_csv(Path(path), sep=delimiter, encoding="utf-8", skipinitialspace=True,
                     float_precision="round_trip")
    rows_read = len(df)
    has_target = target in df.columns
    if not has_target and require_target:
        raise ValueError(f"target column {target!r} not found in {path}")
    df = df.dropna(axis=0, how="any").reset_index(drop=True)
    report = LoadReport(rows_read, len(df))
    if report.rows_dropped:
        log.info("dropped %d of %d rows with missing values", report.rows_dropped, rows_read)
    if len(df) == 0:
        raise ValueError("no rows left after dropping missing values")

    y = None
    if has_target:
        try:
            y = pd.to_numeric(df[target], errors="raise").to_numpy(dtype=np.float64)
        except (ValueError, TypeError) as exc:
            raise ValueError(f"unparseable target values in column {target!r}") from exc
        df = df.drop(columns=[target])

    cols: list[ColumnMeta] = []
    mats: list[np.ndarray] = []
    for name in df.columns:
        s = df[name]
        if name in ordered:
            levels = tuple(str(v) for v in ordered[name])
            codes = _codes(s.astype(str), levels, name)
            cols.append(ColumnMeta(name, "ordered", levels))
            mats.append(codes)
        elif pd.api.types.is_bool_dtype(s) or pd.api.types.is_numeric_dtype(s):
            cols.append(ColumnMeta(name))
            mats.append(s.to_numpy(dtype=np.float64))
        else:
            levels = tuple(sorted(s.astype(str).unique()))
            cols.append(ColumnMeta(name, "unordered", levels))
            mats.append(_codes(s.astype(str), levels, name))
    X = np.column_stack(mats) if mats else np.empty((len(df), 0))
    return Dataset(X, y, tuple(cols), target=target, report=report)


def _codes(s: pd.Series, levels: tuple[str, ...], name: str) -> np.ndarray:
    lookup = {lv: i for i, lv in enumerate(levels)}
    unknown = set(s) - set(lookup)
    if unknown:
        raise ValueError(f"column {name!r} has levels outside {levels}: {sorted(unknown)}")
    return s.map(lookup).to_numpy(dtype=np.float64)


def encode_categoricals(ds: Dataset, rare_min: int = 30) -> Dataset:
    """Ordered levels -> 1..L; rare unordered levels merged, then one-hot."""
    if rare_min < 0:
        raise ValueError("rare_min must be >= 0")
    if not any(c.kind in RAW_KINDS for c in ds.columns):
        return ds
    cols: list[ColumnMeta] = []
    mats: list[np.ndarray] = []
    for j, c in enumerate(ds.columns):
        x = ds.features[:, j]
        if c.kind == "ordered":
            cols.append(ColumnMeta(c.name, "ordinal", c.levels, source=c.name))
            mats.append(x + 1.0)
        elif c.kind == "unordered":
            codes = x.astype(np.int64)
            counts = np.bincount(codes, minlength=len(c.levels))
            rare = tuple(lv for lv, k in zip(c.levels, counts) if k < rare_min)
            kept = [lv for lv, k in zip(c.levels, counts) if k >= rare_min]
            names = np.array(c.levels, dtype=object)[codes]
            for lv in kept:
                cols.append(ColumnMeta(f"{c.name}={lv}", "indicator", c.levels, source=c.name, level=lv))
                mats.append((names == lv).astype(np.float64))
            if rare:
                cols.append(ColumnMeta(f"{c.name}={COMBINED_LEVEL}", "indicator", c.levels,
                                       source=c.name, level=COMBINED_LEVEL, merged=rare))
                mats.append(np.isin(names, rare).astype(np.float64))
        else:
            cols.append(c)
            mats.append(x)
    return replace(ds, features=np.column_stack(mats), columns=tuple(cols))


def encode_like(raw: Dataset, reference: Dataset) -> Dataset:
    """Encode ``raw`` with the columns of an already encoded ``reference``.

    Levels unseen in the reference fall into the combined level when the
    source column has one, otherwise all of its indicators are zero.
    """
    raw_cols = {c.name: (j, c) for j, c in enumerate(raw.columns)}
    mats = []
    for c in reference.columns:
        src = c.source or c.name
        if src not in raw_cols:
            raise ValueError(f"column {src!r} missing from data")
        j, rc = raw_cols[src]
        x = raw.features[:, j]
        if c.kind == "indicator":
            names = np.array(rc.levels, dtype=object)[x.astype(np.int64)]
            if c.level == COMBINED_LEVEL:
                known = {o.level for o in reference.columns if o.source == src and o.level != COMBINED_LEVEL}
                mats.append(np.array([lv not in known for lv in names], dtype=np.float64))
            else:
                mats.append((names == c.level).astype(np.float64))
        elif c.kind == "ordinal":
            if rc.kind == "ordered":
                lookup = np.array([c.levels.index(lv) + 1.0 for lv in rc.levels])
                mats.append(lookup[x.astype(np.int64)])
            else:
                mats.append(x)
        else:
            if rc.kind in RAW_KINDS:
                raise ValueError(f"column {src!r} is categorical here but numeric in the training data")
            mats.append(x)
    return replace(raw, features=np.column_stack(mats), columns=reference.columns)


def split_train_test(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint partition with round(fraction * n) training rows."""
    if ds.n < 2:
        raise ValueError("need at least two rows to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    k = int(np.floor(fraction * ds.n + 0.5))
    if k == 0 or k == ds.n:
        raise ValueError(f"fraction {fraction} leaves one side of the split empty")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.take(np.sort(perm[:k])), ds.take(np.sort(perm[k:]))


def write_csv(ds: Dataset, path, delimiter: str = ",") -> None:
    ds.to_frame().to_csv(path, sep=delimiter, index=False, float_format="%.17g")
