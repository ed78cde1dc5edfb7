"""Summary reports for PIBF / RFPI / all-method runs and their text, CSV and JSON renderings.

A report is a plain JSON-compatible dict, so ``json.loads(emit_summary(r, "json")) == r``.
"""
from __future__ import annotations

import csv
import io
import json
from typing import Sequence

import numpy as np

from .interval import HdrRegion, Interval
from .pipeline import PibfModel, PibfPrediction, RfpiModel, RfpiPrediction, pibf_oob_summary

METHOD_LABELS = {"lm": "LM", "spi": "SPI", "quant": "Quant", "hdr": "HDR", "chdr": "CHDR"}
METHOD_NAMES = {
    "lm": "Classical method (LM)",
    "spi": "Shortest prediction interval (SPI)",
    "quant": "Quantile method (Quant)",
    "hdr": "Highest density region (HDR)",
    "chdr": "Contiguous HDR (CHDR)",
}
RULE_LABELS = {"ls": "LS", "l1": "L1", "spi": "SPI"}
# row order of the all-method table
PIALL_METHODS = ("lm", "spi", "quant", "hdr", "chdr")
RULE_WIDTH = 78


def _f(x) -> float | None:
    return None if x is None else float(x)


def _errors(points, truth) -> dict:
    err = np.asarray(points, dtype=np.float64) - truth
    return {"mae": float(np.mean(np.abs(err))), "rmse": float(np.sqrt(np.mean(err ** 2)))}


def _coverage(lower, upper, truth) -> float:
    return float(np.mean((lower <= truth) & (truth <= upper)))


def _pis_lengths_coverage(pis: Sequence[Interval | HdrRegion], truth) -> tuple[float, float | None]:
    ml = float(np.mean([pi.length for pi in pis]))
    if truth is None:
        return ml, None
    return ml, float(np.mean([pi.contains(t) for pi, t in zip(pis, truth)]))


def pibf_report(model: PibfModel, pred: PibfPrediction, truth=None, oob: bool = False) -> dict:
    entry = {"mean_pi_length": float(np.mean(pred.upper - pred.lower)),
             "coverage": None if truth is None else _coverage(pred.lower, pred.upper, truth),
             "alpha_w": model.alpha_working}
    rep = {"kind": "pibf", "alpha": model.alpha_target, "alpha_w": model.alpha_working,
           "calibration": model.calibration, "n_test": int(pred.point.size),
           "fallback_count": int(pred.fallback.sum()),
           "methods": {"PIBF": entry},
           "errors": {} if truth is None else {"PIBF": _errors(pred.point, truth)}}
    if oob:
        s = pibf_oob_summary(model)
        rep["oob"] = {"mean_pi_length": s.mean_length, "coverage": s.coverage, "mae": s.mae, "rmse": s.rmse}
    return rep


def rfpi_report(model: RfpiModel, pred: RfpiPrediction, truth=None) -> dict:
    methods = {}
    for meth, pis in pred.intervals.items():
        ml, cov = _pis_lengths_coverage(pis, truth)
        methods[METHOD_LABELS[meth]] = {"mean_pi_length": ml, "coverage": cov,
                                        "alpha_w": model.alpha_working[meth]}
    label = f"{RULE_LABELS[model.split_rule]} split"
    return {"kind": "rfpi", "alpha": model.alpha_target, "split_rule": RULE_LABELS[model.split_rule],
            "calibrated": model.calibrated, "n_test": int(pred.point.size), "methods": methods,
            "errors": {} if truth is None else {label: _errors(pred.point, truth)}}


def piall_report(pibf: dict, rfpi: Sequence[dict]) -> dict:
    methods = {"PIBF": pibf["methods"]["PIBF"]}
    errors = dict(pibf["errors"])
    for rep in rfpi:
        for meth in PIALL_METHODS:
            label = METHOD_LABELS[meth]
            if label in rep["methods"]:
                methods[f"{rep['split_rule']}-{label}"] = rep["methods"][label]
        errors.update(rep["errors"])
    return {"kind": "piall", "alpha": pibf["alpha"], "n_test": pibf["n_test"], "methods": methods,
            "errors": errors}


def benchmark_report(result, timing: bool = False) -> dict:
    """Replication means per method; wall time only on request (it breaks reproducibility)."""
    cfg = result.config
    methods = {}
    for m, r in result.summary().items():
        entry = {"coverage": r.coverage, "coverage_sd": float(np.std(result.values(m, "coverage"), ddof=1))
                 if len(result.runs) > 1 else 0.0,
                 "mean_pi_length": r.mean_pi_length, "relative_length": r.relative_length,
                 "mae": r.mae, "rmse": r.rmse}
        if timing:
            entry["wall_time_s"] = r.wall_time_s
        methods[m] = entry
    return {"kind": "benchmark", "problem": cfg.problem, "n_train": cfg.n_train, "n_test": cfg.n_test,
            "replications": len(result.runs), "alpha": cfg.alpha, "num_trees": cfg.forest.num_trees,
            "seed": cfg.seed, "methods": methods}


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _num(x) -> str:
    return "" if x is None else f"{x:.3f}"


def _pct(x) -> str:
    return "" if x is None else f"{100 * x:.3f}%"


def _kv(label: str, value: str) -> str:
    return f"{label:>29}: {value}"


def _pibf_table(rep: dict) -> list[str]:
    e = rep["methods"]["PIBF"]
    lines = []
    if rep["calibration"] != "none":
        lines.append(_kv("alpha_w", _num(rep["alpha_w"])))
    lines.append(_kv("Mean PI length", _num(e["mean_pi_length"])))
    if e["coverage"] is not None:
        lines.append(_kv("Coverage", _pct(e["coverage"])))
    if "PIBF" in rep["errors"]:
        lines.append(_kv("MAE of test predictions", _num(rep["errors"]["PIBF"]["mae"])))
        lines.append(_kv("RMSE of test predictions", _num(rep["errors"]["PIBF"]["rmse"])))
    if "oob" in rep:
        o = rep["oob"]
        lines += ["",
                  _kv("Mean PI length (OOB PIs)", _num(o["mean_pi_length"])),
                  _kv("Coverage (OOB PIs)", _pct(o["coverage"])),
                  _kv("MAE of OOB train predictions", _num(o["mae"])),
                  _kv("RMSE of OOB train predictions", _num(o["rmse"]))]
    return lines


def _rfpi_table(rep: dict) -> list[str]:
    names = {v: METHOD_NAMES[k] for k, v in METHOD_LABELS.items()}
    rule = "-" * RULE_WIDTH
    lines = [_kv("Split rule", rep["split_rule"]), rule,
             f"{'':<36}{'Mean PI length':>16}{'Coverage':>12}{'alpha_w':>12}"]
    for label, e in rep["methods"].items():
        cov = "" if e["coverage"] is None else f"{100 * e['coverage']:.3f}"
        lines.append(f"{names[label]:<36}{_num(e['mean_pi_length']):>16}{cov:>12}{_num(e['alpha_w']):>12}")
    lines.append(rule)
    for err in rep["errors"].values():
        lines.append(_kv("MAE of test predictions", _num(err["mae"])))
        lines.append(_kv("RMSE of test predictions", _num(err["rmse"])))
    return lines


def _piall_table(rep: dict) -> list[str]:
    rule = "-" * 40
    lines = [rule, f"{'':<12}{'Mean PI length':>15}{'Coverage':>12}"]
    for label, e in rep["methods"].items():
        lines.append(f"{label:<12}{_num(e['mean_pi_length']):>15}{_pct(e['coverage']):>12}")
    if rep["errors"]:
        lines += [rule, f"{'':<12}{'MAE':>15}{'RMSE':>12}"]
        for label, err in rep["errors"].items():
            lines.append(f"{label:<12}{_num(err['mae']):>15}{_num(err['rmse']):>12}")
    return lines


def _benchmark_table(rep: dict) -> list[str]:
    timing = any("wall_time_s" in e for e in rep["methods"].values())
    head = f"{'method':<14}{'coverage':>10}{'cov sd':>10}{'length':>10}{'rel %':>10}{'MAE':>10}{'RMSE':>10}"
    lines = [f"{rep['problem']}  n_train={rep['n_train']}  n_test={rep['n_test']}  "
             f"replications={rep['replications']}  trees={rep['num_trees']}",
             head + (f"{'time s':>10}" if timing else "")]
    for m, e in rep["methods"].items():
        row = (f"{m:<14}{_num(e['coverage']):>10}{_num(e['coverage_sd']):>10}{_num(e['mean_pi_length']):>10}"
               f"{_num(e['relative_length']):>10}{_num(e['mae']):>10}{_num(e['rmse']):>10}")
        lines.append(row + (f"{_num(e['wall_time_s']):>10}" if timing else ""))
    return lines


_TABLES = {"pibf": _pibf_table, "rfpi": _rfpi_table, "piall": _piall_table, "benchmark": _benchmark_table}


def _csv(rep: dict) -> str:
    keys = ["mean_pi_length", "coverage", "alpha_w", "coverage_sd", "relative_length", "wall_time_s"]
    keys = [k for k in keys if any(k in e for e in rep["methods"].values())]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "name", *keys, "mae", "rmse"])
    for name, e in rep["methods"].items():
        err = rep.get("errors", {}).get(name, e)
        w.writerow(["method", name, *(_cell(e.get(k)) for k in keys), _cell(err.get("mae")), _cell(err.get("rmse"))])
    for name, err in rep.get("errors", {}).items():
        if name not in rep["methods"]:
            w.writerow(["prediction", name, *([""] * len(keys)), _cell(err["mae"]), _cell(err["rmse"])])
    if "oob" in rep:
        o = rep["oob"]
        row = {"mean_pi_length": o["mean_pi_length"], "coverage": o["coverage"]}
        w.writerow(["oob", "PIBF", *(_cell(row.get(k)) for k in keys), _cell(o["mae"]), _cell(o["rmse"])])
    return buf.getvalue()


def _cell(x) -> str:
    return "" if x is None else repr(float(x))


def emit_summary(rep: dict, fmt: str = "table") -> str:
    if not rep.get("methods"):
        raise ValueError("report has no methods")
    if fmt == "json":
        return json.dumps(rep, indent=2) + "\n"
    if fmt == "csv":
        return _csv(rep)
    if fmt == "table":
        return "\n".join(_TABLES[rep["kind"]](rep)) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def plot_rows(method: str, pis: Sequence[Interval | HdrRegion], points, truth=None) -> list[list]:
    """Plot-ready rows (method, row, component, lower, upper, point, truth); one per interval piece."""
    rows = []
    for i, pi in enumerate(pis):
        parts = pi.intervals if isinstance(pi, HdrRegion) else (pi,)
        t = "" if truth is None else repr(float(truth[i]))
        for k, iv in enumerate(parts):
            rows.append([method, i, k, repr(float(iv.lower)), repr(float(iv.upper)), repr(float(points[i])), t])
    return rows


def write_plot_csv(path, rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "row", "component", "lower", "upper", "point", "truth"])
        w.writerows(rows)
