"""Command-line entry point: ``bopforest {pibf,rfpi,piall,simulate,benchmark}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import serialize
from .data import Dataset, encode_categoricals, encode_like, load_csv, write_csv
from .forest import ForestConfig
from .interval import METHODS
from .pipeline import fit_pibf, fit_rfpi, pibf_predict, rfpi_predict
from .report import (METHOD_LABELS, benchmark_report, emit_summary, piall_report, pibf_report, plot_rows,
                     rfpi_report, write_plot_csv)
from .simbench import PROBLEMS, BenchmarkConfig, SimSpec, generate, run_benchmark

log = logging.getLogger("bopforest")

PIALL_TREES = 1000
BENCHMARK_TREES = 2000


class UsageError(Exception):
    pass


def _alpha(s: str) -> float:
    a = float(s)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _range(s: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo,hi") from None
    if not 0 <= lo <= hi <= 1:
        raise argparse.ArgumentTypeError("need 0 <= lo <= hi <= 1")
    return lo, hi


def _methods(s: str) -> tuple[str, ...]:
    out = tuple(m.strip().lower() for m in s.split(",") if m.strip())
    bad = [m for m in out if m not in METHODS]
    if not out or bad:
        raise argparse.ArgumentTypeError(f"PI methods must come from {','.join(METHODS)}")
    return out


def _csv_list(choices):
    def parse(s: str) -> tuple[str, ...]:
        out = tuple(v.strip().lower() for v in s.split(",") if v.strip())
        bad = [v for v in out if v not in choices]
        if bad:
            raise argparse.ArgumentTypeError(f"choose from {','.join(choices)}")
        return out
    return parse


def _positive(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _forest_flags(p: argparse.ArgumentParser, trees: int, split: bool = True) -> None:
    g = p.add_argument_group("forest")
    g.add_argument("--trees", type=_positive, default=trees)
    g.add_argument("--mtry", type=_positive, default=None, help="default max(floor(p/3), 1)")
    g.add_argument("--min-node", type=_positive, default=5)
    if split:
        g.add_argument("--split", choices=("ls", "l1", "spi"), default="ls")
    g.add_argument("--seed", type=int, default=0)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--coverage-range", type=_range, default=None, metavar="LO,HI",
                   help="acceptable calibration coverage (default 1-alpha +/- 0.005)")
    p.add_argument("--format", choices=("json", "csv", "table"), default="table")
    p.add_argument("--out", type=Path, default=None, help="report path (default stdout)")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--rare-min", type=int, default=30, help="merge unordered levels rarer than this")
    p.add_argument("--plot-data", type=Path, default=None, help="write per-row intervals as CSV")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bopforest", description="Random-forest prediction intervals.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pibf", help="boosted two-forest intervals")
    _data_flags(p)
    _common_flags(p)
    _forest_flags(p, PIALL_TREES, split=False)
    p.add_argument("--calibration", choices=("none", "cv", "oob"), default="cv")
    p.add_argument("--folds", type=_positive, default=5)
    p.add_argument("--oob", action="store_true", help="add training OOB interval summary")
    p.add_argument("--model-out", type=Path, default=None)

    p = sub.add_parser("rfpi", help="single-forest intervals with a chosen split rule")
    _data_flags(p)
    _common_flags(p)
    _forest_flags(p, PIALL_TREES)
    p.add_argument("--pi-methods", type=_methods, default=METHODS)
    p.add_argument("--calibration", choices=("none", "oob"), default="oob")
    p.add_argument("--model-out", type=Path, default=None)

    p = sub.add_parser("piall", help="PIBF plus all 15 split-rule / PI-method variants")
    _data_flags(p)
    _common_flags(p)
    _forest_flags(p, PIALL_TREES, split=False)
    p.add_argument("--folds", type=_positive, default=5)

    p = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    p.add_argument("--problem", choices=PROBLEMS, required=True)
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("benchmark", help="replicated simulation study")
    p.add_argument("--problem", choices=PROBLEMS, required=True)
    p.add_argument("--n-train", type=_positive, default=200)
    p.add_argument("--n-test", type=_positive, default=1000)
    p.add_argument("--replications", type=_positive, default=10)
    p.add_argument("--calibration", type=_csv_list(("none", "cv", "oob")), default=("cv",),
                   help="PIBF calibrations, comma separated (empty to skip PIBF)")
    p.add_argument("--split", type=_csv_list(("ls", "l1", "spi")), default=(), help="RFPI split rules")
    p.add_argument("--pi-methods", type=_methods, default=METHODS)
    p.add_argument("--folds", type=_positive, default=5)
    p.add_argument("--noise-sd", type=float, default=None)
    p.add_argument("--timing", action="store_true", help="include wall times (not reproducible)")
    _common_flags(p)
    _forest_flags(p, BENCHMARK_TREES, split=False)
    return ap


def _forest_cfg(args, split: str | None = None) -> ForestConfig:
    rule = split or getattr(args, "split", "ls")
    return ForestConfig(num_trees=args.trees, mtry=args.mtry, min_node_size=args.min_node, split_rule=rule,
                        seed=args.seed)


def _load_pair(args) -> tuple[Dataset, Dataset]:
    train_raw = load_csv(args.train, args.target, args.delimiter)
    test_raw = load_csv(args.test, args.target, args.delimiter, require_target=False)
    train = encode_categoricals(train_raw, args.rare_min)
    test = encode_like(test_raw, train)
    log.info("train n=%d p=%d, test n=%d", train.n, train.p, test.n)
    return train, test


def _write(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


def _cmd_pibf(args) -> dict:
    train, test = _load_pair(args)
    model = fit_pibf(train, _forest_cfg(args), args.alpha, args.calibration, args.folds, args.coverage_range)
    pred = pibf_predict(model, test.features)
    if args.model_out:
        serialize.save(model, args.model_out)
    if args.plot_data:
        write_plot_csv(args.plot_data, plot_rows("PIBF", pred.intervals(), pred.point, test.response))
    return pibf_report(model, pred, test.response, oob=args.oob)


def _cmd_rfpi(args) -> dict:
    train, test = _load_pair(args)
    cfg = replace(_forest_cfg(args), split_alpha=args.alpha)
    model = fit_rfpi(train, cfg, args.alpha, args.pi_methods, args.calibration == "oob", args.coverage_range)
    pred = rfpi_predict(model, test.features)
    if args.model_out:
        serialize.save(model, args.model_out)
    if args.plot_data:
        rows = []
        for meth, pis in pred.intervals.items():
            rows += plot_rows(f"{args.split.upper()}-{METHOD_LABELS[meth]}", pis, pred.point, test.response)
        write_plot_csv(args.plot_data, rows)
    return rfpi_report(model, pred, test.response)


def _cmd_piall(args) -> dict:
    train, test = _load_pair(args)
    truth = test.response
    pibf = fit_pibf(train, _forest_cfg(args), args.alpha, "cv", args.folds, args.coverage_range)
    ppred = pibf_predict(pibf, test.features)
    rows = plot_rows("PIBF", ppred.intervals(), ppred.point, truth)
    parts = []
    for rule in ("ls", "l1", "spi"):
        cfg = replace(_forest_cfg(args, rule), split_alpha=args.alpha)
        model = fit_rfpi(train, cfg, args.alpha, METHODS, True, args.coverage_range)
        pred = rfpi_predict(model, test.features)
        parts.append(rfpi_report(model, pred, truth))
        for meth, pis in pred.intervals.items():
            rows += plot_rows(f"{rule.upper()}-{METHOD_LABELS[meth]}", pis, pred.point, truth)
    if args.plot_data:
        write_plot_csv(args.plot_data, rows)
    return piall_report(pibf_report(pibf, ppred, truth), parts)


def _cmd_simulate(args) -> None:
    ds = generate(SimSpec(args.problem, args.n, args.seed, args.noise_sd))
    write_csv(ds, args.out)


def _cmd_benchmark(args) -> dict:
    cfg = BenchmarkConfig(problem=args.problem, n_train=args.n_train, n_test=args.n_test,
                          replications=args.replications, alpha=args.alpha,
                          forest=ForestConfig(num_trees=args.trees, mtry=args.mtry, min_node_size=args.min_node),
                          pibf_calibrations=args.calibration, rfpi_rules=args.split, rfpi_methods=args.pi_methods,
                          folds=args.folds, coverage_range=args.coverage_range, seed=args.seed,
                          noise_sd=args.noise_sd)
    if not cfg.pibf_calibrations and not cfg.rfpi_rules:
        raise UsageError("nothing to benchmark: give --calibration and/or --split")
    result = run_benchmark(cfg, progress=lambda r: log.info("replication %d done", r + 1))
    return benchmark_report(result, timing=args.timing)


COMMANDS = {"pibf": _cmd_pibf, "rfpi": _cmd_rfpi, "piall": _cmd_piall, "simulate": _cmd_simulate,
            "benchmark": _cmd_benchmark}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rep = COMMANDS[args.command](args)
        if rep is not None:
            _write(args, emit_summary(rep, args.format))
    except UsageError as exc:
        print(f"bopforest {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"bopforest {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
