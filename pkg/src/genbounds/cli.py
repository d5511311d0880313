"""Command line entry point: ``genbounds <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness as H
from .dynamics import load_trajectory
from .fractal import InsufficientResolution, box_dimension

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 2, 3


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _config(args) -> H.ExperimentConfig:
    cfg = H.load_config(args.config)
    if getattr(args, "workers", None):
        cfg = cfg.replace("experiment", workers=args.workers)
    return cfg


def cmd_simulate(args) -> int:
    path = H.write_run(_config(args), args.out, replicate=args.replicate)
    print(path)
    return EXIT_OK


def cmd_dim(args) -> int:
    traj = load_trajectory(args.traj)
    pts = traj.Y if args.path == "Y" else traj.W
    try:
        est = box_dimension(pts, levels=args.levels)
    except InsufficientResolution as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    H.emit(est.to_dict(), "json", args.out)
    if args.curve:
        H.write_csv(["delta", "count"], [{"delta": float(d), "count": int(c)}
                                         for d, c in zip(est.curve.deltas, est.curve.counts)], args.curve)
    return EXIT_OK


def cmd_bounds(args) -> int:
    rec = H.evaluate_saved(args.run, _ints(args.theorems) if args.theorems else None)
    H.emit(rec, "json", args.out)
    return EXIT_OK


def _finish(report, cfg) -> int:
    rate = report.failure_rate
    if rate > cfg.experiment.failure_threshold:
        print(f"error: {report.n_failed} replicate failures ({rate:.1%}) exceed the threshold", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_coverage(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = H.run_coverage(cfg, args.replicates)
    H.emit(report, "json", out / "coverage.json")
    H.emit(report, "csv", out / "coverage.csv")
    H.write_csv(H.RECORD_COLUMNS, H.record_rows(report.records), out / "replicates.csv")
    for c in report.cells:
        for name, tc in sorted(c["theorems"].items()):
            lo, hi = tc.interval
            print(f"n={c['n']} alpha={c['alpha']} {name}: {tc.holds}/{tc.total} hold "
                  f"[{lo:.3f}, {hi:.3f}] target {tc.target:.2f} lhs/rhs {tc.mean_ratio:.3g}")
    if report.flags:
        print("flags: " + "; ".join(report.flags))
    if not report.records:
        return EXIT_OK
    return _finish(report, cfg)


class _Failures:
    def __init__(self, table):
        total = sum(r["n_ok"] + r["n_failed"] for r in table.rows)
        self.n_failed = sum(r["n_failed"] for r in table.rows)
        self.failure_rate = self.n_failed / total if total else 0.0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = _floats(args.values)
    table = H.run_sweep(cfg, args.param, values, args.replicates)
    H.emit(table, "csv", out / f"sweep_{args.param}.csv")
    H.emit(table, "json", out / f"sweep_{args.param}.json")
    H.emit(table, "svg", out / f"sweep_{args.param}.svg")
    if table.slope is not None:
        print(f"log-log slope of median geometric gap: {table.slope:.3f}")
    return _finish(_Failures(table), cfg)


def cmd_plot(args) -> int:
    table = H.read_table(args.inp)
    if "value" not in table["columns"]:
        print("error: plot expects a sweep CSV with a 'value' column", file=sys.stderr)
        return EXIT_CONFIG
    table["param"] = args.param
    H.emit(table, "svg", args.out)
    return EXIT_OK


def cmd_validate_lemmas(args) -> int:
    rows = H.validate_lemmas(args.cases, args.seed, args.beta)
    H.write_csv(H.LEMMA_COLUMNS, rows, args.out)
    bad = [r for r in rows if r["margin"] < 0]
    print(f"{len(rows) - len(bad)}/{len(rows)} divergences below their coupling bound")
    return EXIT_OK if not bad else EXIT_FAILURES


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genbounds", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one coupled run")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--replicate", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("dim", help="box-counting dimension of a saved trajectory")
    s.add_argument("--traj", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--path", choices=("Y", "W"), default="Y")
    s.add_argument("--levels", type=int, default=16)
    s.add_argument("--curve", help="optional CSV of the covering curve")
    s.set_defaults(func=cmd_dim)

    s = sub.add_parser("bounds", help="bound reports for a simulated run")
    s.add_argument("--run", required=True)
    s.add_argument("--theorems", default="")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("coverage", help="hold rates over replicates")
    s.add_argument("--config", required=True)
    s.add_argument("--replicates", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("sweep", help="sweep one parameter")
    s.add_argument("--config", required=True)
    s.add_argument("--param", choices=H.SWEEP_PARAMS, required=True)
    s.add_argument("--values", required=True)
    s.add_argument("--replicates", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("plot", help="SVG from a sweep CSV")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--param", default="value")
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("validate-lemmas", help="quadrature check of the divergence bounds")
    s.add_argument("--cases", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--beta", type=float, default=2.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_validate_lemmas)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except H.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
