"""Command-line entry point: run, grid, report, dump-dataset, check.

Exit codes: 0 success, 1 configuration error, 2 protocol violation, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from odics import config as C
from odics.errors import ConfigurationError, NumericFailure, OdicsError, ProtocolViolation
from odics.experiment import ExperimentConfig, record_to_json, run_experiment
from odics.report import dump_dataset, report, safe_name, summary_rows, write_csv

log = logging.getLogger("odics")


def _cells(args, lenient: bool = False) -> list[tuple[str, ExperimentConfig | ConfigurationError]]:
    """Cells from --config or --preset with every --set override applied.

    ``lenient`` keeps invalid cells as ``(name, error)`` so a grid can record them.
    """
    if bool(args.config) == bool(args.preset):
        raise ConfigurationError("give exactly one of --config or --preset")
    overrides = []
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        overrides.append((key.strip(), value))
    cells = C.load_cells(args.config, lenient) if args.config else C.preset_cells(args.preset)
    out = []
    for name, cfg in cells:
        if not isinstance(cfg, Exception):
            for key, value in overrides:
                cfg = C.set_field(cfg, key, value)
        out.append((name, cfg))
    return out


def write_outputs(out_dir: Path, cfg: ExperimentConfig, record: dict, timing: dict) -> Path:
    stem = safe_name(cfg.name)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.json").write_text(record_to_json(record))
    (out_dir / f"{stem}.timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    (out_dir / f"{stem}.ini").write_text(C.to_ini(cfg))
    write_csv(out_dir / f"{stem}.csv", *summary_rows([record]))
    return out_dir / f"{stem}.json"


def _failed(name: str, exc: OdicsError) -> dict:
    return {"name": name, "status": type(exc).__name__, "error": str(exc), "exit_code": exc.exit_code}


def _run_cell(cfg: ExperimentConfig, out_dir: str) -> dict:
    try:
        record, timing = run_experiment(cfg)
    except OdicsError as exc:
        return _failed(cfg.name, exc)
    path = write_outputs(Path(out_dir), cfg, record, timing)
    return {"name": cfg.name, "status": "ok", "record": path.name, "mean_miou": record["summary"]["mean_miou"],
            "seconds": timing["total_seconds"]}


def cmd_run(args) -> int:
    out = Path(args.out)
    for _, cfg in _cells(args):
        log.info("running %s (%d seeds)", cfg.name, len(cfg.seeds))
        record, timing = run_experiment(cfg)
        path = write_outputs(out, cfg, record, timing)
        print(f"{cfg.name}: mean mIoU {100 * record['summary']['mean_miou']:.2f} "
              f"(audit {record['summary']['update_audit_total']}) -> {path}")
    return 0


def cmd_grid(args) -> int:
    cells = _cells(args, lenient=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runnable = [c for _, c in cells if not isinstance(c, Exception)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = iter(pool.map(_run_cell, runnable, [str(out)] * len(runnable)))
    else:
        done = (_run_cell(c, str(out)) for c in runnable)
    results = [_failed(name, c) if isinstance(c, Exception) else next(done) for name, c in cells]
    (out / "grid.json").write_text(json.dumps({"cells": results}, indent=2, sort_keys=True) + "\n")
    failed = [r for r in results if r["status"] != "ok"]
    for r in results:
        detail = f"mean mIoU {100 * r['mean_miou']:.2f}" if r["status"] == "ok" else f"{r['status']}: {r['error']}"
        print(f"{r['name']}: {detail}")
    return failed[0]["exit_code"] if failed else 0


def cmd_report(args) -> int:
    result = report(args.run_dir, args.out)
    print(f"{result['records']} records -> {result['out_dir']}")
    for problem in result["problems"]:
        print(f"missing or failed: {problem}")
    return 0


def cmd_dump(args) -> int:
    out = dump_dataset(args.domain, args.count, args.out, start=args.start, relabel=args.relabel)
    print(f"wrote {args.count} samples to {out}")
    return 0


def cmd_check(args) -> int:
    from odics.checks import run_checks

    failures = run_checks()
    if not failures:
        return 0
    codes = [3 if isinstance(e, NumericFailure) else 2 if isinstance(e, ProtocolViolation) else 1
             for _, e in failures]
    return max(codes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odics", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p):
        p.add_argument("--config", help="INI config file (may contain a [grid] section)")
        p.add_argument("--preset", help=f"named preset: {', '.join(C.PRESETS)}")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a field, e.g. stream.budget=8 or seeds=0,1")
        p.add_argument("--out", default="runs", help="output directory")

    p = sub.add_parser("run", help="run one experiment (or every cell of a sweep preset)")
    experiment_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="run a grid; failed cells are recorded and the grid continues")
    experiment_args(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="summary CSV and transfer heatmaps for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dump-dataset", help="write generated samples as PNG pairs plus a manifest")
    p.add_argument("--domain", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--relabel", action="store_true", help="map simulator masks into the target space")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("check", help="run the invariant suite")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OdicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
