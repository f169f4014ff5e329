"""Run the desk-scale directional reproductions and print each ordering.

    python scripts/directional.py --out runs/directional [--jobs 2] [--only nt,er]

Records land in ``--out`` (one per variant, same files as ``odics run``), so
``odics report runs/directional`` renders the table and heatmaps afterwards.
Existing records are reused unless ``--force`` is given.
"""
from __future__ import annotations

import argparse
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from odics.cli import write_outputs
from odics.config import directional_cells
from odics.experiment import run_experiment
from odics.report import safe_name


def _run(item):
    cfg, out = item
    record, timing = run_experiment(cfg)
    write_outputs(Path(out), cfg, record, timing)
    return cfg.name, timing["total_seconds"]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/directional")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", default="", help="comma-separated variant names")
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()

    out = Path(args.out)
    wanted = set(filter(None, args.only.split(",")))
    cells = [(n, c) for n, c in directional_cells() if not wanted or n[len("directional["):-1] in wanted]
    todo = [(c, str(out)) for _, c in cells if args.force or not (out / f"{safe_name(c.name)}.json").exists()]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            done = list(pool.map(_run, todo))
    else:
        done = [_run(t) for t in todo]
    for name, secs in done:
        print(f"ran {name} in {secs:.0f}s")

    means = {}
    for name, cfg in cells:
        rec = json.loads((out / f"{safe_name(cfg.name)}.json").read_text())
        key = name[len("directional["):-1]
        means[key] = 100 * rec["summary"]["mean_miou"]
        R = rec["summary"]["transfer_matrix_mean"]
        extra = ""
        if R is not None:
            R = np.asarray(R)
            extra = f"  first domain: just trained {100 * R[0, 0]:.1f}, final {100 * R[-1, 0]:.1f}"
        print(f"{key:18s} mean mIoU {means[key]:6.2f}{extra}")

    def show(label, lhs, rhs, margin=0.0):
        if lhs in means and rhs in means:
            ok = means[lhs] >= means[rhs] + margin
            print(f"{'holds' if ok else 'FAILS'}  {label}: {means[lhs]:.2f} vs {means[rhs]:.2f} + {margin:g}")

    print()
    show("ER >= NT + 2", "er", "nt", 2)
    show("NT+SimB >= NT + 2", "nt+SimB", "nt", 2)
    show("NT+SimA > NT", "nt+SimA", "nt", 1e-9)
    show("ER+SimB >= ER + 1", "er+SimB", "er", 1)
    show("rho 1 > rho 10", "nt+SimB", "nt+SimB-rho10", 1e-9)
    show("NT+SimB (N=4) >= NT (N=8)", "nt+SimB", "nt-N8")
    show("pretrained NT >= NT", "pretrain-nt", "nt")
    show("pretrained NT+SimB >= pretrained NT", "pretrain-nt+SimB", "pretrain-nt")
    show("mixed NT+SimB >= mixed NT", "mixed-nt+SimB", "mixed-nt")


if __name__ == "__main__":
    main()
