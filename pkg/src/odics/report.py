"""Summary tables, transfer-matrix heatmaps and dataset dumps."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from odics.domains import generate_sample, preset_by_name
from odics.errors import ConfigurationError
from odics.labels import apply_map, builtin_maps

HEATMAP_CELL = 32


def safe_name(name: str) -> str:
    """File stem for a run name such as ``table1-grid[strategy=er,sim=SimB]``."""
    return "".join(ch if ch.isalnum() or ch in "-_=." else "_" for ch in name).strip("_")


def load_records(run_dir: str | Path) -> tuple[list[dict], list[str]]:
    """RunRecords found in ``run_dir`` plus a list of problems (unreadable files, failed cells)."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ConfigurationError(f"{run_dir} is not a directory")
    records, problems = [], []
    for path in sorted(run_dir.glob("*.json")):
        if path.name.endswith(".timing.json") or path.name == "grid.json":
            continue
        try:
            rec = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            problems.append(f"{path.name}: unreadable ({exc})")
            continue
        if "summary" not in rec or "config" not in rec:
            problems.append(f"{path.name}: not a run record")
            continue
        records.append(rec)
    grid = run_dir / "grid.json"
    if grid.exists():
        for cell in json.loads(grid.read_text()).get("cells", []):
            if cell.get("status") != "ok":
                problems.append(f"{cell['name']}: {cell.get('status')} ({cell.get('error', '')})")
    return records, problems


def summary_rows(records: list[dict]) -> tuple[list[str], list[list]]:
    """Table-1 layout: one row per record, per-domain mean and std, then the mean column.

    From the second record on, ``delta_vs_first`` gives the mean-mIoU difference
    to the first record.
    """
    if not records:
        return ["name"], []
    domains = list(records[0]["config"]["stream"]["domain_order"])
    header = ["name"]
    for d in domains:
        header += [f"{d}_miou", f"{d}_std"]
    header += ["mean_miou", "mean_std", "seeds", "update_audit", "delta_vs_first"]
    rows = []
    ref = records[0]["summary"]["mean_miou"]
    for rec in records:
        s = rec["summary"]
        row = [rec["config"]["name"]]
        for d in domains:
            row += [_pct(s["per_domain_mean"].get(d)), _pct(s["per_domain_std"].get(d))]
        row += [_pct(s["mean_miou"]), _pct(s["mean_miou_std"]), len(rec["seeds"]), s["update_audit_total"],
                _pct(s["mean_miou"] - ref)]
        rows.append(row)
    return header, rows


def _pct(v) -> str:
    return "" if v is None else f"{100 * v:.2f}"


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def heatmap_pixels(R, cell: int = HEATMAP_CELL) -> np.ndarray:
    """Grayscale image with one ``cell``-sized block per entry; brightness = round(255 * R[i][j])."""
    R = np.asarray(R, dtype=float)
    vals = np.where(np.isfinite(R), np.clip(R, 0.0, 1.0), 0.0)
    img = np.round(vals * 255).astype(np.uint8)
    return np.kron(img, np.ones((cell, cell), dtype=np.uint8))


def write_heatmap(path: str | Path, R) -> None:
    Image.fromarray(heatmap_pixels(R), mode="L").save(path)


def report(run_dir: str | Path, out_dir: str | Path | None = None) -> dict:
    run_dir = Path(run_dir)
    records, problems = load_records(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    header, rows = summary_rows(records)
    write_csv(out_dir / "summary.csv", header, rows)
    heatmaps = []
    for rec in records:
        R = rec["summary"].get("transfer_matrix_mean")
        if R is None:
            continue
        path = out_dir / f"{safe_name(rec['config']['name'])}.transfer.png"
        write_heatmap(path, R)
        heatmaps.append(path.name)
    (out_dir / "problems.txt").write_text("".join(p + "\n" for p in problems))
    return {"records": len(records), "problems": problems, "heatmaps": heatmaps, "out_dir": str(out_dir)}


def dump_dataset(domain: str, count: int, out_dir: str | Path, start: int = 0, relabel: bool = False) -> Path:
    """Write ``count`` samples as 8-bit RGB / single-channel PNG pairs plus ``manifest.json``.

    With ``relabel`` a simulator preset's masks are written in the target space
    through its built-in label map.
    """
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    spec = preset_by_name(domain)
    lmap = None
    if relabel:
        lmap = builtin_maps().get(spec.name)
        if lmap is None:
            raise ConfigurationError(f"{spec.name} has no built-in label map")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for seed in range(start, start + count):
        sample = generate_sample(spec, seed)
        rgb = np.round(sample.image.transpose(1, 2, 0) * 255).astype(np.uint8)
        mask = sample.mask if lmap is None else apply_map(lmap, sample.mask).astype(np.uint8)
        stem = f"{spec.name}_{seed:06d}"
        Image.fromarray(rgb, mode="RGB").save(out / f"{stem}.png")
        Image.fromarray(mask, mode="L").save(out / f"{stem}_mask.png")
        entries.append({"domain": spec.name, "seed": seed, "image": f"{stem}.png", "mask": f"{stem}_mask.png"})
    space = lmap.target_space if lmap is not None else spec.label_space
    manifest = {"domain": spec.name, "relabelled": relabel, "classes": list(space.names),
                "ignore_index": space.ignore_index, "samples": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out
