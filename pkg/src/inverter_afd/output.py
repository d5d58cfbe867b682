"""CSV and manifest writers."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

TRACE_HEADER = ("step", "time_s", "p_h", "p_f", "y_d", "y_q", "du_d", "du_q",
                "v_dev_d", "v_dev_q")


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, int) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".17g")


def emit_csv(records, path) -> Path:
    """Write trace records with the fixed header; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow([fmt(r.step), fmt(r.time_s), fmt(r.p_h), fmt(r.p_f),
                        fmt(r.y[0]), fmt(r.y[1]), fmt(r.du[0]), fmt(r.du[1]),
                        fmt(r.v_dev[0]), fmt(r.v_dev[1])])
    return path


def read_trace_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in rows]


def emit_table(header, rows, path) -> Path:
    """Generic summary table with the same float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, *, preset, config: dict, version, files, timings) -> Path:
    path = Path(path)
    manifest = {
        "preset": preset,
        "version": version,
        "seed": config["scenario"]["seed"],
        "config": config,
        "timings_s": timings,
        "files": {Path(f).name: sha256(f) for f in files},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
