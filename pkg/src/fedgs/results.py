"""Result files: per-round CSV, summary JSON, availability trace and count histogram."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .availability import write_trace_csv
from .engine import ExperimentResult, RoundRecord

ROUND_COLUMNS = ["t", "num_active", "selected", "objective", "g", "var_v", "train_loss", "test_loss"]


def fmt(x: float) -> str:
    """12 significant digits; nan/inf spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else fmt(obj)
    return obj


def output_paths(out_dir, name: str) -> dict[str, Path]:
    base = Path(out_dir)
    return {
        "rounds": base / f"{name}.rounds.csv",
        "summary": base / f"{name}.summary.json",
        "trace": base / f"{name}.trace.csv",
        "counts": base / f"{name}.counts.csv",
    }


def check_writable(paths: dict[str, Path]) -> None:
    """Fail before training if any output location cannot be written."""
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
        probe = p.parent / f".{p.name}.probe"
        try:
            probe.write_text("")
        finally:
            if probe.exists():
                probe.unlink()


def write_rounds_csv(records: list[RoundRecord], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUND_COLUMNS)
        for r in records:
            w.writerow([
                r.t,
                len(r.active),
                ";".join(str(k) for k in r.selected),
                fmt(r.objective),
                fmt(r.g),
                fmt(r.var_v),
                fmt(r.train_loss),
                fmt(r.test_loss),
            ])


def read_rounds_csv(path) -> list[dict]:
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "t": int(row["t"]),
                "num_active": int(row["num_active"]),
                "selected": [int(k) for k in row["selected"].split(";")] if row["selected"] else [],
                **{c: float(row[c]) for c in ROUND_COLUMNS[3:]},
            })
    return rows


def write_counts_csv(counts, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["client_id", "count"])
        for k, v in enumerate(counts):
            w.writerow([k, int(v)])


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(_clean(summary), indent=2, sort_keys=False) + "\n")


def write_results(result: ExperimentResult, paths: dict[str, Path], trace: bool = False, counts: bool = True) -> dict[str, Path]:
    write_rounds_csv(result.records, paths["rounds"])
    write_summary(result.summary, paths["summary"])
    written = {"rounds": paths["rounds"], "summary": paths["summary"]}
    if trace:
        write_trace_csv(result.trace, len(result.counts), paths["trace"])
        written["trace"] = paths["trace"]
    if counts:
        write_counts_csv(result.counts, paths["counts"])
        written["counts"] = paths["counts"]
    return written
