"""Batch grids of (sampler, availability mode, seed) runs and their comparison table."""

from __future__ import annotations

import copy
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .config import ExperimentConfig, from_dict
from .domain import ConfigError
from .engine import run_experiment
from .results import fmt, output_paths, write_results


@dataclass
class MatrixConfig:
    base: dict
    samplers: list[dict]
    availability: list[dict]
    seeds: list[dict]
    metric: str = "min_test_loss"
    processes: int = 1


@dataclass
class Cell:
    sampler: str
    mode: str
    seed_index: int
    config: ExperimentConfig


@dataclass
class MatrixResult:
    cells: list[tuple[Cell, dict]]
    table: dict[tuple[str, str], float] = field(default_factory=dict)
    samplers: list[str] = field(default_factory=list)
    modes: list[str] = field(default_factory=list)


def _merge(dst: dict, src: dict) -> dict:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = copy.deepcopy(v)
    return dst


def _seed_entry(s, i: int) -> dict:
    if isinstance(s, int) and not isinstance(s, bool):
        return {"data_seed": s, "train_seed": s, "availability_seed": s}
    if isinstance(s, dict):
        return dict(s)
    raise ConfigError(f"seeds[{i}]", "expected an integer or a seed mapping")


def parse_matrix(source) -> MatrixConfig:
    """Load a matrix file, or ``matrix.yaml`` inside a directory."""
    if isinstance(source, dict):
        data = source
    else:
        path = Path(source)
        if path.is_dir():
            path = path / "matrix.yaml"
        if not path.is_file():
            raise ConfigError(str(path), "matrix file not found")
        data = yaml.safe_load(path.read_text()) or {}
    unknown = set(data) - {"base", "samplers", "availability", "seeds", "metric", "processes"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    samplers = data.get("samplers") or [{"label": "fedgs", "sampler": {"name": "fedgs"}}]
    modes = data.get("availability") or [{"mode": "IDL"}]
    seeds = [_seed_entry(s, i) for i, s in enumerate(data.get("seeds") or [0])]
    for i, s in enumerate(samplers):
        if "label" not in s:
            raise ConfigError(f"samplers[{i}].label", "missing")
    return MatrixConfig(data.get("base") or {}, samplers, modes, seeds, data.get("metric", "min_test_loss"), int(data.get("processes", 1)))


def _mode_label(entry: dict) -> str:
    if "label" in entry:
        return str(entry["label"])
    mode = str(entry.get("mode", "IDL")).upper()
    return mode if mode == "IDL" else f"{mode}{entry.get('beta', 0.0)}"


def expand(matrix: MatrixConfig) -> list[Cell]:
    """Cross product; every sampler in a column sees the same data and availability seeds."""
    cells = []
    for a_entry in matrix.availability:
        a = {k: v for k, v in a_entry.items() if k != "label"}
        mode = _mode_label(a_entry)
        for si, seeds in enumerate(matrix.seeds):
            for s_entry in matrix.samplers:
                label = s_entry["label"]
                over = {k: v for k, v in s_entry.items() if k != "label"}
                data = _merge(copy.deepcopy(matrix.base), over)
                data = _merge(data, {"availability": a, "seeds": seeds})
                data["name"] = _slug(f"{label}__{mode}__s{si}")
                cells.append(Cell(label, mode, si, from_dict(data)))
    return cells


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in text)


def _run_cell(cell: Cell, out_dir=None) -> dict:
    res = run_experiment(cell.config)
    if out_dir is not None:
        write_results(res, output_paths(out_dir, cell.config.name))
    return res.summary


def set_base_field(matrix: MatrixConfig, key: str, value) -> None:
    """Apply a dotted ``key=value`` override to the shared base config."""
    node: dict = {}
    cur = node
    parts = key.split(".")
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value
    _merge(matrix.base, node)


def run_matrix(matrix: MatrixConfig, out_dir=None) -> MatrixResult:
    cells = expand(matrix)
    if matrix.processes > 1:
        with ProcessPoolExecutor(max_workers=matrix.processes) as ex:
            summaries = list(ex.map(_run_cell, cells, [out_dir] * len(cells)))
    else:
        summaries = [_run_cell(cell, out_dir) for cell in cells]
    samplers = list(dict.fromkeys(c.sampler for c in cells))
    modes = list(dict.fromkeys(c.mode for c in cells))
    table = {}
    for s in samplers:
        for m in modes:
            vals = [summ[matrix.metric] for c, summ in zip(cells, summaries) if c.sampler == s and c.mode == m]
            table[(s, m)] = math.fsum(vals) / len(vals)
    result = MatrixResult(list(zip(cells, summaries)), table, samplers, modes)
    if out_dir is not None:
        write_table(result, Path(out_dir) / "table.csv")
    return result


def write_table(result: MatrixResult, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sampler", *result.modes])
        for s in result.samplers:
            w.writerow([s, *(fmt(result.table[(s, m)]) for m in result.modes)])
