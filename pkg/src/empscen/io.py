"""File formats: sample panels, scenario sets and JSON-safe conversion."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .extractors import ScenarioSet


def read_panel(path) -> np.ndarray:
    """Headerless CSV, one observation per row, d comma-separated floats."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise DataFormatError(f"{path}: line {lineno}: non-numeric field") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(values)}")
            if not all(math.isfinite(v) for v in values):
                raise DataFormatError(f"{path}: line {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no observations")
    return np.array(rows, dtype=float)


def write_panel(path, panel) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(panel, dtype=float)), delimiter=",", fmt="%.17g")


def write_scenarios_csv(path, scen: ScenarioSet) -> None:
    """One scenario per row: weight, then the d coordinates."""
    header = ",".join(["weight"] + [f"x{i + 1}" for i in range(scen.dim)])
    table = np.column_stack([scen.weights, scen.points])
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header=header, comments="")


def read_scenarios_csv(path, source: str = "omp") -> ScenarioSet:
    table = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    return ScenarioSet(table[:, 1:], table[:, 0], source)


def to_jsonable(obj):
    """Recursively convert numpy values and dataclasses into plain JSON types.

    Non-finite floats become None so the output stays strict JSON.
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def scenario_document(scen: ScenarioSet, trace=None) -> dict:
    doc = {
        "source": scen.source,
        "points": scen.points,
        "weights": scen.weights,
        "selected_indices": scen.selected_indices,
        "metadata": scen.metadata,
    }
    if trace is not None:
        doc["trace"] = trace
    return to_jsonable(doc)


def write_json(path, document) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(document), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
