"""CSV and JSON emission with reproducibility headers.

Every CSV starts with ``#``-prefixed header lines carrying the config hash,
the toolkit version and the seed.  Floats are written with 17 significant
digits so that they round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__

FLOAT_FMT = ".17g"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), FLOAT_FMT)


def config_hash(resolved: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def header_lines(cfg_hash: str, seed: int, kind: str, extra: dict | None = None) -> list[str]:
    lines = [f"artifact: {kind}", f"config_hash: {cfg_hash}", f"version: {__version__}", f"seed: {seed}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    return lines


def write_csv(path: Path, header: Sequence[str], columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_field(path: Path, header: Sequence[str], times: np.ndarray, x: np.ndarray, values: np.ndarray,
                name: str = "value") -> Path:
    """Space-time field in long form: ``t, x, <name>``."""
    values = np.asarray(values)
    rows = ((times[k], x[i], values[k, i]) for k in range(values.shape[0]) for i in range(values.shape[1]))
    return write_csv(path, header, ["t", "x", name], rows)


def write_field_with_errors(path: Path, header: Sequence[str], times: np.ndarray, x: np.ndarray,
                            values: np.ndarray, se: np.ndarray, name: str = "mass") -> Path:
    rows = ((times[k], x[i], values[k, i], se[k, i])
            for k in range(values.shape[0]) for i in range(values.shape[1]))
    return write_csv(path, header, ["t", "x", name, "stderr"], rows)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by strings so the JSON stays strict."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def dumps(summary: dict) -> str:
    return json.dumps(_clean(summary), indent=2, sort_keys=True, default=_jsonable) + "\n"


def write_json(path: Path, summary: dict) -> Path:
    path = Path(path)
    path.write_text(dumps(summary))
    return path
