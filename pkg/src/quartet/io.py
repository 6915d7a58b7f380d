"""Output files: 12-significant-digit CSV tables, dataset ingestion and run manifests."""
from __future__ import annotations

import csv
import json
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

VERSION = "0.1.0"


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    return f"{float(x):.12g}"


def write_table(path: Path, header: Sequence[str], columns: Sequence[Sequence[float]]) -> Path:
    """Write equal-length numeric columns as CSV text with 12 significant digits."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols) or len(header) != len(cols):
        raise ValidationError("columns and header must have matching lengths")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([fmt(c[i]) for c in cols])
    return path


def write_complex_series(path: Path, x_name: str, x, values) -> Path:
    v = np.asarray(values, dtype=complex)
    return write_table(path, [x_name, "real", "imag"], [x, v.real, v.imag])


def read_series(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``x, value[, imag]`` CSV (header optional); complex when an imag column exists."""
    rows = []
    with Path(path).open() as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise ValidationError(f"{path}: non-numeric row {rec}") from None
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arr = np.array(rows)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise ValidationError(f"{path}: expected 2 or 3 columns")
    if arr.shape[1] == 3:
        return arr[:, 0], arr[:, 1] + 1j * arr[:, 2]
    return arr[:, 0], arr[:, 1]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


@dataclass
class RunManifest:
    command: str
    config: dict
    truncations: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    arguments: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    version: str = VERSION
    python: str = field(default_factory=platform.python_version)
    numpy: str = np.__version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def write(self, out_dir: Path) -> Path:
        return write_json(Path(out_dir) / f"{self.command}_manifest.json", asdict(self))
