"""Report, curve and snapshot serialization.

Snapshot binary layout (little endian):

    offset  0  magic   b"DHQC1\\0" + 2 zero bytes
    offset  8  uint64  n (matrix is n x n)
    offset 16  float64 dx
    offset 24  float64 x_min
    offset 32  n*n complex128 entries, row-major (real, imag interleaved)

so a 512 x 512 snapshot is exactly 32 + 512*512*16 bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import ValidationError
from .grid import DensityMatrix, SpatialGrid

MAGIC = b"DHQC1\0\0\0"
HEADER = struct.Struct("<8sQdd")
assert HEADER.size == 32


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(float(v))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dump_json(data: Any, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_curve(columns: dict[str, np.ndarray], path: Path) -> None:
    """CSV with a header row; floats at 17 significant digits (round-trip exact)."""
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([f"{v:.17g}" for v in row])


def read_curve(path: Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    arr = np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(names))
    return {n: arr[:, i] for i, n in enumerate(names)}


def write_snapshot_binary(rho: DensityMatrix, path: Path) -> None:
    grid = rho.grid
    n = grid.n_points
    with Path(path).open("wb") as fh:
        fh.write(HEADER.pack(MAGIC, n, grid.dx, grid.x_min))
        fh.write(np.ascontiguousarray(rho.entries, dtype="<c16").tobytes(order="C"))


def read_snapshot_binary(path: Path) -> DensityMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValidationError(f"{path}: truncated snapshot header", "snapshot")
    magic, n, dx, x_min = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}", "snapshot")
    if len(raw) != HEADER.size + 16 * n * n:
        raise ValidationError(f"{path}: size does not match n={n}", "snapshot")
    entries = np.frombuffer(raw, dtype="<c16", offset=HEADER.size).reshape(n, n).astype(np.complex128)
    grid = SpatialGrid(int(n), x_min, x_min + n * dx)
    return DensityMatrix(grid, entries)


def write_snapshot_csv(rho: DensityMatrix, path: Path) -> None:
    x = rho.grid.x
    xx, yy = np.meshgrid(x, x, indexing="ij")
    write_curve({"x": xx.ravel(), "y": yy.ravel(), "re": rho.entries.real.ravel(),
                 "im": rho.entries.imag.ravel()}, path)


def read_snapshot_csv(path: Path, grid: SpatialGrid) -> DensityMatrix:
    cols = read_curve(path)
    n = grid.n_points
    return DensityMatrix(grid, (cols["re"] + 1j * cols["im"]).reshape(n, n))


def config_hash(data: bytes | dict) -> str:
    if isinstance(data, dict):
        data = json.dumps(_jsonable(data), sort_keys=True).encode()
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_sha256: str
    files: list[str] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def verify(self, out_dir: Path) -> None:
        for f in self.files:
            p = Path(out_dir) / f
            if not p.is_file() or p.stat().st_size == 0:
                raise OSError(f"output file {p} is missing or empty")

    def as_dict(self) -> dict:
        return {"command": self.command, "config_sha256": self.config_sha256, "files": self.files,
                "checks": self.checks, "passed": all(self.checks.values()), "version": self.version,
                "timestamp": self.timestamp}


def report_dict(report) -> dict:
    return {
        "scenario": report.scenario,
        "scalars": {k: s.as_dict() for k, s in report.scalars.items()},
        "passed": report.passed,
        "metadata": report.metadata,
        "invariants": report.invariants.as_list(),
        "warnings": report.warnings,
        "curves": sorted(report.curves),
        "snapshots": sorted(report.snapshots),
    }


def write_outputs(report, out_dir: str | Path, snapshots: str = "binary", curves: bool = True,
                  prefix: str | None = None) -> list[str]:
    """Write the report JSON, one CSV per curve and the density-matrix
    snapshots; returns file names relative to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = prefix or report.scenario
    files = [f"{stem}.json"]
    dump_json(report_dict(report), out / files[0])
    if curves:
        for name, curve in report.curves.items():
            fn = f"{stem}_{name}.csv"
            write_curve(curve.columns, out / fn)
            files.append(fn)
    if snapshots != "none":
        for name, rho in report.snapshots.items():
            if snapshots == "binary":
                fn = f"{stem}_{name}.dhqc"
                write_snapshot_binary(rho, out / fn)
            else:
                fn = f"{stem}_{name}.csv"
                write_snapshot_csv(rho, out / fn)
            files.append(fn)
    return files
