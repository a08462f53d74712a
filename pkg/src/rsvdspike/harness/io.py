"""Record emission (CSV / JSON) and matrix file I/O.

Matrix files come in two formats:

* CSV: a first row ``n,m`` with the dimensions, then ``n`` rows of ``m``
  values written with round-trip precision.
* Binary: magic ``RSVD``, ``u32`` version, ``u64`` n, ``u64`` m, followed by
  ``n*m`` little-endian float64 values in row-major order.
"""
from __future__ import annotations

import csv
import json
import math
import os
import struct
import subprocess
from importlib import metadata as importlib_metadata
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .config import ExperimentConfig, ExperimentRecord

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "version_string",
    "run_metadata",
    "emit",
    "read_records",
    "write_matrix",
    "read_matrix",
]

MAGIC = b"RSVD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5, check=True,
        )
        if out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


def run_metadata(cfg: Optional[ExperimentConfig]) -> dict:
    meta = {"version": version_string()}
    if cfg is not None:
        meta.update(config=cfg.to_dict(), seed=cfg.seed, desk_scale=cfg.desk_scale)
    return meta


def _rows(records: Iterable) -> list[dict]:
    return [r.flat() if isinstance(r, ExperimentRecord) else dict(r) for r in records]


def _columns(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    seen = set()
    for row in rows:
        for k in row:
            if k not in seen:
                seen.add(k)
                cols.append(k)
    return cols


def _json_safe(x: Any) -> Any:
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def emit(records: Iterable, path, fmt: str = "csv", meta: Optional[dict] = None) -> None:
    """Write records as CSV or JSON.

    CSV rows share one header (the union of all columns, blanks where a
    record lacks a column); metadata goes to ``<path>.meta.json``. JSON is an
    object ``{"metadata": ..., "records": [...]}``.
    """
    rows = [{k: _json_safe(v) for k, v in r.items()} for r in _rows(records)]
    meta = meta if meta is not None else run_metadata(None)
    path = os.fspath(path)
    try:
        if fmt == "json":
            with open(path, "w", encoding="utf-8") as fh:
                json.dump({"metadata": meta, "records": rows}, fh, indent=1)
                fh.write("\n")
        elif fmt == "csv":
            cols = _columns(rows)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
                w.writeheader()
                for row in rows:
                    w.writerow({k: ("" if row.get(k) is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                                for k in cols})
            with open(path + ".meta.json", "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=1)
                fh.write("\n")
        else:
            raise ValueError(f"unknown output format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _parse_cell(text: str) -> Any:
    if text == "":
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_records(path) -> list[dict]:
    """Parse a file written by :func:`emit` back into flat dictionaries.

    Cells that are empty in CSV come back as absent keys, matching the
    records they were written from.
    """
    path = os.fspath(path)
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)["records"]
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: _parse_cell(v) for k, v in row.items() if v != ""} for row in csv.DictReader(fh)]


def write_matrix(path, a: np.ndarray, fmt: Optional[str] = None) -> None:
    """Write a 2-d array as CSV or the binary format (chosen by ``fmt`` or suffix)."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("matrix must be 2-d")
    path = os.fspath(path)
    fmt = fmt or ("csv" if path.endswith(".csv") else "bin")
    n, m = a.shape
    try:
        if fmt == "bin":
            with open(path, "wb") as fh:
                fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, m))
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        elif fmt == "csv":
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([n, m])
                for row in a:
                    w.writerow([repr(float(x)) for x in row])
        else:
            raise ValueError(f"unknown matrix format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_matrix(path) -> np.ndarray:
    """Read a matrix file, detecting the binary format by its magic bytes."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if head[:4] == MAGIC:
                if len(head) < _HEADER.size:
                    raise ValueError(f"{path}: truncated header")
                _, version, n, m = _HEADER.unpack(head)
                if version != FORMAT_VERSION:
                    raise ValueError(f"{path}: unsupported format version {version}")
                data = fh.read()
                if len(data) != 8 * n * m:
                    raise ValueError(f"{path}: expected {n * m} values, found {len(data) // 8}")
                return np.frombuffer(data, dtype="<f8").astype(float).reshape(n, m)
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: first row must give the dimensions n,m")
    try:
        n, m = int(rows[0][0]), int(rows[0][1])
        body = [[float(x) for x in r] for r in rows[1:] if r]
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from exc
    if len(body) != n or any(len(r) != m for r in body):
        raise ValueError(f"{path}: shape does not match header {n},{m}")
    return np.array(body, dtype=float).reshape(n, m)
