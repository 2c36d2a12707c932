"""Plain-text file formats: dataset CSV, key=value files and ``.dat`` tables.

Every float is written with 17 significant digits so that reading a file back
reproduces the in-memory value bit for bit.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .operator import SnapshotDataset
from .paramid import QueryDataset

__all__ = [
    "write_dataset",
    "read_dataset",
    "write_query",
    "read_query",
    "write_keyvalue",
    "read_keyvalue",
    "write_dat",
    "read_dat",
    "fmt",
]

DATASET_TAG = "kpid-dataset v1"
_HEADER_RE = re.compile(
    r"^#\s*kpid-dataset v1,\s*n=(\d+),\s*p=(\d+),\s*m=(\d+)\s*$"
)


def fmt(v) -> str:
    return f"{float(v):.17g}"


def _rows(arr, sep):
    return "".join(sep.join(fmt(v) for v in row) + "\n" for row in arr)


def write_dataset(path, data: SnapshotDataset, meta: dict = None) -> Path:
    """Header line, optional ``# key=value`` metadata lines, then ``x, u, y`` rows."""
    d = data.dims
    lines = [f"# {DATASET_TAG}, n={d.n}, p={d.p}, m={d.m}\n"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}\n")
    body = _rows(np.hstack((data.X, data.U, data.Y)), ",")
    path = Path(path)
    path.write_text("".join(lines) + body)
    return path


def _read_header(path):
    with open(path) as fh:
        first = fh.readline()
    match = _HEADER_RE.match(first.strip())
    if not match:
        raise ValueError(f"{path}: missing or malformed '# {DATASET_TAG}' header")
    n, p, m = (int(g) for g in match.groups())
    return n, p, m


def read_dataset_meta(path) -> dict:
    meta = {}
    with open(path) as fh:
        fh.readline()
        for line in fh:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
    return meta


def _read_body(path, width):
    rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if rows.size == 0:
        rows = rows.reshape(0, width)
    if rows.shape[1] != width:
        raise ValueError(f"{path}: expected {width} columns, found {rows.shape[1]}")
    return rows


def read_dataset(path) -> SnapshotDataset:
    n, p, m = _read_header(path)
    k = n + p
    rows = _read_body(path, 2 * k + m)
    return SnapshotDataset(rows[:, :k], rows[:, k:k + m], rows[:, k + m:], p=p)


def write_query(path, q: QueryDataset, meta: dict = None) -> Path:
    """Query files share the dataset layout with ``p=0``."""
    lines = [f"# {DATASET_TAG}, n={q.n}, p=0, m={q.U.shape[1]}\n"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}\n")
    path = Path(path)
    path.write_text("".join(lines) + _rows(np.hstack((q.Z, q.U, q.W)), ","))
    return path


def read_query(path) -> QueryDataset:
    n, p, m = _read_header(path)
    if p != 0:
        raise ValueError(f"{path}: query files must have p=0, found p={p}")
    rows = _read_body(path, 2 * n + m)
    return QueryDataset(rows[:, :n], rows[:, n:n + m], rows[:, n + m:])


def _render_value(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_render_value(x) for x in np.ravel(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


def write_keyvalue(path, items: dict, comments: Sequence = ()) -> Path:
    lines = [f"# {c}\n" for c in comments]
    lines += [f"{k}={_render_value(v)}\n" for k, v in items.items()]
    path = Path(path)
    path.write_text("".join(lines))
    return path


def read_keyvalue(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def write_dat(path, table, comments: Sequence = ()) -> Path:
    """Whitespace-separated numeric columns, ``#`` comment lines only."""
    table = np.asarray(table, dtype=float)
    if table.ndim == 1:
        table = table[None, :]
    lines = [f"# {c}\n" for c in comments]
    path = Path(path)
    path.write_text("".join(lines) + _rows(table, " "))
    return path


def read_dat(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)
