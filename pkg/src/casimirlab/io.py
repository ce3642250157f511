"""Delimited-text and JSON file formats.

Tables are CSV preceded by ``# key = value`` metadata lines; values in the
metadata are JSON. Floats are written with 17 significant digits so files
round-trip exactly and identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from typing import Mapping

import numpy as np

from . import __version__

SCHEMA_RUNS = "casimirlab.runs/1"
SCHEMA_FORCE_CURVE = "casimirlab.force-curve/1"
SCHEMA_ANALYSIS = "casimirlab.analysis/1"
SCHEMA_COMPARE = "casimirlab.compare/1"
SCHEMA_EPSILON = "casimirlab.epsilon/1"
SCHEMA_TRUTH = "casimirlab.truth/1"
SCHEMA_ERROR = "casimirlab.error/1"


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path, columns: Mapping[str, object], meta: Mapping[str, object] | None = None):
    """Write equal-length ``columns`` as CSV with a metadata preamble."""
    meta = dict(meta or {})
    meta.setdefault("code_version", __version__)
    names = list(columns)
    cols = [list(np.asarray(columns[n]).tolist()) if not isinstance(columns[n], list) else columns[n] for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"column lengths differ: {sorted(lengths)}")
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key} = {canonical_json(meta[key])}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*cols):
        writer.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


def read_table(path) -> tuple[dict, dict]:
    """Inverse of :func:`write_table`; numeric columns come back as arrays."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            meta[key.strip()] = json.loads(val.strip())
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError(f"{path}: no table header")
    reader = csv.reader(body)
    header = next(reader)
    rows = list(reader)
    cols = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in raw])
        except ValueError:
            cols[name] = raw
    return meta, cols


def write_json(path, doc):
    text = json.dumps(_plain(doc), sort_keys=True, indent=1, allow_nan=True) + "\n"
    _atomic_write(path, text)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
