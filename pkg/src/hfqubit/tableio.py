"""Table output in CSV or JSON with a metadata header, and the matching readers.

CSV files start with ``# key: value`` comment lines (values JSON-encoded),
then a mandatory header row. JSON files hold ``{"metadata": ..., "data": ...}``
where ``data`` is a list of row objects or, for non-tabular results, any
JSON value. Floats are written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .angmom import HalfInt

__all__ = ["Table", "to_jsonable", "format_table", "write_table", "read_table", "parse_text"]


@dataclass
class Table:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)
    extra: dict | None = None  # non-tabular payload merged into JSON output

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]


def to_jsonable(x):
    if isinstance(x, (HalfInt, Fraction)):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _cell(x) -> str:
    x = to_jsonable(x)
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def format_table(table: Table, fmt: str = "csv") -> str:
    meta = to_jsonable(table.metadata)
    if fmt == "json":
        doc = {"metadata": meta, "data": to_jsonable(table.records())}
        if table.extra:
            doc.update(to_jsonable(table.extra))
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    for k, v in to_jsonable(table.extra or {}).items():
        if k != "terms":  # already the table body
            buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def write_table(table: Table, out=None, fmt: str = "csv") -> str:
    """Write to ``out`` (path, stream, or None for the returned text only)."""
    text = format_table(table, fmt)
    if out is None:
        return text
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return text


def _value(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_text(text: str) -> Table:
    """Parse CSV or JSON produced by :func:`format_table`."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        data = doc.get("data", [])
        extra = {k: v for k, v in doc.items() if k not in ("metadata", "data")}
        if isinstance(data, list) and all(isinstance(r, dict) for r in data):
            cols = list(data[0]) if data else []
            rows = [[r.get(c) for c in cols] for r in data]
        else:
            cols, rows = [], []
            extra["data"] = data
        return Table(cols, rows, doc.get("metadata", {}), extra or None)
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# ") and not body:
            key, _, val = line[2:].partition(": ")
            meta[key] = json.loads(val)
        else:
            body.append(line)
    reader = csv.reader(body)
    rows = list(reader)
    if not rows:
        return Table([], [], meta)
    return Table(rows[0], [[_value(c) for c in r] for r in rows[1:]], meta)


def read_table(path) -> Table:
    return parse_text(Path(path).read_text(encoding="utf-8"))
