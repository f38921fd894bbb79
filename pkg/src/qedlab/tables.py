"""Plot-ready tables and their CSV/JSON serialization.

CSV files start with ``#`` comment lines (title, metadata, optional fit
block, column names with units) followed by a plain header row and the
data. Numbers are written with 12 significant digits and ``\\n`` line
endings so identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SIG_DIGITS = 12


@dataclass
class Table:
    command: str
    tag: str
    columns: list  # [(name, unit), ...]
    data: dict  # name -> sequence
    meta: dict = field(default_factory=dict)
    fit: dict | None = None

    def __post_init__(self):
        lengths = {len(self.data[name]) for name, _ in self.columns}
        if len(lengths) > 1:
            raise ValueError(f"table {self.tag!r} has ragged columns")

    @property
    def n_rows(self):
        name = self.columns[0][0]
        return len(self.data[name])


def fmt_number(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if not math.isfinite(x):
        return "nan"
    if x == 0.0:
        return "0"
    return format(x, f".{SIG_DIGITS}g")


def _json_value(x):
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_json_value(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return 0.0 if x == 0.0 else float(format(x, f".{SIG_DIGITS}g"))
    return x


def to_csv(table: Table) -> str:
    lines = [f"# qedlab {table.command} {table.tag}"]
    for key in sorted(table.meta):
        v = table.meta[key]
        lines.append(f"# {key}: {fmt_number(v) if not isinstance(v, (list, tuple)) else ','.join(fmt_number(x) for x in v)}")
    if table.fit is not None:
        lines.append("# fit: " + json.dumps(_json_value(table.fit), sort_keys=True))
    lines.append("# columns: " + ", ".join(f"{n} [{u}]" for n, u in table.columns))
    lines.append(",".join(n for n, _ in table.columns))
    cols = [table.data[n] for n, _ in table.columns]
    for row in zip(*cols):
        lines.append(",".join(fmt_number(v) for v in row))
    return "\n".join(lines) + "\n"


def to_json_obj(table: Table) -> dict:
    obj = {
        "command": table.command,
        "tag": table.tag,
        "meta": _json_value(table.meta),
        "columns": [{"name": n, "unit": u} for n, u in table.columns],
        "data": {n: _json_value(list(table.data[n])) for n, _ in table.columns},
    }
    if table.fit is not None:
        obj["fit"] = _json_value(table.fit)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_json_value(obj), indent=2, sort_keys=True) + "\n"


def render(tables, fmt):
    if fmt == "json":
        objs = [to_json_obj(t) for t in tables]
        return dumps_json(objs[0] if len(objs) == 1 else objs)
    return "\n".join(to_csv(t) for t in tables)


def write_tables(tables, out, fmt, stdout):
    """Write to ``out`` (one file per table, suffixed by tag when several) or to ``stdout``.

    Returns the list of written paths.
    """
    if out is None:
        stdout.write(render(tables, fmt))
        return []
    out = Path(out)
    if len(tables) == 1:
        targets = [(out, tables[0])]
    else:
        targets = [(out.with_name(f"{out.stem}_{t.tag}{out.suffix}"), t) for t in tables]
    written = []
    for path, table in targets:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render([table], fmt))
        written.append(path)
    return written


class ParseError(ValueError):
    def __init__(self, message, lineno=None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


def read_xy(path):
    """Read ``x, y[, sigma]`` columns from a CSV; ``#`` lines and one header row are skipped."""
    rows = []
    width = None
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = [c.strip() for c in text.split(",")]
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if not rows and not header_seen:
                    header_seen = True
                    continue
                raise ParseError(f"non-numeric value in {text!r}", lineno) from None
            if len(values) not in (2, 3):
                raise ParseError(f"expected 2 or 3 columns, found {len(values)}", lineno)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(f"expected {width} columns, found {len(values)}", lineno)
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite value", lineno)
            rows.append(values)
    if not rows:
        raise ParseError("no data rows found")
    arr = np.array(rows)
    sigma = arr[:, 2] if arr.shape[1] == 3 else None
    return arr[:, 0], arr[:, 1], sigma
