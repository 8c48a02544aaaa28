"""CSV result tables: one ``# {json}`` metadata line, a header row, then numbers.

Numbers are written with 17 significant digits and LF line endings, so the
same computation always produces the same bytes.
"""
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return format(float(v), ".17g")


def write_table(path, columns, rows, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + json.dumps(meta or {}, sort_keys=True, default=_jsonable), ",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} entries, expected {len(columns)}")
        lines.append(",".join(_fmt(v) for v in row))
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_table(path):
    """Returns (meta, columns, data) with data as a 2-D float array."""
    with open(path) as fh:
        first = fh.readline()
        header = fh.readline()
        body = [ln.split(",") for ln in fh if ln.strip()]
    if not first.startswith("#"):
        raise ValueError(f"{path}: first line must be the '# {{json}}' metadata")
    meta = json.loads(first[1:])
    columns = header.strip().split(",")
    if any(len(r) != len(columns) for r in body):
        raise ValueError(f"{path}: ragged rows")
    data = np.array(body, dtype=float).reshape(len(body), len(columns))
    return meta, columns, data


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
