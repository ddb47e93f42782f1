"""Trajectory tables and atomic file writes.

Tables are comma-separated with a header ``t,q1..qn,qd1..qdn,u1..um``.
Values are written with 17 significant digits, which reproduces every
double exactly on reading.
"""

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .integrator import Trajectory

FLOAT_FORMAT = ".17g"


class TableFormatError(ValueError):
    """A trajectory table could not be parsed; ``row`` is 1-based (header is row 1)."""

    def __init__(self, message, path=None, row=None):
        where = f"{path}: " if path else ""
        where += f"row {row}: " if row is not None else ""
        super().__init__(where + message)
        self.path = path
        self.row = row


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temp file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload):
    write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def table_header(n_links, n_controls):
    return (
        ["t"]
        + [f"q{i + 1}" for i in range(n_links)]
        + [f"qd{i + 1}" for i in range(n_links)]
        + [f"u{j + 1}" for j in range(n_controls)]
    )


def format_table(header, rows):
    lines = [",".join(header)]
    lines += [",".join(format(float(v), FLOAT_FORMAT) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def trajectory_to_text(traj):
    if traj.controls is not None and traj.sampling != "knot":
        raise ValueError("only knot-sampled controls can be written to a table")
    m = 0 if traj.controls is None else traj.controls.shape[1]
    columns = [traj.times[:, None], traj.states]
    if m:
        columns.append(traj.controls)
    return format_table(table_header(traj.n_links, m), np.hstack(columns))


def write_trajectory(path, traj):
    write_atomic(path, trajectory_to_text(traj))


def _parse_header(fields, path):
    if not fields or fields[0] != "t":
        raise TableFormatError("header must start with 't'", path, 1)
    q = [f for f in fields if f.startswith("q") and not f.startswith("qd")]
    n = len(q)
    m = len(fields) - 1 - 2 * n
    if n == 0 or m < 0 or fields != table_header(n, m):
        raise TableFormatError(
            f"header {','.join(fields)!r} is not of the form t,q1..qn,qd1..qdn,u1..um", path, 1
        )
    return n, m


def parse_trajectory(text, path=None):
    """Parse a trajectory table; controls are ``None`` when it has no ``u`` columns."""
    lines = text.splitlines()
    if not lines:
        raise TableFormatError("file is empty", path)
    n, m = _parse_header([f.strip() for f in lines[0].split(",")], path)
    width = 1 + 2 * n + m
    data = []
    for row_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != width:
            raise TableFormatError(f"expected {width} fields, got {len(fields)}", path, row_no)
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise TableFormatError(str(exc), path, row_no) from None
        if not all(np.isfinite(values)):
            raise TableFormatError("non-finite value", path, row_no)
        data.append(values)
    if not data:
        raise TableFormatError("table has no data rows", path)
    arr = np.array(data)
    try:
        return Trajectory(arr[:, 0], arr[:, 1 : 1 + 2 * n], arr[:, 1 + 2 * n :] if m else None)
    except ValueError as exc:
        raise TableFormatError(str(exc), path) from None


def read_trajectory(path):
    return parse_trajectory(Path(path).read_text(), path=str(path))
