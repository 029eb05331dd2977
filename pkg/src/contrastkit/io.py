"""CSV ingestion and serialisation.

Conventions: comma separated, UTF-8, ``.`` decimal separator, one sample per
row, optional header row. Lines starting with ``#`` are comments; the writers
use them to stamp artifacts with a config hash and seed. Curve files store the
shared time grid in their first data row.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .structured import CurveSet

FLOAT_FORMAT = "%.17g"


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _read_rows(path):
    """Yield ``(line_number, cells)`` for every non-blank, non-comment line."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for cells in reader:
            line = reader.line_num
            if not cells or all(not c.strip() for c in cells):
                continue
            if cells[0].lstrip().startswith("#"):
                continue
            yield line, [c.strip() for c in cells]


def load_csv(path, has_header=None, response_column=None):
    """Read a numeric CSV file.

    Parameters
    ----------
    path : str or Path
    has_header : bool or None
        ``None`` treats the first row as a header when any of its cells is
        not a number.
    response_column : str or int, optional
        Column (by header name or index) to split off as the response.

    Returns
    -------
    matrix : ndarray of shape (n, p)
    response : ndarray of shape (n,) or None
    names : list of str
    """
    rows = list(_read_rows(path))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    first_line, first = rows[0]
    if has_header is None:
        has_header = not all(_is_number(c) for c in first)
    if has_header:
        names = first
        rows = rows[1:]
    else:
        names = [f"x{j}" for j in range(len(first))]
    width = len(names)
    data = np.empty((len(rows), width))
    for i, (line, cells) in enumerate(rows):
        if len(cells) != width:
            raise ParseError(f"{path}: line {line} has {len(cells)} fields, expected {width}")
        for j, cell in enumerate(cells):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {cell!r} at line {line}, column {j + 1}"
                ) from None

    response = None
    if response_column is not None:
        if isinstance(response_column, str) and response_column in names:
            j = names.index(response_column)
        elif isinstance(response_column, int) and 0 <= response_column < width:
            j = response_column
        else:
            raise ParseError(f"{path}: response column {response_column!r} not found")
        response = data[:, j].copy()
        data = np.delete(data, j, axis=1)
        names = names[:j] + names[j + 1:]
    return data, response, list(names)


def _stamp_lines(stamp):
    if not stamp:
        return []
    return ["# " + " ".join(f"{k}={v}" for k, v in stamp.items())]


def save_matrix(path, values, header=None, stamp=None) -> Path:
    """Write a 2-D array with 17 significant digits per value."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    path = Path(path)
    lines = _stamp_lines(stamp)
    if header is not None:
        lines.append(",".join(str(h) for h in header))
    lines.extend(",".join(FLOAT_FORMAT % v for v in row) for row in values)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def save_embedding(path, values, stamp=None) -> Path:
    """Write an ``(n, d)`` embedding with columns ``c1 .. cd``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    header = [f"c{j + 1}" for j in range(values.shape[1])]
    return save_matrix(path, values, header=header, stamp=stamp)


def save_table(path, header, rows, stamp=None) -> Path:
    """Write a mixed-type table; floats use 17 significant digits."""
    path = Path(path)
    lines = _stamp_lines(stamp)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(FLOAT_FORMAT % v if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_curves(path) -> CurveSet:
    """Read a curve file whose first data row is the time grid."""
    data, _, _ = load_csv(path, has_header=False)
    if data.shape[0] < 2:
        raise ParseError(f"{path}: curve file needs a grid row and at least one curve")
    return CurveSet(grid=data[0], values=data[1:])


def save_curves(path, curves: CurveSet, stamp=None) -> Path:
    return save_matrix(path, np.vstack([curves.grid, curves.values]), stamp=stamp)
