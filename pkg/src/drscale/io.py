"""Reading and writing matrices and reports.

Matrix files are delimited text: one point per line, cells separated by
commas or whitespace, ``#`` starting a comment line.  A condensed distance
file starts with a preamble line ``n=<N>`` followed by the ``N(N-1)/2``
distances in pair order ``(0,1), (0,2), ..., (N-2,N-1)``, any number per
line.

Reports are JSON with sorted keys and floats rounded to 12 significant
digits, so identical runs produce identical bytes.  Every file is written to
a temporary sibling first and moved into place.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ParseError
from .matrix import n_pairs, n_points_from_length

__all__ = [
    "MatrixFile",
    "ReportDocument",
    "atomic_write_text",
    "file_digest",
    "format_table",
    "load_matrix",
    "save_matrix",
    "to_jsonable",
]

TOOL_NAME = "drscale"
_PREAMBLE = re.compile(r"^\s*n\s*=\s*(\d+)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class MatrixFile:
    """A matrix on disk and how to read it."""

    path: str
    precomputed: bool = False
    header: bool = False

    def load(self) -> np.ndarray:
        return load_matrix(self.path, precomputed=self.precomputed, header=self.header)


def _split(line: str) -> list[str]:
    if "," in line:
        return [c.strip() for c in line.split(",")]
    return line.split()


def _parse_cells(cells, lineno: int) -> list[float]:
    out = []
    for cell in cells:
        try:
            value = float(cell)
        except ValueError:
            raise ParseError(f"cannot parse {cell!r} as a number", line=lineno) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {cell!r}", line=lineno)
        out.append(value)
    return out


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def load_matrix(path, precomputed: bool = False, header: bool = False) -> np.ndarray:
    """Read a point matrix, or a condensed distance vector if ``precomputed``.

    Parameters
    ----------
    path : str or Path
        Text file to read.
    precomputed : bool
        Expect the condensed format with an ``n=<N>`` preamble.
    header : bool
        Skip the first content line of a point matrix.

    Returns
    -------
    ndarray
        ``(N, m)`` matrix, or a vector of length ``N(N-1)/2``.

    Raises
    ------
    ParseError
        On ragged rows, non-numeric or non-finite cells, a bad preamble or a
        wrong number of distances.  The message names the offending line.
    OSError
        If the file cannot be read.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = _content_lines(text)
    if precomputed:
        return _load_condensed(lines)

    if header:
        next(lines, None)
    rows = []
    width = None
    for lineno, line in lines:
        row = _parse_cells(_split(line), lineno)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", line=lineno)
        rows.append(row)
    if not rows:
        raise ParseError("file contains no data rows")
    return np.asarray(rows, dtype=np.float64)


def _load_condensed(lines) -> np.ndarray:
    first = next(lines, None)
    if first is None:
        raise ParseError("empty file; expected an 'n=<N>' preamble")
    lineno, line = first
    m = _PREAMBLE.match(line)
    if not m:
        raise ParseError(f"expected an 'n=<N>' preamble, found {line!r}", line=lineno)
    n = int(m.group(1))
    if n < 2:
        raise ParseError(f"need at least 2 points, preamble says {n}", line=lineno)
    expected = n_pairs(n)
    values: list[float] = []
    for lineno, line in lines:
        cells = _parse_cells(_split(line), lineno)
        if any(c < 0 for c in cells):
            raise ParseError("distances must be non-negative", line=lineno)
        values.extend(cells)
        if len(values) > expected:
            raise ParseError(f"more than {expected} distances for n={n}", line=lineno)
    if len(values) != expected:
        raise ParseError(f"n={n} needs {expected} distances, found {len(values)}")
    return np.asarray(values, dtype=np.float64)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def save_matrix(path, array) -> None:
    """Write a 2-D point matrix (comma-separated) or a condensed vector.

    Values are printed with 12 significant digits.  A 1-D array is written
    in the condensed format, so ``load_matrix(path, precomputed=True)``
    reads it back.
    """
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 1:
        n = n_points_from_length(a.size)
        body = [f"n={n}"] + [_fmt(v) for v in a.tolist()]
    elif a.ndim == 2:
        body = [",".join(_fmt(v) for v in row) for row in a.tolist()]
    else:
        raise ValueError(f"expected a 1-D or 2-D array, got {a.ndim} dimensions")
    atomic_write_text(path, "\n".join(body) + "\n")


def format_table(columns: list[str], rows) -> str:
    """Comma-separated table with a header line; floats get 12 digits."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return "nan" if math.isnan(v) else _fmt(float(v))
        return str(v)

    lines = [",".join(columns)]
    lines += [",".join(cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary file beside ``path`` and rename it."""
    target = Path(path)
    directory = target.parent if str(target.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def to_jsonable(obj):
    """Convert numpy values, tuples and odd floats into plain JSON types.

    Floats are rounded to 12 significant digits; NaN becomes ``null`` and
    infinities become the strings ``"inf"`` / ``"-inf"``.  Tuple keys are
    joined with ``"<"``.
    """
    if isinstance(obj, dict):
        return {_key(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(_fmt(x))
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _key(k) -> str:
    if isinstance(k, tuple):
        return "<".join(str(x) for x in k)
    return str(k)


@dataclass
class ReportDocument:
    """Everything one command produced, ready for deterministic JSON output.

    ``inputs`` maps a role or label to ``{"path", "sha256", "shape"}``;
    ``reports`` is a list of per-embedding metric dictionaries.  The
    remaining payloads are present only for the commands that make them.
    """

    command: str
    parameters: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)
    curves: list | None = None
    ladder: dict | None = None
    ordering: dict | None = None

    def add_input(self, role: str, path, array: np.ndarray) -> None:
        self.inputs[role] = {
            "path": str(path),
            "sha256": file_digest(path),
            "shape": list(array.shape),
        }

    def to_dict(self) -> dict:
        doc = {
            "tool": TOOL_NAME,
            "version": __version__,
            "command": self.command,
            "parameters": self.parameters,
            "inputs": self.inputs,
            "reports": self.reports,
        }
        for name in ("curves", "ladder", "ordering"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        return to_jsonable(doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def write(self, path) -> None:
        atomic_write_text(path, self.to_json())
