"""Returns ingestion and machine-readable report files.

Reports are one flat comma-separated table with a header, plus a JSON
sidecar (``<name>.meta.json``) holding the run settings, seed, settings
hash and package version.  Floats are written with 17 significant digits
so a reload reproduces them exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidDataError, ParseError

__all__ = [
    "MIN_RETURNS",
    "ReturnsSeries",
    "format_float",
    "load_returns",
    "log_returns",
    "read_series",
    "settings_hash",
    "write_metadata",
    "write_series",
    "write_table",
]

#: Shortest usable returns series.
MIN_RETURNS = 20

_MISSING = {"", "na", "nan", "null", "none", "."}


@dataclass(frozen=True)
class ReturnsSeries:
    """Returns read from a file; ``source_rows`` counts data rows in the file."""

    values: np.ndarray = field(repr=False)
    label: str
    source_rows: int
    skipped: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise InvalidDataError(f"{self.label}: non-finite returns")
        if v.size < MIN_RETURNS:
            raise InvalidDataError(
                f"{self.label}: {v.size} returns, need at least {MIN_RETURNS}")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def format_float(x: float) -> str:
    """Shortest text that round-trips ``x`` at 17 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def log_returns(prices) -> np.ndarray:
    """``ln(x_t / x_{t-1})`` for positive prices; ``m`` prices give ``m - 1`` returns.

    >>> log_returns([1.0, np.e, np.e]).tolist()
    [1.0, 0.0]
    """
    x = np.asarray(prices, dtype=float)
    if x.ndim != 1 or np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise InvalidDataError("prices must be finite and positive")
    return np.diff(np.log(x))


def _sniff(path: Path):
    text = path.read_text()
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0] if text else ",", delimiters=",;\t|")
    except csv.Error:
        dialect = csv.excel
    return text, dialect


def load_returns(path, price_column: str | None = None, mode: str = "prices") -> ReturnsSeries:
    """Read one column of a delimited text file with a header row.

    Parameters
    ----------
    path : path-like
    price_column : str, optional
        Column name; by default the only column, or the last one.
    mode : {"prices", "returns"}
        ``"prices"`` turns ``m`` prices into ``m - 1`` log returns
        ``ln(x_t / x_{t-1})``; ``"returns"`` passes values through.

    Returns
    -------
    ReturnsSeries

    Raises
    ------
    ParseError
        Unparseable or non-positive price, with its 1-based file line.
    InvalidDataError
        Missing file or column, or too few usable rows.
    """
    if mode not in ("prices", "returns"):
        raise ValueError(f"mode must be 'prices' or 'returns', got {mode!r}")
    p = Path(path)
    if not p.is_file():
        raise InvalidDataError(f"no such data file: {p}")
    text, dialect = _sniff(p)
    reader = csv.reader(text.splitlines(), dialect)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InvalidDataError(f"{p}: empty file") from None
    if price_column is None:
        col = len(header) - 1
    else:
        if price_column not in header:
            raise InvalidDataError(f"{p}: no column {price_column!r} in {header}")
        col = header.index(price_column)
    label = header[col] or p.stem

    values = []
    rows = skipped = 0
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        rows += 1
        cell = row[col].strip() if col < len(row) else ""
        if cell.lower() in _MISSING:
            skipped += 1
            continue
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"{p}:{line}: cannot parse {cell!r}", row=line) from None
        if not math.isfinite(v):
            skipped += 1
            continue
        if mode == "prices" and v <= 0:
            raise ParseError(f"{p}:{line}: non-positive price {cell}", row=line)
        values.append(v)

    x = np.array(values, dtype=float)
    if mode == "prices":
        if x.size < MIN_RETURNS + 1:
            raise InvalidDataError(f"{p}: {x.size} usable prices, need at least {MIN_RETURNS + 1}")
        y = log_returns(x)
    else:
        if x.size < MIN_RETURNS:
            raise InvalidDataError(f"{p}: {x.size} usable returns, need at least {MIN_RETURNS}")
        y = x
    return ReturnsSeries(y, label, rows, skipped)


def write_series(path, values, name: str = "y") -> Path:
    """Write ``values`` as a one-column CSV with a header, 17 significant digits."""
    p = Path(path)
    with p.open("w", newline="") as fh:
        fh.write(name + "\n")
        for v in np.asarray(values, dtype=float):
            fh.write(format_float(v) + "\n")
    return p


def read_series(path, column: str | None = None) -> np.ndarray:
    """Inverse of :func:`write_series`."""
    return load_returns(path, column, mode="returns").values


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def write_table(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """Write dict rows as CSV; columns default to the keys of the first row."""
    p = Path(path)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return p


def settings_hash(settings: dict) -> str:
    """SHA-256 of the canonical JSON form of ``settings``."""
    blob = json.dumps(settings, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_metadata(table_path, settings: dict, seed, extra: dict | None = None) -> Path:
    """Write the ``.meta.json`` sidecar next to ``table_path``."""
    from . import __version__

    p = Path(table_path)
    meta = {
        "version": __version__,
        "seed": seed,
        "settings": settings,
        "settings_hash": settings_hash(settings),
    }
    if extra:
        meta.update(extra)
    side = p.with_name(p.name + ".meta.json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return side
