"""CSV reading for the per-iteration record tables.

Blank cells become NaN; columns that never parse as numbers (run ids) are
dropped from the numeric view but kept in the header list.
"""

from __future__ import annotations

import csv

import numpy as np


class TableError(ValueError):
    pass


def read_table(path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Return (header, numeric columns keyed by name)."""
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise TableError(f"{path}: no rows")
    columns: dict[str, np.ndarray] = {}
    data = list(zip(*rows))
    for name, raw in zip(header, data):
        vals = np.empty(len(raw))
        numeric = True
        for i, cell in enumerate(raw):
            if cell == "":
                vals[i] = np.nan
                continue
            try:
                vals[i] = float(cell)
            except ValueError:
                numeric = False
                break
        if numeric:
            columns[name] = vals
    return header, columns


def require_columns(header: list[str], columns: dict, names) -> None:
    missing = [n for n in names if n not in columns]
    if missing:
        known = ", ".join(header[:12])
        raise TableError(f"missing columns {missing}; file has: {known}, ...")
