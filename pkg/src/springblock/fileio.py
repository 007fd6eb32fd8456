"""CSV helpers shared by the catalog, statistics and CLI writers.

Every emitted CSV carries a leading comment line with run metadata (tool
version, parameters, seed) so a figure can be reproduced from its data file
alone.  Numbers are written with 17 significant digits, making round trips
through text lossless.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__

__all__ = ["fmt", "meta_line", "write_csv", "read_csv"]


def fmt(x: float) -> str:
    """Full double precision decimal formatting."""
    return format(float(x), ".17g")


def meta_line(info: dict) -> str:
    parts = [f"springblock v{__version__}"]
    parts.extend(f"{k}={v}" for k, v in info.items())
    return "# " + " ".join(parts)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence[str]], info: dict) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(meta_line(info) + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)


def read_csv(path) -> tuple[dict, list[dict]]:
    """Read a CSV written by :func:`write_csv`; returns (meta, row dicts)."""
    meta: dict = {}
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for token in first[1:].split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    meta[key] = value
        else:
            fh.seek(0)
        reader = csv.DictReader(fh)
        rows = list(reader)
    return meta, rows
