"""Small CSV helpers shared by the file formats."""

from __future__ import annotations

import csv
from pathlib import Path


def read_commented_csv(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Split ``# key=value`` header lines from the CSV body."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    if "=" in item:
                        k, v = item.split("=", 1)
                        meta[k] = v
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))
