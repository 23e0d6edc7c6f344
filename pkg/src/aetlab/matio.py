"""Plain-text matrix and key=value file formats shared by encoders, the
subspace projector, and the CLI.

Matrix files: first line "rows cols", then one whitespace-separated row per
line, written with repr-level precision so round-trips are exact.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


def save_matrix(m: np.ndarray, path: str | Path) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    rows, cols = m.shape
    with open(path, "w") as fh:
        fh.write(f"{rows} {cols}\n")
        for row in m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_matrix(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad matrix header")
        rows, cols = int(header[0]), int(header[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (rows, cols):
        raise ValueError(f"{path}: expected {rows}x{cols}, got {data.shape}")
    return data


def save_keyvalues(d: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        for k, v in d.items():
            fh.write(f"{k}={v}\n")


def load_keyvalues(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: bad line {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
