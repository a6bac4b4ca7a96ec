"""Knowledge-preserving stretching of a learned positional-embedding table.

The first `n_keep` rows (the best-trained positions) are copied verbatim;
the remaining target positions are filled by linear interpolation between
neighboring source rows, so a 77-row table extends to 248 rows without
retraining. Positions are 1-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimInconsistentError,
    OutOfRangeError,
    ParseError,
    RowMismatchError,
)


@dataclass(frozen=True)
class StretchSpec:
    """Stretch geometry: keep positions 1..n_keep, map n_src rows onto n_dst.

    The interpolation factor is derived, never configured, so the spec
    stays internally consistent. n_dst == n_src (factor 1) degenerates to
    the identity mapping.
    """

    n_keep: int = 20
    n_src: int = 77
    n_dst: int = 248

    def __post_init__(self):
        if self.n_keep < 1:
            raise ValueError(f"n_keep must be >= 1, got {self.n_keep}")
        if not (self.n_keep < self.n_src <= self.n_dst):
            raise ValueError(
                f"need n_keep < n_src <= n_dst, got "
                f"{self.n_keep}/{self.n_src}/{self.n_dst}"
            )

    @property
    def stretch_factor(self) -> float:
        return (self.n_dst - self.n_keep) / (self.n_src - self.n_keep)


@dataclass(frozen=True)
class PEMatrix:
    """Position-by-dimension table; row `pos` lives at data[pos - 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {data.shape}")
        if data.shape[0] < 2:
            raise ValueError("positional table needs at least 2 rows")
        if not np.all(np.isfinite(data)):
            raise ValueError("positional table contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, pos: int) -> np.ndarray:
        return self.data[pos - 1]


def source_position(pos: int, spec: StretchSpec) -> float:
    """Fractional source position feeding target position `pos`.

    Kept positions map to themselves; beyond n_keep the mapping is linear,
    landing exactly on n_src at pos == n_dst. The multiply-before-divide
    form keeps integer landings exact in floating point.
    """
    if not 1 <= pos <= spec.n_dst:
        raise OutOfRangeError(f"pos {pos} outside [1, {spec.n_dst}]")
    if pos <= spec.n_keep:
        return float(pos)
    return spec.n_keep + (pos - spec.n_keep) * (spec.n_src - spec.n_keep) / (
        spec.n_dst - spec.n_keep
    )


def stretch(pe: PEMatrix, spec: StretchSpec) -> PEMatrix:
    """Produce the stretched table: n_dst rows, same dimension.

    Rows 1..n_keep are bitwise copies; each later row interpolates between
    the flooring and ceiling source rows of its fractional source position.
    """
    if pe.rows != spec.n_src:
        raise RowMismatchError(f"matrix has {pe.rows} rows, spec expects {spec.n_src}")
    out = np.empty((spec.n_dst, pe.dim), dtype=np.float64)
    out[: spec.n_keep] = pe.data[: spec.n_keep]
    for pos in range(spec.n_keep + 1, spec.n_dst + 1):
        src = source_position(pos, spec)
        lo = math.floor(src)
        frac = src - lo
        if frac == 0.0:
            out[pos - 1] = pe.row(lo)
        else:
            out[pos - 1] = (1.0 - frac) * pe.row(lo) + frac * pe.row(lo + 1)
    return PEMatrix(out)


def load_pe(path) -> PEMatrix:
    """Read the PEM text format: header `PEM1 <rows> <dim>`, one row per line."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise ParseError("line 1: empty file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "PEM1":
        raise ParseError("line 1: expected header 'PEM1 <rows> <dim>'")
    try:
        rows, dim = int(header[1]), int(header[2])
    except ValueError as exc:
        raise ParseError("line 1: rows/dim must be integers") from exc
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != rows:
        raise DimInconsistentError(f"header declares {rows} rows, file has {len(body)}")
    data = np.empty((rows, dim), dtype=np.float64)
    for index, line in enumerate(body):
        parts = line.split()
        if len(parts) != dim:
            raise DimInconsistentError(
                f"line {index + 2}: expected {dim} values, found {len(parts)}"
            )
        try:
            data[index] = [float(token) for token in parts]
        except ValueError as exc:
            raise ParseError(f"line {index + 2}: invalid float") from exc
    return PEMatrix(data)


def save_pe(pe: PEMatrix, path) -> None:
    """Write the PEM text format with 17 significant digits (round-trip exact)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"PEM1 {pe.rows} {pe.dim}\n")
        for row in pe.data:
            handle.write(" ".join(f"{value:.17g}" for value in row) + "\n")
