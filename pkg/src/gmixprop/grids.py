"""Rectangular evaluation grids and density-on-grid containers.

Density grids serialize either to CSV (one row per cell, header
``x1,...,xq,density``) or to a compact binary layout:

    magic   8 bytes  b"GMXGRID1"
    q       uint32   number of axes
    shape   q x uint32
    lower   q x float64
    upper   q x float64
    values  prod(shape) x float64, row major (last axis fastest)

All integers and floats are little endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError

_MAGIC = b"GMXGRID1"


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned rectangular grid with inclusive endpoints."""

    lower: tuple
    upper: tuple
    shape: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        shape = tuple(int(n) for n in self.shape)
        if not len(lower) == len(upper) == len(shape):
            raise ValueError("lower, upper, shape must share length")
        if any(not np.isfinite(v) for v in lower + upper):
            raise ValueError("grid bounds must be finite")
        if any(u <= l for l, u in zip(lower, upper)):
            raise ValueError("upper bounds must exceed lower bounds")
        if any(n < 2 for n in shape):
            raise ValueError("resolution must be at least 2 per axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_step(cls, lower, upper, step: float) -> "GridSpec":
        """Grid with spacing ``step`` per axis (endpoints included)."""
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        shape = tuple(int(round((u - l) / step)) + 1 for l, u in zip(lower, upper))
        return cls(lower, upper, shape)

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def steps(self) -> tuple:
        return tuple((u - l) / (n - 1) for l, u, n in zip(self.lower, self.upper, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    def axes(self) -> list:
        return [np.linspace(l, u, n) for l, u, n in zip(self.lower, self.upper, self.shape)]

    def points(self) -> np.ndarray:
        """All grid nodes, stacked into an (N, q) array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class DensityGrid:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.spec.shape)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        """Riemann sum times cell volume."""
        return float(self.values.sum() * self.spec.cell_volume)

    def axis_slice(self, axis: int, value: float) -> np.ndarray:
        """Values along the grid line nearest to ``axis = value``."""
        coords = self.spec.axes()[axis]
        idx = int(np.argmin(np.abs(coords - value)))
        return np.take(self.values, idx, axis=axis)

    def to_csv(self, path) -> None:
        pts = self.spec.points()
        header = ",".join(f"x{j + 1}" for j in range(self.spec.dimension)) + ",density"
        data = np.column_stack([pts, self.values.ravel()])
        np.savetxt(path, data, delimiter=",", header=header, comments="")

    def to_binary(self, path) -> None:
        q = self.spec.dimension
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack(f"<I{q}I", q, *self.spec.shape))
            fh.write(struct.pack(f"<{q}d", *self.spec.lower))
            fh.write(struct.pack(f"<{q}d", *self.spec.upper))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "DensityGrid":
        with open(path, "rb") as fh:
            if fh.read(8) != _MAGIC:
                raise ValueError(f"{path}: not a gmixprop grid file")
            (q,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{q}I", fh.read(4 * q))
            lower = struct.unpack(f"<{q}d", fh.read(8 * q))
            upper = struct.unpack(f"<{q}d", fh.read(8 * q))
            count = int(np.prod(shape))
            values = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
        return cls(GridSpec(lower, upper, shape), values)


def check_same_grid(a: DensityGrid, b: DensityGrid) -> None:
    if a.spec != b.spec:
        raise GridMismatchError("density grids have different axes")


def line_points(start, stop, count: int) -> np.ndarray:
    """Evenly spaced points on the segment from start to stop, shape (count, q)."""
    start = np.atleast_1d(np.asarray(start, dtype=float))
    stop = np.atleast_1d(np.asarray(stop, dtype=float))
    t = np.linspace(0.0, 1.0, count)[:, None]
    return start + t * (stop - start)
