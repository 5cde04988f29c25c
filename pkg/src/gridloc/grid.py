"""Shared raster primitives for prior and local grid maps.

All grids in this package live on a single global cell lattice: cell
(cx, cy) covers the half-open square [cx*res, (cx+1)*res) x
[cy*res, (cy+1)*res). Arrays are indexed [iy, ix] with iy increasing
northward (+y) and ix increasing eastward (+x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Patch:
    """A rectangular block of 8-bit reflectivity cells plus validity mask."""

    values: np.ndarray  # uint8, shape (ny, nx)
    valid: np.ndarray   # bool, same shape

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise ValueError("values and valid shapes differ")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def world_to_cell(coords, resolution: float) -> np.ndarray:
    """Global lattice index of the cell containing each coordinate."""
    return np.floor(np.asarray(coords, dtype=np.float64) / resolution).astype(np.int64)


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round-half-away-from-zero; inputs here are always non-negative."""
    return np.floor(np.asarray(values) + 0.5)


def cells_from_meters(extent_m: float, resolution: float) -> int:
    """Integer cell count spanning `extent_m`, validating divisibility."""
    n = int(round(extent_m / resolution))
    if n <= 0 or abs(n * resolution - extent_m) > 1e-6:
        raise ValueError(
            f"extent {extent_m} m is not a whole number of {resolution} m cells"
        )
    return n
