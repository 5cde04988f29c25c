"""Rolling vehicle-centered reflectivity grid accumulated from live scans.

The window is axis-aligned to the global frame and anchored on the global
cell lattice, so its cells coincide with prior-map cells at equal
resolution. Each cell keeps a running (sum, count); the match image is the
rounded per-cell mean. Cells scroll out (and are dropped) when the window
recenters; there is no other forgetting.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import Pose2D
from .grid import Patch, cells_from_meters, round_half_away, world_to_cell
from .priormap import Tile, write_tile


@dataclass(frozen=True)
class ReflectivityPoint:
    x: float
    y: float
    reflectivity: float
    timestamp: float = 0.0


class LocalGridMap:
    def __init__(self, center: Pose2D, cell_resolution: float, side_m: float = 40.0):
        self.cell_resolution = float(cell_resolution)
        self.side_m = float(side_m)
        self.n = cells_from_meters(side_m, cell_resolution)
        self.corner_cx, self.corner_cy = self._corner_for(center)
        self.sums = np.zeros((self.n, self.n), dtype=np.float64)
        self.counts = np.zeros((self.n, self.n), dtype=np.int64)

    def _corner_for(self, center: Pose2D) -> tuple[int, int]:
        half = self.n // 2
        return (int(round(center.x / self.cell_resolution)) - half,
                int(round(center.y / self.cell_resolution)) - half)

    @property
    def center(self) -> Pose2D:
        half = self.n / 2.0
        return Pose2D((self.corner_cx + half) * self.cell_resolution,
                      (self.corner_cy + half) * self.cell_resolution)

    def insert_points(self, points: Iterable[ReflectivityPoint]) -> None:
        pts = list(points)
        if not pts:
            return
        self.insert_arrays(
            np.array([p.x for p in pts]),
            np.array([p.y for p in pts]),
            np.array([p.reflectivity for p in pts]),
        )

    def insert_arrays(self, x: np.ndarray, y: np.ndarray, reflectivity: np.ndarray) -> None:
        """Vectorized insertion; points outside the window are ignored."""
        ix = world_to_cell(x, self.cell_resolution) - self.corner_cx
        iy = world_to_cell(y, self.cell_resolution) - self.corner_cy
        keep = (ix >= 0) & (ix < self.n) & (iy >= 0) & (iy < self.n)
        ix, iy = ix[keep], iy[keep]
        np.add.at(self.sums, (iy, ix), np.asarray(reflectivity, dtype=np.float64)[keep])
        np.add.at(self.counts, (iy, ix), 1)

    def recenter(self, new_center: Pose2D) -> None:
        """Slide the window; overlapping cells keep their statistics bound
        to the same world coordinates. The shift is whole cells."""
        new_cx, new_cy = self._corner_for(new_center)
        dx = new_cx - self.corner_cx
        dy = new_cy - self.corner_cy
        if dx == 0 and dy == 0:
            return
        sums = np.zeros_like(self.sums)
        counts = np.zeros_like(self.counts)
        src_x = slice(max(0, dx), min(self.n, self.n + dx))
        src_y = slice(max(0, dy), min(self.n, self.n + dy))
        dst_x = slice(max(0, -dx), max(0, -dx) + max(0, src_x.stop - src_x.start))
        dst_y = slice(max(0, -dy), max(0, -dy) + max(0, src_y.stop - src_y.start))
        if src_x.stop > src_x.start and src_y.stop > src_y.start:
            sums[dst_y, dst_x] = self.sums[src_y, src_x]
            counts[dst_y, dst_x] = self.counts[src_y, src_x]
        self.sums, self.counts = sums, counts
        self.corner_cx, self.corner_cy = new_cx, new_cy

    def as_match_image(self) -> Patch:
        """Snapshot of rounded per-cell means; invalid where no returns."""
        valid = self.counts > 0
        means = np.zeros_like(self.sums)
        np.divide(self.sums, self.counts, out=means, where=valid)
        values = round_half_away(means).astype(np.uint8)
        values[~valid] = 0
        return Patch(values, valid)

    def dump_debug(self, path: Path | str) -> None:
        """Write the current match image in the tile binary format."""
        img = self.as_match_image()
        write_tile(path, Tile(0, 0, img.values, img.valid), self.cell_resolution)
