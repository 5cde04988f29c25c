"""Synthetic ground-truth world: road features on a textured field.

Features are vector shapes (striped polylines and disks) rasterized on
demand, so the same world renders consistently at any cell resolution.
The ground-truth reflectivity is quantized on the native-resolution cell
lattice: every point inside one native cell sees the same value. That
makes a noise-free accumulation of point samples reproduce the rendered
prior exactly, cell for cell.

Rendering supports two modalities from the same world: `lidar` returns
the ground-truth reflectivity directly; `aerial` applies a per-feature-
class affine remap plus additive texture noise, mimicking how a grayscale
aerial photo of the same ground differs from what the laser measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GlobalFrame
from .grid import round_half_away
from .priormap import MapManifest, PriorMap, Tile, downsample_map
from .rng import cell_hash01, stream

TILE_SIDE_M = 64.0

CLASS_BACKGROUND = 0
CLASS_ROAD = 1
CLASS_MARKING = 2
CLASS_CROSSWALK = 3
CLASS_ISLAND = 4

# Ground-truth (LIDAR-modality) reflectivity per feature class.
CLASS_BASE = {
    CLASS_BACKGROUND: 60.0,
    CLASS_ROAD: 30.0,
    CLASS_MARKING: 225.0,
    CLASS_CROSSWALK: 235.0,
    CLASS_ISLAND: 90.0,
}
CLASS_TEXTURE_AMP = {
    CLASS_BACKGROUND: 18.0,
    CLASS_ROAD: 8.0,
    CLASS_MARKING: 6.0,
    CLASS_CROSSWALK: 6.0,
    CLASS_ISLAND: 12.0,
}
# Later entries paint over earlier ones.
_PAINT_ORDER = (CLASS_ROAD, CLASS_ISLAND, CLASS_MARKING, CLASS_CROSSWALK)


@dataclass(frozen=True)
class Stripe:
    """Polyline with a width: roads, lane markings, crosswalk bars."""

    points: np.ndarray  # (k, 2)
    width: float
    cls: int

    def bbox(self):
        r = self.width / 2.0
        return (self.points[:, 0].min() - r, self.points[:, 1].min() - r,
                self.points[:, 0].max() + r, self.points[:, 1].max() + r)


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float
    cls: int

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)


@dataclass
class ModalityGap:
    """Affine remap (gain, offset) per feature class, aerial only, plus
    additive per-cell texture noise on the aerial rendering."""

    gain_offset: dict[int, tuple[float, float]] = field(default_factory=dict)
    texture_std: float = 0.0

    def is_identity(self) -> bool:
        return self.texture_std == 0.0 and all(
            g == 1.0 and o == 0.0 for g, o in self.gain_offset.values())


@dataclass(frozen=True)
class OcclusionRect:
    """Region where the aerial image shows something else entirely (canopy,
    shadow): scan points inside are dropped and the aerial render is
    painted with `fill`."""

    x0: float
    y0: float
    x1: float
    y1: float
    fill: int = 140

    def contains(self, x, y):
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)


class SimWorld:
    def __init__(self, seed: int, extent: tuple[float, float],
                 stripes: list[Stripe], disks: list[Disk],
                 native_resolution: float = 0.08,
                 origin_lat: float = 42.3, origin_lon: float = -83.7):
        if (extent[0] % TILE_SIDE_M or extent[1] % TILE_SIDE_M):
            raise ValueError("world extent must be a whole number of 64 m tiles")
        self.seed = seed
        self.extent = extent
        self.stripes = stripes
        self.disks = disks
        self.native_resolution = native_resolution
        self.origin_lat = origin_lat
        self.origin_lon = origin_lon
        self._tile_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def frame(self) -> GlobalFrame:
        return GlobalFrame(self.origin_lat, self.origin_lon)

    def _classify(self, xc: np.ndarray, yc: np.ndarray) -> np.ndarray:
        """Feature class at each coordinate (paint order resolves overlaps)."""
        classes = np.full(xc.shape, CLASS_BACKGROUND, dtype=np.uint8)
        x_lo, x_hi = xc.min(), xc.max()
        y_lo, y_hi = yc.min(), yc.max()
        for cls in _PAINT_ORDER:
            for shape in self.stripes + self.disks:
                if shape.cls != cls:
                    continue
                bx0, by0, bx1, by1 = shape.bbox()
                if bx1 < x_lo or bx0 > x_hi or by1 < y_lo or by0 > y_hi:
                    continue
                if isinstance(shape, Disk):
                    dx = xc - shape.center[0]
                    dy = yc - shape.center[1]
                    hit = dx * dx + dy * dy <= shape.radius ** 2
                else:
                    hit = _near_polyline(xc, yc, shape.points, shape.width / 2.0)
                classes[hit] = cls
        return classes

    def cell_values(self, cx: np.ndarray, cy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(class, reflectivity) for native-lattice cells, vectorized."""
        res = self.native_resolution
        xc = (np.asarray(cx, dtype=np.float64) + 0.5) * res
        yc = (np.asarray(cy, dtype=np.float64) + 0.5) * res
        classes = self._classify(xc, yc)
        base = np.zeros(classes.shape)
        amp = np.zeros(classes.shape)
        for cls, b in CLASS_BASE.items():
            sel = classes == cls
            base[sel] = b
            amp[sel] = CLASS_TEXTURE_AMP[cls]
        noise = 2.0 * cell_hash01(cx, cy, self.seed, "texture") - 1.0
        values = np.clip(round_half_away(base + amp * noise), 0, 255).astype(np.uint8)
        return classes, values

    def reflectivity(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Ground-truth reflectivity at world points (native-cell constant).

        Reads through the per-tile cache: repeated sampling in one area
        (e.g. consecutive scan frames) only rasterizes each tile once.
        """
        res = self.native_resolution
        cx = np.floor(np.asarray(x, dtype=np.float64) / res).astype(np.int64)
        cy = np.floor(np.asarray(y, dtype=np.float64) / res).astype(np.int64)
        side = int(round(TILE_SIDE_M / res))
        out = np.zeros(cx.shape, dtype=np.float64)
        ti = cx // side
        tj = cy // side
        code = ti * (1 << 32) + (tj + (1 << 31))
        for c in np.unique(code):
            low = int(c % (1 << 32))
            key = ((int(c) - low) // (1 << 32), low - (1 << 31))
            sel = code == c
            in_extent = (0 <= key[0] < self.extent[0] / TILE_SIDE_M
                         and 0 <= key[1] < self.extent[1] / TILE_SIDE_M)
            if in_extent:
                values = self.native_tile(*key)[1]
                out[sel] = values[cy[sel] - key[1] * side, cx[sel] - key[0] * side]
            else:
                out[sel] = self.cell_values(cx[sel], cy[sel])[1]
        return out

    def native_tile(self, ti: int, tj: int) -> tuple[np.ndarray, np.ndarray]:
        key = (ti, tj)
        if key not in self._tile_cache:
            side = int(round(TILE_SIDE_M / self.native_resolution))
            cx = np.arange(ti * side, (ti + 1) * side, dtype=np.int64)
            cy = np.arange(tj * side, (tj + 1) * side, dtype=np.int64)
            gx, gy = np.meshgrid(cx, cy)
            self._tile_cache[key] = self.cell_values(gx, gy)
        return self._tile_cache[key]


def _near_polyline(px: np.ndarray, py: np.ndarray, pts: np.ndarray,
                   radius: float) -> np.ndarray:
    """True where (px, py) lies within `radius` of the polyline."""
    hit = np.zeros(px.shape, dtype=bool)
    r2 = radius * radius
    for i in range(len(pts) - 1):
        ax, ay = pts[i]
        bx, by = pts[i + 1]
        miss = ~hit
        if not miss.any():
            break
        dx, dy = bx - ax, by - ay
        seg2 = dx * dx + dy * dy
        qx = px[miss] - ax
        qy = py[miss] - ay
        if seg2 == 0.0:
            d2 = qx * qx + qy * qy
        else:
            t = np.clip((qx * dx + qy * dy) / seg2, 0.0, 1.0)
            ex = qx - t * dx
            ey = qy - t * dy
            d2 = ex * ex + ey * ey
        hit[miss] = d2 <= r2
    return hit


def render_prior(world: SimWorld, modality: str, resolution: float,
                 gap: ModalityGap | None = None,
                 occlusions: list[OcclusionRect] | None = None) -> PriorMap:
    """Render the world into a tiled prior map.

    `lidar` renders the ground-truth reflectivity; `aerial` additionally
    applies the modality gap remap, per-cell aerial texture noise, and
    paints occlusion rectangles. Resolutions coarser than native are
    produced by block-mean downsampling of the native render, matching how
    lower-resolution imagery is derived from the full-resolution product.
    """
    if modality not in ("aerial", "lidar"):
        raise ValueError(f"unknown modality {modality!r}")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    native = world.native_resolution
    factor = int(round(resolution / native))
    if factor < 1 or abs(factor * native - resolution) > 1e-9:
        raise ValueError(
            f"resolution {resolution} must be an integer multiple of native {native}")
    gap = gap or ModalityGap()
    occlusions = occlusions or []

    side = int(round(TILE_SIDE_M / native))
    n_i = int(round(world.extent[0] / TILE_SIDE_M))
    n_j = int(round(world.extent[1] / TILE_SIDE_M))
    tiles: dict[tuple[int, int], Tile] = {}
    index = []
    for ti in range(n_i):
        for tj in range(n_j):
            classes, values = world.native_tile(ti, tj)
            if modality == "aerial":
                out = values.astype(np.float64)
                for cls, (gain, offset) in gap.gain_offset.items():
                    sel = classes == cls
                    out[sel] = gain * out[sel] + offset
                if gap.texture_std > 0:
                    rng = stream(world.seed, "aerial-noise", ti * 10_000 + tj)
                    out = out + rng.normal(0.0, gap.texture_std, out.shape)
                if occlusions:
                    cx = np.arange(ti * side, (ti + 1) * side)
                    cy = np.arange(tj * side, (tj + 1) * side)
                    gx, gy = np.meshgrid((cx + 0.5) * native, (cy + 0.5) * native)
                    for rect in occlusions:
                        inside = rect.contains(gx, gy)
                        out[inside] = float(rect.fill)
                values = np.clip(round_half_away(out), 0, 255).astype(np.uint8)
            tiles[(ti, tj)] = Tile(ti, tj, values.copy(),
                                   np.ones_like(values, dtype=bool))
            index.append((ti, tj, f"tile_{ti}_{tj}.gmt"))
    manifest = MapManifest(origin_lat=world.origin_lat, origin_lon=world.origin_lon,
                           cell_resolution=native, tile_side_cells=side,
                           tile_index=index)
    prior = PriorMap(manifest, tiles)
    if factor > 1:
        prior = downsample_map(prior, factor)
    return prior
