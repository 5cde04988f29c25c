"""Tiled grayscale prior map: storage, binary tile format, queries.

The prior is a set of square tiles on the global lattice. Tile (i, j)
covers [i*T, (i+1)*T) x [j*T, (j+1)*T) meters, T = tile_side_cells *
cell_resolution (64 m at the nominal 8 cm resolution). Cells with no
imagery are tracked in a validity bitmask; value 0 stays a legal
observation.

Tile file format (little-endian): magic "GMT1", u32 width, u32 height,
f64 cell_resolution_m, i32 tile_i, i32 tile_j, width*height reflectivity
bytes row-major with row 0 at the north edge, then ceil(width*height/8)
bytes of validity bitmask in the same cell order, LSB-first within each
byte, bit set = valid.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GlobalFrame, Pose2D
from .grid import Patch, round_half_away, world_to_cell

TILE_MAGIC = b"GMT1"
_TILE_HEADER = struct.Struct("<4sIIdii")


class MapError(Exception):
    """Base class for prior-map load/format problems."""


class ManifestError(MapError):
    """Manifest file is malformed or violates its invariants."""


class TileFormatError(MapError):
    """Tile file has a bad magic, truncated payload, or header that
    contradicts the manifest."""


class TileSizeMismatchError(MapError):
    """Tile dimensions disagree with the manifest's tile_side_cells."""


@dataclass
class MapManifest:
    origin_lat: float
    origin_lon: float
    cell_resolution: float
    tile_side_cells: int
    tile_index: list[tuple[int, int, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.cell_resolution <= 0:
            raise ManifestError(f"cell_resolution must be > 0, got {self.cell_resolution}")
        if self.tile_side_cells <= 0:
            raise ManifestError(f"tile_side_cells must be > 0, got {self.tile_side_cells}")
        seen = set()
        for ti, tj, _name in self.tile_index:
            if (ti, tj) in seen:
                raise ManifestError(f"duplicate tile index ({ti}, {tj})")
            seen.add((ti, tj))

    @property
    def tile_side_m(self) -> float:
        return self.tile_side_cells * self.cell_resolution


@dataclass
class Tile:
    """One square block of the prior. Arrays are [iy, ix] with iy
    increasing northward (the file stores rows north-first; IO flips)."""

    tile_i: int
    tile_j: int
    values: np.ndarray  # uint8 (side, side)
    valid: np.ndarray   # bool (side, side)


def write_tile(path: Path | str, tile: Tile, cell_resolution: float) -> None:
    h, w = tile.values.shape
    header = _TILE_HEADER.pack(TILE_MAGIC, w, h, cell_resolution, tile.tile_i, tile.tile_j)
    cells = np.flipud(np.ascontiguousarray(tile.values, dtype=np.uint8))
    mask = np.packbits(np.flipud(tile.valid).reshape(-1), bitorder="little")
    with open(path, "wb") as f:
        f.write(header)
        f.write(cells.tobytes())
        f.write(mask.tobytes())


def read_tile(path: Path | str) -> tuple[Tile, float]:
    """Read a tile file, returning the tile and its stored resolution."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _TILE_HEADER.size:
        raise TileFormatError(f"{path}: truncated header")
    magic, w, h, res, ti, tj = _TILE_HEADER.unpack_from(raw)
    if magic != TILE_MAGIC:
        raise TileFormatError(f"{path}: bad magic {magic!r}")
    if res <= 0 or w == 0 or h == 0:
        raise TileFormatError(f"{path}: invalid header (w={w}, h={h}, res={res})")
    n = w * h
    mask_bytes = (n + 7) // 8
    expect = _TILE_HEADER.size + n + mask_bytes
    if len(raw) < expect:
        raise TileFormatError(f"{path}: expected {expect} bytes, file has {len(raw)}")
    cells = np.frombuffer(raw, dtype=np.uint8, count=n, offset=_TILE_HEADER.size)
    bits = np.frombuffer(raw, dtype=np.uint8, count=mask_bytes,
                         offset=_TILE_HEADER.size + n)
    valid = np.unpackbits(bits, count=n, bitorder="little").astype(bool)
    tile = Tile(ti, tj,
                np.flipud(cells.reshape(h, w)).copy(),
                np.flipud(valid.reshape(h, w)).copy())
    return tile, res


_MANIFEST_KEYS = ("origin_lat", "origin_lon", "cell_resolution", "tile_side_cells")


def read_manifest(path: Path | str) -> MapManifest:
    headers: dict[str, str] = {}
    tiles: list[tuple[int, int, str]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("tile "):
                parts = line.split()
                if len(parts) != 4:
                    raise ManifestError(f"{path}:{lineno}: bad tile line {line!r}")
                try:
                    tiles.append((int(parts[1]), int(parts[2]), parts[3]))
                except ValueError as e:
                    raise ManifestError(f"{path}:{lineno}: {e}") from e
            elif "=" in line:
                key, _, value = line.partition("=")
                headers[key.strip()] = value.strip()
            else:
                raise ManifestError(f"{path}:{lineno}: unparseable line {line!r}")
    missing = [k for k in _MANIFEST_KEYS if k not in headers]
    if missing:
        raise ManifestError(f"{path}: missing header keys {missing}")
    try:
        return MapManifest(
            origin_lat=float(headers["origin_lat"]),
            origin_lon=float(headers["origin_lon"]),
            cell_resolution=float(headers["cell_resolution"]),
            tile_side_cells=int(headers["tile_side_cells"]),
            tile_index=tiles,
        )
    except ValueError as e:
        raise ManifestError(f"{path}: {e}") from e


def write_manifest(path: Path | str, manifest: MapManifest) -> None:
    lines = [
        f"origin_lat = {manifest.origin_lat!r}",
        f"origin_lon = {manifest.origin_lon!r}",
        f"cell_resolution = {manifest.cell_resolution!r}",
        f"tile_side_cells = {manifest.tile_side_cells}",
    ]
    for ti, tj, name in manifest.tile_index:
        lines.append(f"tile {ti} {tj} {name}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class PriorMap:
    """Immutable-after-load tiled prior; safe for concurrent readers."""

    def __init__(self, manifest: MapManifest, tiles: dict[tuple[int, int], Tile]):
        self.manifest = manifest
        self.tiles = tiles

    @property
    def cell_resolution(self) -> float:
        return self.manifest.cell_resolution

    @property
    def tile_side_cells(self) -> int:
        return self.manifest.tile_side_cells

    def frame(self) -> GlobalFrame:
        return GlobalFrame(self.manifest.origin_lat, self.manifest.origin_lon)

    def lookup_cells(self, cx: np.ndarray, cy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reflectivity and validity for global lattice cells (vectorized).

        Cells outside any loaded tile come back invalid with value 0.
        """
        cx = np.asarray(cx, dtype=np.int64)
        cy = np.asarray(cy, dtype=np.int64)
        values = np.zeros(cx.shape, dtype=np.uint8)
        valid = np.zeros(cx.shape, dtype=bool)
        if not self.tiles:
            return values, valid
        side = self.tile_side_cells
        ti = cx // side
        tj = cy // side
        # Pack (ti, tj) into one int64 so np.unique sees scalar keys; the
        # bias keeps the low word non-negative for negative tile indices.
        bias = 1 << 31
        code = ti * (1 << 32) + (tj + bias)
        for c in np.unique(code):
            low = int(c % (1 << 32))
            key = ((int(c) - low) // (1 << 32), low - bias)
            tile = self.tiles.get(key)
            if tile is None:
                continue
            sel = code == c
            ix = cx[sel] - key[0] * side
            iy = cy[sel] - key[1] * side
            values[sel] = tile.values[iy, ix]
            valid[sel] = tile.valid[iy, ix]
        return values, valid

    def region(self, cx0: int, cy0: int, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
        """Contiguous (ny, nx) raster starting at lattice cell (cx0, cy0)."""
        cx = np.arange(cx0, cx0 + nx, dtype=np.int64)
        cy = np.arange(cy0, cy0 + ny, dtype=np.int64)
        gx, gy = np.meshgrid(cx, cy)
        return self.lookup_cells(gx, gy)


def load_map(manifest_path: Path | str) -> PriorMap:
    """Load a prior map eagerly; every referenced tile must exist and
    agree with the manifest."""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    tiles: dict[tuple[int, int], Tile] = {}
    for ti, tj, name in manifest.tile_index:
        tile_path = manifest_path.parent / name
        if not tile_path.exists():
            raise FileNotFoundError(f"tile file {tile_path} referenced by manifest is missing")
        tile, res = read_tile(tile_path)
        if tile.values.shape != (manifest.tile_side_cells, manifest.tile_side_cells):
            raise TileSizeMismatchError(
                f"{tile_path}: tile is {tile.values.shape[1]}x{tile.values.shape[0]} cells,"
                f" manifest declares {manifest.tile_side_cells}"
            )
        if not math.isclose(res, manifest.cell_resolution, rel_tol=1e-12):
            raise TileFormatError(
                f"{tile_path}: tile resolution {res} differs from manifest"
                f" {manifest.cell_resolution}"
            )
        if (tile.tile_i, tile.tile_j) != (ti, tj):
            raise TileFormatError(
                f"{tile_path}: tile header says ({tile.tile_i}, {tile.tile_j}),"
                f" manifest says ({ti}, {tj})"
            )
        tiles[(ti, tj)] = tile
    return PriorMap(manifest, tiles)


def save_map(prior: PriorMap, out_dir: Path | str, manifest_name: str = "map.manifest") -> Path:
    """Write all tiles plus a manifest into `out_dir`; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for (ti, tj), tile in sorted(prior.tiles.items()):
        name = f"tile_{ti}_{tj}.gmt"
        write_tile(out_dir / name, tile, prior.cell_resolution)
        index.append((ti, tj, name))
    manifest = MapManifest(
        origin_lat=prior.manifest.origin_lat,
        origin_lon=prior.manifest.origin_lon,
        cell_resolution=prior.cell_resolution,
        tile_side_cells=prior.tile_side_cells,
        tile_index=index,
    )
    path = out_dir / manifest_name
    write_manifest(path, manifest)
    return path


def query_patch(prior: PriorMap, center: Pose2D, width_m: float, height_m: float,
                rotation: float = 0.0) -> Patch:
    """Sample a rotated rectangular window of the prior at its own
    resolution, nearest-neighbor. Out-of-coverage cells come back invalid.
    """
    if width_m <= 0 or height_m <= 0:
        raise ValueError("patch extent must be positive")
    res = prior.cell_resolution
    nx = max(1, int(round(width_m / res)))
    ny = max(1, int(round(height_m / res)))
    u = (np.arange(nx) - (nx - 1) / 2.0) * res
    v = (np.arange(ny) - (ny - 1) / 2.0) * res
    uu, vv = np.meshgrid(u, v)
    c, s = math.cos(rotation), math.sin(rotation)
    # Rotation term first, center added to it: keeps the float ops identical
    # to the batched registration path so both see the same lattice cells.
    px = center.x + (c * uu - s * vv)
    py = center.y + (s * uu + c * vv)
    values, valid = prior.lookup_cells(world_to_cell(px, res), world_to_cell(py, res))
    return Patch(values, valid)


def downsample_map(prior: PriorMap, factor: int) -> PriorMap:
    """Block-mean downsample every tile by an integer factor.

    Invalid input cells are excluded from each block mean; an all-invalid
    block stays invalid. Means are rounded half-away-from-zero.
    """
    if factor < 2 or prior.tile_side_cells % factor != 0:
        raise ValueError(
            f"factor {factor} does not divide tile side {prior.tile_side_cells}"
        )
    side = prior.tile_side_cells // factor
    tiles: dict[tuple[int, int], Tile] = {}
    for key, tile in prior.tiles.items():
        v = tile.values.reshape(side, factor, side, factor).astype(np.float64)
        m = tile.valid.reshape(side, factor, side, factor)
        counts = m.sum(axis=(1, 3))
        sums = (v * m).sum(axis=(1, 3))
        valid = counts > 0
        means = np.zeros_like(sums)
        np.divide(sums, counts, out=means, where=valid)
        values = round_half_away(means).astype(np.uint8)
        values[~valid] = 0
        tiles[key] = Tile(tile.tile_i, tile.tile_j, values, valid)
    manifest = MapManifest(
        origin_lat=prior.manifest.origin_lat,
        origin_lon=prior.manifest.origin_lon,
        cell_resolution=prior.cell_resolution * factor,
        tile_side_cells=side,
        tile_index=list(prior.manifest.tile_index),
    )
    return PriorMap(manifest, tiles)
