"""Brute-force reference for the registration search.

Walks the identical node grid one candidate at a time, extracting each
candidate patch with `query_patch` and scoring it with the plain `nmi`
routine. Exists purely to cross-check the batched `search` implementation:
the two must agree on the argmax node and on every score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose2D
from .localmap import LocalGridMap
from .priormap import MapManifest, PriorMap, Tile, query_patch
from .registration import (InsufficientOverlapError, RegistrationConfig,
                           SearchSpec, nmi, node_offsets)


@dataclass
class OracleResult:
    offset: Pose2D | None
    score: float
    score_field: np.ndarray


def oracle_search(prior: PriorMap, local: LocalGridMap, center: Pose2D,
                  spec: SearchSpec,
                  config: RegistrationConfig | None = None) -> OracleResult:
    """Naive triple loop over (theta, y, x) nodes."""
    config = config or RegistrationConfig()
    xs, ys, thetas = node_offsets(spec)
    img = local.as_match_image()
    score_field = np.full((thetas.size, ys.size, xs.size), np.nan)
    best = None  # (score, |x|, |y|, |theta|, it, iy, ix)
    for it, dth in enumerate(thetas):
        for iy, dy in enumerate(ys):
            for ix, dx in enumerate(xs):
                cand_center = Pose2D(center.x + dx, center.y + dy)
                patch = query_patch(prior, cand_center, local.side_m,
                                    local.side_m, rotation=dth)
                try:
                    score = nmi(patch, img, bins=config.bins,
                                min_overlap=config.min_overlap)
                except InsufficientOverlapError:
                    continue
                score_field[it, iy, ix] = score
                key = (-score, abs(dx), abs(dy), abs(dth))
                if best is None or key < best[0]:
                    best = (key, it, iy, ix)
    if best is None:
        return OracleResult(None, float("nan"), score_field)
    _, it, iy, ix = best
    return OracleResult(Pose2D(float(xs[ix]), float(ys[iy]), float(thetas[it])),
                        float(score_field[it, iy, ix]), score_field)


def random_instance(rng: np.random.Generator, max_nodes=(7, 7, 4)):
    """Build a random (prior, local, center, spec, config) search problem.

    Half the instances plant the local content as a shifted copy of the
    prior so the argmax is strongly peaked; the rest are pure noise.
    """
    res = 0.25
    side_cells = 64
    manifest = MapManifest(origin_lat=42.3, origin_lon=-83.7,
                           cell_resolution=res, tile_side_cells=side_cells,
                           tile_index=[])
    tiles = {}
    for ti in (-1, 0):
        for tj in (-1, 0):
            values = rng.integers(0, 256, (side_cells, side_cells), dtype=np.uint8)
            valid = rng.random((side_cells, side_cells)) < 0.97
            tiles[(ti, tj)] = Tile(ti, tj, values, valid)
    prior = PriorMap(manifest, tiles)

    side_m = float(rng.integers(24, 40)) * res
    center = Pose2D(float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)))
    local = LocalGridMap(center, res, side_m)

    if rng.random() < 0.5:
        # Planted: copy prior content from a shifted window into the local map.
        shift = rng.integers(-3, 4, 2)
        img = query_patch(prior,
                          Pose2D(local.center.x + shift[0] * res,
                                 local.center.y + shift[1] * res),
                          side_m, side_m)
        counts = (rng.random(img.values.shape) < 0.9) & img.valid
        local.counts = counts.astype(np.int64)
        local.sums = img.values.astype(np.float64) * local.counts
    else:
        counts = rng.random((local.n, local.n)) < 0.8
        local.counts = counts.astype(np.int64)
        local.sums = rng.integers(0, 256, (local.n, local.n)).astype(np.float64)
        local.sums *= local.counts

    kx = int(rng.integers(1, max_nodes[0] + 1))
    ky = int(rng.integers(1, max_nodes[1] + 1))
    kt = int(rng.integers(1, max_nodes[2] + 1))
    x_step = res if rng.random() < 0.7 else float(rng.uniform(0.3, 1.4)) * res
    theta_step = float(np.radians(rng.uniform(0.3, 1.0)))
    spec = SearchSpec(x_range=kx * x_step, y_range=ky * x_step,
                      theta_range=kt * theta_step,
                      x_step=x_step, y_step=x_step, theta_step=theta_step)
    config = RegistrationConfig(min_overlap=int(rng.integers(20, 120)))
    return prior, local, center, spec, config
