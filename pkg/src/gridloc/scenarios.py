"""Built-in simulation scenarios.

`desk-mcity` is the default: a ~500 m closed loop with two long
straights, two 90-degree corner arcs, and a roundabout serving as the
turn-around, with lane markings, crosswalks, a center island whose aerial
appearance collides with the background, and one canopy-style occlusion
over the road. `straight` is a short single-road scenario for quick
format/CLI checks.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Pose2D
from .simulate import SensorNoiseSpec, TrajectorySpec
from .simworld import (CLASS_BACKGROUND, CLASS_CROSSWALK, CLASS_ISLAND,
                       CLASS_MARKING, CLASS_ROAD, Disk, ModalityGap,
                       OcclusionRect, SimWorld, Stripe)

ROAD_WIDTH = 7.0
MARKING_WIDTH = 0.15
EDGE_WIDTH = 0.12


def _arc(center: tuple[float, float], radius: float, a0_deg: float,
         a1_deg: float, step_deg: float = 2.0) -> list[tuple[float, float]]:
    n = max(2, int(abs(a1_deg - a0_deg) / step_deg) + 1)
    angles = np.radians(np.linspace(a0_deg, a1_deg, n))
    return [(center[0] + radius * math.cos(a), center[1] + radius * math.sin(a))
            for a in angles]


def _dedupe(points: list[tuple[float, float]]) -> np.ndarray:
    out = [points[0]]
    for p in points[1:]:
        if math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > 1e-9:
            out.append(p)
    return np.array(out)


def _dashes(x0: float, x1: float, y: float, on: float = 3.0,
            off: float = 3.0) -> list[Stripe]:
    stripes = []
    x = x0
    while x < x1:
        end = min(x + on, x1)
        stripes.append(Stripe(np.array([[x, y], [end, y]]), MARKING_WIDTH,
                              CLASS_MARKING))
        x += on + off
    return stripes


def _crosswalk(x: float, y: float, along_x: bool = True,
               bars: int = 6) -> list[Stripe]:
    stripes = []
    for k in range(bars):
        if along_x:
            bx = x + 0.9 * k
            pts = np.array([[bx, y - 2.8], [bx, y + 2.8]])
        else:
            by = y + 0.9 * k
            pts = np.array([[x - 2.8, by], [x + 2.8, by]])
        stripes.append(Stripe(pts, 0.5, CLASS_CROSSWALK))
    return stripes


def desk_mcity_gap() -> ModalityGap:
    """Default aerial-vs-LIDAR appearance model: markings stay bright in
    both modalities, pavement and grass shift, and the roundabout island
    lands on top of the background's aerial range."""
    return ModalityGap(
        gain_offset={
            CLASS_BACKGROUND: (0.8, 75.0),
            CLASS_ROAD: (1.0, 55.0),
            CLASS_MARKING: (1.0, -10.0),
            CLASS_CROSSWALK: (1.0, -10.0),
            CLASS_ISLAND: (2.0, -60.0),
        },
        texture_std=6.0,
    )


def build_desk_mcity(seed: int) -> tuple[SimWorld, TrajectorySpec, SensorNoiseSpec]:
    path_pts: list[tuple[float, float]] = [(72.0, 48.0), (232.0, 48.0)]
    path_pts += _arc((232.0, 60.0), 12.0, -90.0, 0.0)
    path_pts += [(244.0, 96.0)]
    path_pts += _arc((232.0, 96.0), 12.0, 0.0, 90.0)
    path_pts += [(72.0, 108.0)]
    path_pts += _arc((72.0, 78.0), 30.0, 90.0, 270.0)
    centerline = _dedupe(path_pts + [(72.0, 48.0)])

    stripes = [Stripe(centerline, ROAD_WIDTH, CLASS_ROAD)]
    # Lane markings: dashed centerlines plus solid edge lines on the straights.
    stripes += _dashes(78.0, 226.0, 48.0)
    stripes += _dashes(78.0, 226.0, 108.0)
    for y in (44.8, 51.2):
        stripes.append(Stripe(np.array([[72.0, y], [232.0, y]]), EDGE_WIDTH,
                              CLASS_MARKING))
    for y in (104.8, 111.2):
        stripes.append(Stripe(np.array([[72.0, y], [232.0, y]]), EDGE_WIDTH,
                              CLASS_MARKING))
    stripes += _crosswalk(120.0, 48.0)
    stripes += _crosswalk(180.0, 108.0)
    disks = [Disk((72.0, 78.0), 26.0, CLASS_ISLAND)]

    world = SimWorld(seed=seed, extent=(320.0, 192.0), stripes=stripes,
                     disks=disks)
    trajectory = TrajectorySpec(
        waypoints=[Pose2D(x, y) for x, y in centerline], speed=10.0)
    noise = SensorNoiseSpec(
        modality_gap=desk_mcity_gap(),
        occlusion_patches=[OcclusionRect(140.0, 44.0, 152.0, 52.0, fill=140)],
    )
    return world, trajectory, noise


def build_straight(seed: int) -> tuple[SimWorld, TrajectorySpec, SensorNoiseSpec]:
    road = np.array([[8.0, 32.0], [120.0, 32.0]])
    stripes = [Stripe(road, ROAD_WIDTH, CLASS_ROAD)]
    stripes += _dashes(12.0, 116.0, 32.0)
    for y in (28.8, 35.2):
        stripes.append(Stripe(np.array([[8.0, y], [120.0, y]]), EDGE_WIDTH,
                              CLASS_MARKING))
    stripes += _crosswalk(60.0, 32.0)
    world = SimWorld(seed=seed, extent=(128.0, 64.0), stripes=stripes, disks=[])
    trajectory = TrajectorySpec(
        waypoints=[Pose2D(16.0, 32.0), Pose2D(112.0, 32.0)], speed=10.0)
    noise = SensorNoiseSpec(modality_gap=desk_mcity_gap())
    return world, trajectory, noise


SCENARIOS = {
    "desk-mcity": build_desk_mcity,
    "straight": build_straight,
}


def get_scenario(name: str, seed: int):
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; options: {sorted(SCENARIOS)}")
    return SCENARIOS[name](seed)
