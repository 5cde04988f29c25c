"""Planar pose type, angle wrapping, and the linearized global frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

# WGS84 equatorial radius; good enough for the <=10 km extents this frame
# is specified for.
EARTH_RADIUS_M = 6378137.0


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in meters, heading in radians."""

    x: float
    y: float
    theta: float = 0.0

    def wrapped(self) -> "Pose2D":
        return Pose2D(self.x, self.y, wrap_angle(self.theta))


def pose_compose(center: Pose2D, offset: Pose2D) -> Pose2D:
    """Apply a global-frame offset (dx, dy, dtheta) to a pose.

    Offsets are expressed along the global axes (the registration search
    grid is global-axis-aligned), so composition is componentwise.
    """
    return Pose2D(center.x + offset.x, center.y + offset.y,
                  wrap_angle(center.theta + offset.theta))


def body_to_global(pose: Pose2D, xb, yb):
    """Transform body-frame coordinates (arrays or scalars) into the
    global frame using `pose`."""
    c = math.cos(pose.theta)
    s = math.sin(pose.theta)
    return pose.x + c * xb - s * yb, pose.y + s * xb + c * yb


class GlobalFrame:
    """Equirectangular linearization of latitude/longitude about an origin.

    x points east, y points north, both in meters. The scale factors are
    computed once at the origin, which keeps the conversion a pure scaling
    and makes round trips exact to float precision.
    """

    def __init__(self, origin_lat: float, origin_lon: float):
        if not (-90.0 <= origin_lat <= 90.0 and -180.0 <= origin_lon <= 180.0):
            raise ValueError(f"invalid origin ({origin_lat}, {origin_lon})")
        self.origin_lat = origin_lat
        self.origin_lon = origin_lon
        self.meters_per_degree_lat = math.pi * EARTH_RADIUS_M / 180.0
        self.meters_per_degree_lon = (
            math.pi * EARTH_RADIUS_M / 180.0 * math.cos(math.radians(origin_lat))
        )

    def geodetic_to_global(self, lat: float, lon: float) -> tuple[float, float]:
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ValueError(f"invalid geodetic coordinate ({lat}, {lon})")
        x = (lon - self.origin_lon) * self.meters_per_degree_lon
        y = (lat - self.origin_lat) * self.meters_per_degree_lat
        return x, y

    def global_to_geodetic(self, x: float, y: float) -> tuple[float, float]:
        lat = self.origin_lat + y / self.meters_per_degree_lat
        lon = self.origin_lon + x / self.meters_per_degree_lon
        return lat, lon
