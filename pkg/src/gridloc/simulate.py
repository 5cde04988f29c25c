"""Deterministic sensor-stream generation and the RunLog file format.

A run samples ground-truth poses along a waypoint path at the odometry
rate, derives noisy body velocities from them, and emits reflectivity
scan frames: points drawn in a disk around the vehicle, expressed in the
vehicle body frame, carrying the ground-truth reflectivity at the point's
true world position plus sensor noise. Scan assembly (motion
compensation) is assumed done, so a frame is rigid in the body frame; the
consumer decides where the frame sits in the world, which is exactly the
error the localization pipeline has to estimate.

RunLog file: line-delimited text, '%.9g' floats:
    GPS lat lon heading
    TRUTH t x y theta
    ODO t v omega
    SCAN t n          (followed by n lines: x y refl, body frame)
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .geometry import Pose2D, body_to_global, wrap_angle
from .rng import stream
from .simworld import ModalityGap, OcclusionRect, SimWorld


@dataclass
class TrajectorySpec:
    waypoints: list[Pose2D]
    speed: float = 10.0        # m/s, constant profile
    sample_rate: float = 50.0  # Hz, odometry/truth sampling

    def __post_init__(self):
        if self.speed <= 0 or self.sample_rate <= 0:
            raise ValueError("speed and sample_rate must be positive")
        if len(self.waypoints) < 2:
            raise ValueError("need at least two waypoints")


@dataclass
class ScanGeometry:
    radius: float = 25.0    # m, sampling disk around the vehicle
    density: float = 50.0   # points per m^2 per frame
    rate: float = 2.0       # frames per second


@dataclass
class SensorNoiseSpec:
    odo_v_std: float = 0.05
    odo_omega_std: float = 0.004
    odo_bias_v: float = 0.05
    reflectivity_std: float = 4.0
    dropout_rate: float = 0.05
    modality_gap: ModalityGap = field(default_factory=ModalityGap)
    gps_offset: tuple[float, float] = (0.7, -0.5)
    occlusion_patches: list[OcclusionRect] = field(default_factory=list)

    def __post_init__(self):
        if min(self.odo_v_std, self.odo_omega_std, self.reflectivity_std) < 0:
            raise ValueError("noise stds must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


ZERO_NOISE = SensorNoiseSpec(odo_v_std=0.0, odo_omega_std=0.0, odo_bias_v=0.0,
                             reflectivity_std=0.0, dropout_rate=0.0,
                             gps_offset=(0.0, 0.0))


@dataclass
class RunLog:
    truth: np.ndarray                       # (n, 4): t, x, y, theta
    odo: np.ndarray                         # (n, 3): t, v, omega
    scans: list[tuple[float, np.ndarray]]   # (t, (m, 3) body x, y, refl)
    gps: tuple[float, float, float]         # lat, lon, heading


def _sample_path(traj: TrajectorySpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ground-truth (t, x, y, theta) samples plus true (v, omega).

    Position interpolates the waypoint polyline at constant speed; heading
    follows the current segment, so zero-noise odometry integrated with
    the filter's unicycle model reproduces the truth on straight segments.
    """
    pts = np.array([[w.x, w.y] for w in traj.waypoints])
    deltas = np.diff(pts, axis=0)
    seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
    if (seg_len == 0).any():
        raise ValueError("consecutive waypoints must be distinct")
    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]

    dt = 1.0 / traj.sample_rate
    n = int(math.floor(total / traj.speed / dt)) + 1
    t = np.arange(n) * dt
    s = np.minimum(t * traj.speed, total)
    seg = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_len) - 1)
    frac = (s - cum[seg]) / seg_len[seg]
    xy = pts[seg] + frac[:, None] * deltas[seg]
    th = headings[seg]

    truth = np.column_stack([t, xy, th])
    v = np.full(n, traj.speed)
    omega = np.zeros(n)
    dth = np.array([wrap_angle(a) for a in np.diff(th)])
    omega[:-1] = dth / dt
    return truth, v, omega


def simulate_run(world: SimWorld, trajectory: TrajectorySpec,
                 noise: SensorNoiseSpec, seed: int,
                 scan: ScanGeometry | None = None) -> RunLog:
    """Generate one deterministic run. All randomness comes from streams
    keyed by (seed, stream name, step)."""
    scan = scan or ScanGeometry()
    truth, v_true, omega_true = _sample_path(trajectory)
    n = truth.shape[0]
    dt = 1.0 / trajectory.sample_rate

    rng_v = stream(seed, "odo-v")
    rng_w = stream(seed, "odo-omega")
    v = v_true + noise.odo_bias_v + noise.odo_v_std * rng_v.standard_normal(n)
    omega = omega_true + noise.odo_omega_std * rng_w.standard_normal(n)
    odo = np.column_stack([truth[:, 0], v, omega])

    n_pts = int(round(scan.density * math.pi * scan.radius ** 2))
    frame_stride = max(1, int(round(trajectory.sample_rate / scan.rate)))
    scans: list[tuple[float, np.ndarray]] = []
    for fi, k in enumerate(range(0, n, frame_stride)):
        rng = stream(seed, "scan", fi)
        radii = scan.radius * np.sqrt(rng.random(n_pts))
        ang = 2.0 * math.pi * rng.random(n_pts)
        xb = radii * np.cos(ang)
        yb = radii * np.sin(ang)
        keep = rng.random(n_pts) >= noise.dropout_rate
        refl_noise = rng.standard_normal(n_pts)

        pose = Pose2D(truth[k, 1], truth[k, 2], truth[k, 3])
        px, py = body_to_global(pose, xb, yb)
        refl = world.reflectivity(px, py)
        if noise.reflectivity_std > 0:
            refl = refl + noise.reflectivity_std * refl_noise
        refl = np.clip(refl, 0.0, 255.0)
        for rect in noise.occlusion_patches:
            keep &= ~rect.contains(px, py)
        scans.append((float(truth[k, 0]),
                      np.column_stack([xb[keep], yb[keep], refl[keep]])))

    frame = world.frame()
    lat, lon = frame.global_to_geodetic(truth[0, 1] + noise.gps_offset[0],
                                        truth[0, 2] + noise.gps_offset[1])
    gps = (lat, lon, float(truth[0, 3]))
    return RunLog(truth=truth, odo=odo, scans=scans, gps=gps)


def _fmt(values) -> list[str]:
    return [f"{val:.9g}" for val in values]


def write_runlog(path: Path | str, log: RunLog) -> None:
    scans = {t: pts for t, pts in log.scans}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("GPS " + " ".join(_fmt(log.gps)) + "\n")
        si = 0
        scan_times = [t for t, _ in log.scans]
        for k in range(log.truth.shape[0]):
            f.write("TRUTH " + " ".join(_fmt(log.truth[k])) + "\n")
            f.write("ODO " + " ".join(_fmt(log.odo[k])) + "\n")
            while si < len(scan_times) and scan_times[si] <= log.truth[k, 0]:
                t = scan_times[si]
                pts = scans[t]
                f.write(f"SCAN {t:.9g} {pts.shape[0]}\n")
                df = pd.DataFrame(pts)
                df.to_csv(f, sep=" ", header=False, index=False,
                          float_format="%.9g", lineterminator="\n")
                si += 1


def read_runlog(path: Path | str) -> RunLog:
    truth_rows: list[list[float]] = []
    odo_rows: list[list[float]] = []
    scans: list[tuple[float, np.ndarray]] = []
    gps = None
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line:
            i += 1
            continue
        tag, _, rest = line.partition(" ")
        if tag == "TRUTH":
            truth_rows.append([float(x) for x in rest.split()])
        elif tag == "ODO":
            odo_rows.append([float(x) for x in rest.split()])
        elif tag == "GPS":
            vals = rest.split()
            gps = (float(vals[0]), float(vals[1]), float(vals[2]))
        elif tag == "SCAN":
            t_str, n_str = rest.split()
            count = int(n_str)
            block = "\n".join(lines[i + 1:i + 1 + count])
            if count:
                pts = pd.read_csv(io.StringIO(block), sep=" ",
                                  header=None, dtype=np.float64).to_numpy()
            else:
                pts = np.zeros((0, 3))
            scans.append((float(t_str), pts))
            i += count
        else:
            raise ValueError(f"{path}: unknown record tag {tag!r}")
        i += 1
    if gps is None:
        raise ValueError(f"{path}: missing GPS record")
    return RunLog(truth=np.array(truth_rows), odo=np.array(odo_rows),
                  scans=scans, gps=gps)
