"""Extended Kalman filter over planar pose (x, y, theta).

Prediction uses a constant-velocity unicycle model linearized at the
prior mean; updates fuse full-pose fixes from registration through the
Joseph-form covariance update, which preserves symmetry and positive
semi-definiteness. Innovations are chi-square gated so a wild fix cannot
yank the state.

The filter is a single-owner state machine: one logical thread mutates
the estimate. Registration may run on a snapshot; callers must drop
measurements older than the last applied update (see Pipeline).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GlobalFrame, Pose2D, wrap_angle
from .registration import SearchSpec


@dataclass
class StateEstimate:
    mu: np.ndarray          # (3,) x, y, theta (wrapped)
    sigma: np.ndarray       # (3, 3)
    timestamp: float = 0.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).copy()
        self.sigma = np.asarray(self.sigma, dtype=np.float64).copy()
        if self.mu.shape != (3,) or self.sigma.shape != (3, 3):
            raise ValueError("state is (mu[3], sigma[3x3])")
        self.mu[2] = wrap_angle(self.mu[2])

    @property
    def pose(self) -> Pose2D:
        return Pose2D(float(self.mu[0]), float(self.mu[1]), float(self.mu[2]))


@dataclass(frozen=True)
class OdometryMeasurement:
    v: float       # body-forward speed, m/s
    omega: float   # yaw rate, rad/s
    timestamp: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.omega)):
            raise ValueError("odometry must be finite")


def _diag3(values) -> np.ndarray:
    return np.diag(np.asarray(values, dtype=np.float64))


@dataclass
class FilterConfig:
    # Process noise per second of driving; Q_k = q_base * dt.
    q_base: np.ndarray = field(default_factory=lambda: _diag3([0.01, 0.01, 1e-4]))
    # Chi-square gate on the innovation, 3 DOF (11.34 ~ 99%).
    gating_threshold: float = 11.34
    init_sigma: np.ndarray = field(
        default_factory=lambda: _diag3([2.5 ** 2, 2.5 ** 2, math.radians(3.0) ** 2]))
    min_updates_settled: int = 3

    def __post_init__(self):
        self.q_base = np.asarray(self.q_base, dtype=np.float64)
        self.init_sigma = np.asarray(self.init_sigma, dtype=np.float64)


@dataclass
class WindowConfig:
    """How the posterior is turned into a registration search window."""

    cell_resolution: float
    theta_step: float = math.radians(0.5)
    step_cells: int = 1
    max_half_xy: float = 1.0                  # meters
    max_half_theta: float = math.radians(2.0)


def predict(state: StateEstimate, odo: OdometryMeasurement, dt: float,
            cfg: FilterConfig) -> StateEstimate:
    """Unicycle propagation with covariance push-through.

    x += v*dt*cos(theta), y += v*dt*sin(theta), theta += omega*dt;
    sigma = F sigma F^T + q_base*dt with F the Jacobian at the prior mean.
    """
    if dt < 0:
        raise ValueError(f"negative dt {dt}")
    x, y, th = state.mu
    mu = np.array([x + odo.v * dt * math.cos(th),
                   y + odo.v * dt * math.sin(th),
                   wrap_angle(th + odo.omega * dt)])
    F = np.array([[1.0, 0.0, -odo.v * dt * math.sin(th)],
                  [0.0, 1.0, odo.v * dt * math.cos(th)],
                  [0.0, 0.0, 1.0]])
    sigma = F @ state.sigma @ F.T + cfg.q_base * dt
    return StateEstimate(mu, sigma, state.timestamp + dt)


def motion_jacobian(state: StateEstimate, odo: OdometryMeasurement, dt: float) -> np.ndarray:
    """Jacobian of the propagation at the state's mean (exposed for tests)."""
    th = state.mu[2]
    return np.array([[1.0, 0.0, -odo.v * dt * math.sin(th)],
                     [0.0, 1.0, odo.v * dt * math.cos(th)],
                     [0.0, 0.0, 1.0]])


@dataclass
class UpdateResult:
    state: StateEstimate
    accepted: bool
    nis: float                 # normalized innovation squared
    innovation: np.ndarray     # (3,), theta component wrapped


def update(state: StateEstimate, z: np.ndarray, r: np.ndarray,
           cfg: FilterConfig, timestamp: float | None = None) -> UpdateResult:
    """Fuse a full-pose fix z with covariance r (measurement model h = I).

    Gated-out measurements (and singular innovation covariances) leave the
    state untouched; the caller sees `accepted` and can count them.
    """
    z = np.asarray(z, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    nu = z - state.mu
    nu[2] = wrap_angle(nu[2])
    s = state.sigma + r
    try:
        s_inv_nu = np.linalg.solve(s, nu)
        k = state.sigma @ np.linalg.inv(s)
    except np.linalg.LinAlgError:
        return UpdateResult(state, False, float("inf"), nu)
    nis = float(nu @ s_inv_nu)
    if not nis < cfg.gating_threshold:
        return UpdateResult(state, False, nis, nu)
    mu = state.mu + k @ nu
    a = np.eye(3) - k
    sigma = a @ state.sigma @ a.T + k @ r @ k.T  # Joseph form
    sigma = 0.5 * (sigma + sigma.T)
    t = state.timestamp if timestamp is None else timestamp
    return UpdateResult(StateEstimate(mu, sigma, t), True, nis, nu)


def search_window(state: StateEstimate, wcfg: WindowConfig) -> SearchSpec:
    """3-sigma search bounds around the posterior, clamped per axis to
    [1 cell, max_half_xy] and [theta_step, max_half_theta]."""
    sx, sy, st = np.sqrt(np.diag(state.sigma))
    cell = wcfg.cell_resolution
    half_x = min(max(3.0 * sx, cell), wcfg.max_half_xy)
    half_y = min(max(3.0 * sy, cell), wcfg.max_half_xy)
    half_t = min(max(3.0 * st, wcfg.theta_step), wcfg.max_half_theta)
    step = wcfg.step_cells * cell
    return SearchSpec(x_range=half_x, y_range=half_y, theta_range=half_t,
                      x_step=step, y_step=step, theta_step=wcfg.theta_step)


def initialize(gps_fix: tuple[float, float, float], frame: GlobalFrame,
               cfg: FilterConfig, timestamp: float = 0.0) -> StateEstimate:
    """Seed the filter from a geodetic fix (lat, lon, heading)."""
    lat, lon, heading = gps_fix
    x, y = frame.geodetic_to_global(lat, lon)
    return StateEstimate(np.array([x, y, wrap_angle(heading)]),
                         cfg.init_sigma.copy(), timestamp)
