"""End-to-end experiment runner, error metrics, and report files.

Wires simulator output through the local map, registration, and EKF:
odometry drives prediction at the sample rate; scan frames are placed
into the rolling local map using the current estimate; at the
registration cadence a 3-sigma search window is built from the posterior,
the NMI search runs against the prior, and the resulting pose fix (with
its fitted covariance) updates the filter through the innovation gate.

Per-step records go to a CSV (one row per registration instant), the
aggregates to a `key = value` summary file, and trajectory/error figures
are rendered alongside them. Everything is deterministic given the
config and seed: two runs produce byte-identical CSVs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

import numpy as np
import pandas as pd

from .ekf import (FilterConfig, OdometryMeasurement, StateEstimate,
                  WindowConfig, initialize, predict, search_window, update)
from .geometry import Pose2D, body_to_global, pose_compose
from .localmap import LocalGridMap
from .priormap import PriorMap, load_map
from .registration import RegistrationConfig, search
from .scenarios import get_scenario
from .simulate import RunLog, read_runlog, simulate_run
from .simworld import render_prior

CSV_HEADER = ("t,truth_x,truth_y,truth_theta,est_x,est_y,est_theta,"
              "err_lat,err_lon,err_l2,nmi,gated")


class ConfigError(Exception):
    """Bad experiment configuration (unknown key, unparsable value)."""


@dataclass
class ExperimentConfig:
    scenario: str = "desk-mcity"
    seed: int = 0
    modality: str = "aerial"
    resolution: float = 0.08
    map_path: str = ""
    runlog_path: str = ""
    out_dir: str = "out"
    label: str = ""
    updates_enabled: bool = True
    cadence_hz: float = 2.0
    local_side_m: float = 40.0
    bins: int = 32
    min_overlap: int = 1000
    sharpness: float = 50.0
    boundary_penalty: float = 4.0
    step_cells: int = 1
    theta_step_deg: float = 0.5
    max_window_m: float = 1.0
    max_theta_deg: float = 2.0
    q_x: float = 0.01
    q_y: float = 0.01
    q_theta: float = 1e-4
    gating_threshold: float = 11.34
    init_sigma_xy: float = 2.5
    init_sigma_theta_deg: float = 3.0
    min_updates_settled: int = 3
    no_fix_limit: int = 10
    alert_limit: float = 0.29
    plots: bool = True

    def __post_init__(self):
        if self.cadence_hz <= 0:
            raise ConfigError("cadence_hz must be > 0")
        if self.modality not in ("aerial", "lidar"):
            raise ConfigError(f"modality must be aerial or lidar, got {self.modality!r}")
        for key in ("map_path", "runlog_path"):
            value = getattr(self, key)
            if value and not Path(value).exists():
                raise ConfigError(f"{key} {value!r} does not exist")
        if not self.label:
            self.label = f"{self.modality}-{int(round(self.resolution * 100))}cm" \
                if self.updates_enabled else "odometry"


_FIELD_TYPES = get_type_hints(ExperimentConfig)


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {key} = {raw!r}")
    try:
        return kind(raw)
    except ValueError as e:
        raise ConfigError(f"cannot parse {key} = {raw!r}: {e}") from e


def read_config(path: Path | str, **overrides) -> ExperimentConfig:
    """Parse a `key = value` experiment config; unknown keys are errors."""
    values: dict = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw.strip())
    values.update(overrides)
    return ExperimentConfig(**values)


def write_config(path: Path | str, cfg: ExperimentConfig) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class ErrorReport:
    label: str
    modality: str
    resolution: float
    seed: int
    columns: dict[str, np.ndarray]   # keys per CSV_HEADER
    aggregates: dict
    diverged: bool
    out_dir: str = ""

    @property
    def rmse_lateral(self) -> float:
        return self.aggregates["rmse_lateral"]

    @property
    def rmse_longitudinal(self) -> float:
        return self.aggregates["rmse_longitudinal"]

    @property
    def rmse_l2(self) -> float:
        return self.aggregates["rmse_l2"]


def rmse(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(np.mean(values ** 2)))


def availability(report: ErrorReport, alert_limit: float) -> tuple[float, float]:
    """Percent of per-step records with |error| strictly inside the alert
    limit, (lateral, longitudinal)."""
    lat = report.columns["err_lat"]
    lon = report.columns["err_lon"]
    if lat.size == 0:
        raise ValueError("report has no records")
    return (float(np.mean(np.abs(lat) < alert_limit) * 100.0),
            float(np.mean(np.abs(lon) < alert_limit) * 100.0))


def lateral_longitudinal(est_xy: np.ndarray, truth_xy: np.ndarray,
                         truth_theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project position error onto the truth heading frame: longitudinal
    along the heading, lateral perpendicular to it."""
    ex = est_xy[:, 0] - truth_xy[:, 0]
    ey = est_xy[:, 1] - truth_xy[:, 1]
    c = np.cos(truth_theta)
    s = np.sin(truth_theta)
    lon = ex * c + ey * s
    lat = -ex * s + ey * c
    return lat, lon


def run_experiment(cfg: ExperimentConfig, *, prior: PriorMap | None = None,
                   runlog: RunLog | None = None) -> ErrorReport:
    """Run one localization experiment and write its report files."""
    t_start = time.perf_counter()

    scenario = None
    if prior is None or runlog is None:
        if not cfg.map_path or not cfg.runlog_path:
            scenario = get_scenario(cfg.scenario, cfg.seed)
    if prior is None:
        if cfg.map_path:
            prior = load_map(cfg.map_path)
        else:
            world, _traj, noise = scenario
            prior = render_prior(world, cfg.modality, cfg.resolution,
                                 gap=noise.modality_gap,
                                 occlusions=noise.occlusion_patches)
    if runlog is None:
        if cfg.runlog_path:
            runlog = read_runlog(cfg.runlog_path)
        else:
            world, traj, noise = scenario
            runlog = simulate_run(world, traj, noise, cfg.seed)

    res = prior.cell_resolution
    if abs(res - cfg.resolution) > 1e-9:
        raise ConfigError(
            f"prior map resolution {res} != configured resolution {cfg.resolution}")

    fcfg = FilterConfig(
        q_base=np.diag([cfg.q_x, cfg.q_y, cfg.q_theta]),
        gating_threshold=cfg.gating_threshold,
        init_sigma=np.diag([cfg.init_sigma_xy ** 2, cfg.init_sigma_xy ** 2,
                            math.radians(cfg.init_sigma_theta_deg) ** 2]),
        min_updates_settled=cfg.min_updates_settled,
    )
    fcfg_settling = FilterConfig(q_base=fcfg.q_base,
                                 gating_threshold=float("inf"),
                                 init_sigma=fcfg.init_sigma,
                                 min_updates_settled=cfg.min_updates_settled)
    wcfg = WindowConfig(cell_resolution=res,
                        theta_step=math.radians(cfg.theta_step_deg),
                        step_cells=cfg.step_cells,
                        max_half_xy=cfg.max_window_m,
                        max_half_theta=math.radians(cfg.max_theta_deg))
    rcfg = RegistrationConfig(bins=cfg.bins, min_overlap=cfg.min_overlap,
                              sharpness=cfg.sharpness,
                              boundary_penalty=cfg.boundary_penalty)

    truth = runlog.truth
    odo = runlog.odo
    n = truth.shape[0]
    dt = float(truth[1, 0] - truth[0, 0]) if n > 1 else 0.02
    stride = max(1, int(round(1.0 / (cfg.cadence_hz * dt))))

    state = initialize(runlog.gps, prior.frame(), fcfg, timestamp=float(truth[0, 0]))
    local = LocalGridMap(state.pose, res, cfg.local_side_m)

    scan_idx = 0
    rows = []
    updates_applied = 0
    updates_gated = 0
    no_fix_count = 0
    no_fix_streak = 0
    diverged = False

    for k in range(n):
        t_k = float(truth[k, 0])
        if k > 0:
            measurement = OdometryMeasurement(float(odo[k - 1, 1]),
                                              float(odo[k - 1, 2]), t_k)
            state = predict(state, measurement, dt, fcfg)

        while scan_idx < len(runlog.scans) and runlog.scans[scan_idx][0] <= t_k + 1e-9:
            _t, pts = runlog.scans[scan_idx]
            scan_idx += 1
            if pts.shape[0] == 0:
                continue
            local.recenter(state.pose)
            px, py = body_to_global(state.pose, pts[:, 0], pts[:, 1])
            local.insert_arrays(px, py, pts[:, 2])

        if k == 0 or k % stride != 0:
            continue

        nmi_score = float("nan")
        gated = 1
        if cfg.updates_enabled and local.counts.any():
            spec = search_window(state, wcfg)
            result = search(prior, local, state.pose, spec, rcfg)
            if result is None:
                no_fix_count += 1
                no_fix_streak += 1
                if no_fix_streak > cfg.no_fix_limit:
                    diverged = True
            else:
                no_fix_streak = 0
                nmi_score = result.score
                z = pose_compose(state.pose, result.offset)
                active_cfg = fcfg if updates_applied >= cfg.min_updates_settled \
                    else fcfg_settling
                outcome = update(state, np.array([z.x, z.y, z.theta]),
                                 result.fitted_covariance, active_cfg,
                                 timestamp=t_k)
                state = outcome.state
                if outcome.accepted:
                    updates_applied += 1
                    gated = 0
                else:
                    updates_gated += 1

        rows.append((t_k, truth[k, 1], truth[k, 2], truth[k, 3],
                     state.mu[0], state.mu[1], state.mu[2], nmi_score, gated))

    arr = np.array([r[:7] for r in rows], dtype=np.float64)
    nmi_col = np.array([r[7] for r in rows], dtype=np.float64)
    gated_col = np.array([r[8] for r in rows], dtype=np.int64)
    lat, lon = lateral_longitudinal(arr[:, 4:6], arr[:, 1:3], arr[:, 3])
    l2 = np.hypot(arr[:, 4] - arr[:, 1], arr[:, 5] - arr[:, 2])

    columns = {
        "t": arr[:, 0], "truth_x": arr[:, 1], "truth_y": arr[:, 2],
        "truth_theta": arr[:, 3], "est_x": arr[:, 4], "est_y": arr[:, 5],
        "est_theta": arr[:, 6], "err_lat": lat, "err_lon": lon, "err_l2": l2,
        "nmi": nmi_col, "gated": gated_col,
    }
    report = ErrorReport(label=cfg.label, modality=cfg.modality,
                         resolution=res, seed=cfg.seed, columns=columns,
                         aggregates={}, diverged=diverged, out_dir=cfg.out_dir)
    avail_lat, avail_lon = availability(report, cfg.alert_limit)
    report.aggregates = {
        "label": cfg.label,
        "modality": cfg.modality,
        "resolution": res,
        "seed": cfg.seed,
        "steps": len(rows),
        "updates_applied": updates_applied,
        "updates_gated": updates_gated,
        "no_fix_count": no_fix_count,
        "diverged": diverged,
        "rmse_lateral": rmse(lat),
        "rmse_longitudinal": rmse(lon),
        "rmse_l2": rmse(l2),
        "max_abs_lateral": float(np.max(np.abs(lat))),
        "max_abs_longitudinal": float(np.max(np.abs(lon))),
        "terminal_l2": float(l2[-1]),
        "alert_limit": cfg.alert_limit,
        "availability_lateral_pct": avail_lat,
        "availability_longitudinal_pct": avail_lon,
        "runtime_s": time.perf_counter() - t_start,
    }
    write_report(report, cfg.out_dir, plots=cfg.plots)
    return report


def write_report(report: ErrorReport, out_dir: Path | str, plots: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = report.columns
    with open(out / "steps.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for i in range(cols["t"].size):
            vals = [f"{cols[name][i]:.9g}" for name in
                    ("t", "truth_x", "truth_y", "truth_theta",
                     "est_x", "est_y", "est_theta",
                     "err_lat", "err_lon", "err_l2", "nmi")]
            vals.append(str(int(cols["gated"][i])))
            f.write(",".join(vals) + "\n")
    with open(out / "summary.txt", "w", encoding="utf-8", newline="\n") as f:
        for key, value in report.aggregates.items():
            if isinstance(value, float):
                f.write(f"{key} = {value:.9g}\n")
            else:
                f.write(f"{key} = {value}\n")
    if plots:
        from .plots import save_report_figures
        save_report_figures(report, out)
    report.out_dir = str(out)


def load_report(report_dir: Path | str) -> ErrorReport:
    """Rebuild an ErrorReport from its steps.csv and summary.txt."""
    report_dir = Path(report_dir)
    frame = pd.read_csv(report_dir / "steps.csv")
    if list(frame.columns) != CSV_HEADER.split(","):
        raise ValueError(f"{report_dir}/steps.csv: unexpected header")
    columns = {name: frame[name].to_numpy() for name in frame.columns}
    aggregates: dict = {}
    for line in (report_dir / "summary.txt").read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if raw in ("True", "False"):
            aggregates[key] = raw == "True"
        else:
            try:
                aggregates[key] = int(raw)
            except ValueError:
                try:
                    aggregates[key] = float(raw)
                except ValueError:
                    aggregates[key] = raw
    return ErrorReport(
        label=str(aggregates.get("label", report_dir.name)),
        modality=str(aggregates.get("modality", "")),
        resolution=float(aggregates.get("resolution", 0.0)),
        seed=int(aggregates.get("seed", 0)),
        columns=columns,
        aggregates=aggregates,
        diverged=bool(aggregates.get("diverged", False)),
        out_dir=str(report_dir),
    )


def compare_runs(reports: list[ErrorReport]) -> list[dict]:
    """Comparison table rows, one per report, ordered by resolution then
    label; the ratio column is each run's L2 RMSE over the first report's."""
    if not reports:
        raise ValueError("need at least one report")
    base = reports[0].rmse_l2
    rows = []
    for rep in sorted(reports, key=lambda r: (r.resolution, r.label)):
        rows.append({
            "label": rep.label,
            "resolution_cm": rep.resolution * 100.0,
            "rmse_lateral": rep.rmse_lateral,
            "rmse_longitudinal": rep.rmse_longitudinal,
            "rmse_l2": rep.rmse_l2,
            "ratio_l2_vs_first": rep.rmse_l2 / base if base > 0 else float("inf"),
            "diverged": rep.diverged,
        })
    return rows


def format_comparison(rows: list[dict]) -> str:
    header = (f"{'run':<16} {'res(cm)':>8} {'lat RMSE':>10} {'lon RMSE':>10} "
              f"{'L2 RMSE':>10} {'ratio':>8} {'diverged':>9}")
    out = [header, "-" * len(header)]
    for r in rows:
        out.append(f"{r['label']:<16} {r['resolution_cm']:>8.0f} "
                   f"{r['rmse_lateral']:>10.3f} {r['rmse_longitudinal']:>10.3f} "
                   f"{r['rmse_l2']:>10.3f} {r['ratio_l2_vs_first']:>8.2f} "
                   f"{str(r['diverged']):>9}")
    return "\n".join(out)
