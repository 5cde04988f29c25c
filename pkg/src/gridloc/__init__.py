"""gridloc: cross-modal grid-map localization.

Registers a live ground-reflectivity grid against a grayscale prior map
(aerial imagery or LIDAR survey) by maximizing normalized mutual
information over a bounded 3-DOF search, and fuses the fixes with
odometry in an extended Kalman filter. Ships a deterministic simulator
and an evaluation CLI so the whole pipeline is testable end to end
without sensor hardware.
"""

__version__ = "0.1.0"

from .geometry import GlobalFrame, Pose2D, wrap_angle
from .grid import Patch
from .localmap import LocalGridMap, ReflectivityPoint
from .priormap import (MapManifest, PriorMap, Tile, downsample_map, load_map,
                       query_patch, save_map)
from .registration import (InsufficientOverlapError, JointHistogram,
                           RegistrationConfig, RegistrationResult, SearchSpec,
                           entropy, fit_covariance, nmi, search)
from .ekf import (FilterConfig, OdometryMeasurement, StateEstimate,
                  WindowConfig, initialize, predict, search_window, update)
from .simworld import ModalityGap, OcclusionRect, SimWorld, render_prior
from .simulate import (RunLog, ScanGeometry, SensorNoiseSpec, TrajectorySpec,
                       read_runlog, simulate_run, write_runlog)
from .pipeline import (ErrorReport, ExperimentConfig, availability,
                       compare_runs, run_experiment)

__all__ = [
    "GlobalFrame", "Pose2D", "wrap_angle", "Patch",
    "LocalGridMap", "ReflectivityPoint",
    "MapManifest", "PriorMap", "Tile", "downsample_map", "load_map",
    "query_patch", "save_map",
    "InsufficientOverlapError", "JointHistogram", "RegistrationConfig",
    "RegistrationResult", "SearchSpec", "entropy", "fit_covariance", "nmi",
    "search",
    "FilterConfig", "OdometryMeasurement", "StateEstimate", "WindowConfig",
    "initialize", "predict", "search_window", "update",
    "ModalityGap", "OcclusionRect", "SimWorld", "render_prior",
    "RunLog", "ScanGeometry", "SensorNoiseSpec", "TrajectorySpec",
    "read_runlog", "simulate_run", "write_runlog",
    "ErrorReport", "ExperimentConfig", "availability", "compare_runs",
    "run_experiment",
]
