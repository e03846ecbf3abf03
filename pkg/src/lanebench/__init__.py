"""Deterministic closed-loop evaluation toolkit for lane detection.

Conventional pixel-threshold metrics (accuracy, F1, parameter sweeps) next to
driving-oriented ones: maximum lateral deviation of a simulated vehicle steered
by the detector under test, and a cheap per-frame surrogate for it. Detectors
plug in either as built-in synthetic models or over a newline-JSON wire
protocol.
"""

__version__ = "0.1.0"

from .detectors import DetectionResult, DetectorSpec, detect
from .driving import ClosedLoopConfig, e2e_ld, psld, psld_rollout, simulate_closed_loop
from .dynamics import SimConfig, VehicleState
from .errors import LanebenchError
from .geometry import GroundHomography, PoseDelta, synthesize_frame
from .scenario import LaneAnnotation, MetricParams, Scenario, load_scenario, load_tusimple
from .stats import pearson

__all__ = [
    "__version__", "DetectionResult", "DetectorSpec", "detect",
    "ClosedLoopConfig", "e2e_ld", "psld", "psld_rollout", "simulate_closed_loop",
    "SimConfig", "VehicleState", "LanebenchError", "GroundHomography",
    "PoseDelta", "synthesize_frame", "LaneAnnotation", "MetricParams",
    "Scenario", "load_scenario", "load_tusimple", "pearson",
]
