"""Kinematic bicycle model and the rate-limited 100 Hz steering actuation loop."""

import math
from dataclasses import dataclass, replace

from .errors import ValidationError

DEFAULT_WHEELBASE = 2.65          # Toyota RAV4 2017
DEFAULT_MAX_STEER = math.radians(30.0)
DEFAULT_STEER_RATE = math.radians(0.25)   # per 100 Hz actuation message


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0       # forward, meters
    y: float = 0.0       # lateral, meters (positive = left)
    psi: float = 0.0     # heading, radians
    delta: float = 0.0   # steering angle, radians
    v: float = 0.0       # speed, m/s

    def __post_init__(self):
        for name in ("x", "y", "psi", "delta", "v"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"non-finite vehicle state field {name}")


@dataclass(frozen=True)
class SimConfig:
    t_e: int = 20                 # end-to-end horizon, frames
    t_p: int = 10                 # per-frame surrogate horizon, frames
    wheelbase: float = DEFAULT_WHEELBASE
    control_hz: int = 20
    actuation_hz: int = 100
    steering_rate_limit: float = DEFAULT_STEER_RATE  # rad per actuation substep
    max_steer: float = DEFAULT_MAX_STEER

    def __post_init__(self):
        if self.t_e < 0 or self.t_p < 1:
            raise ValidationError("horizons must be positive")
        if self.wheelbase <= 0:
            raise ValidationError("wheelbase must be positive")
        if self.control_hz <= 0 or self.actuation_hz % self.control_hz != 0:
            raise ValidationError("actuation_hz must be an integer multiple of control_hz")
        if self.steering_rate_limit <= 0 or self.max_steer <= 0:
            raise ValidationError("steering limits must be positive")

    @property
    def substeps(self):
        return self.actuation_hz // self.control_hz

    @property
    def control_dt(self):
        return 1.0 / self.control_hz

    @property
    def actuation_dt(self):
        return 1.0 / self.actuation_hz


def kinematic_step(s: VehicleState, dt: float, wheelbase: float) -> VehicleState:
    """Advance pose by forward-Euler kinematic bicycle dynamics; steering and speed unchanged."""
    if dt < 0:
        raise ValidationError("dt must be non-negative")
    if wheelbase <= 0:
        raise ValidationError("wheelbase must be positive")
    return replace(
        s,
        x=s.x + s.v * math.cos(s.psi) * dt,
        y=s.y + s.v * math.sin(s.psi) * dt,
        psi=s.psi + (s.v / wheelbase) * math.tan(s.delta) * dt,
    )


def actuate(s: VehicleState, delta_cmd: float, cfg: SimConfig) -> VehicleState:
    """Run one 20 Hz control period as actuation substeps.

    Each substep moves the steering angle toward delta_cmd by at most the
    per-message rate limit, clamps to the absolute steering bound, then
    integrates the bicycle model at the actuation rate.
    """
    if not math.isfinite(delta_cmd):
        raise ValidationError("non-finite steering command")
    dt = cfg.actuation_dt
    for _ in range(cfg.substeps):
        err = delta_cmd - s.delta
        step = max(-cfg.steering_rate_limit, min(cfg.steering_rate_limit, err))
        new_delta = s.delta + step
        new_delta = max(-cfg.max_steer, min(cfg.max_steer, new_delta))
        s = replace(s, delta=new_delta)
        s = kinematic_step(s, dt, cfg.wheelbase)
    return s
