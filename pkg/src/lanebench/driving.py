"""Closed-loop lateral-deviation metrics: end-to-end rollout (E2E-LD) and the
per-frame surrogate (PSLD), plus ground-truth road-center generation.

All deviations are measured by equal-longitudinal-coordinate matching in the
vehicle frame at the rollout's first step ("t=0 frame"), positive to the left.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import ControllerConfig, PathWaypoints, plan_steering
from .detectors import DetectionContext, DetectionResult, DetectorSpec, desired_path, detect
from .dynamics import SimConfig, VehicleState, actuate
from .errors import (EvaluationFailureError, GenerationFailureError, NoPathError,
                     ValidationError)
from .geometry import PoseDelta, synthesize_frame
from .paths import CenterPath, extrap_interp, resample_polyline, to_vehicle_frame

DEFAULT_LOOKAHEAD = 40.0


@dataclass(frozen=True)
class TraceStep:
    t: int
    state: VehicleState
    command: float
    deviation: float          # signed meters, t=0 vehicle frame
    flags: tuple = ()


@dataclass(frozen=True)
class RolloutTrace:
    steps: tuple
    value: float
    metric: str
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "flags": list(self.flags),
            "steps": [{
                "t": s.t,
                "x": s.state.x, "y": s.state.y, "psi": s.state.psi,
                "delta": s.state.delta, "v": s.state.v,
                "command": s.command, "deviation": s.deviation,
                "flags": list(s.flags),
            } for s in self.steps],
        }


def lateral_deviation(position, path: CenterPath, frame_pose=None):
    """Signed lateral offset from the path at equal longitudinal coordinate.

    `frame_pose` is the ((x, y), psi) pose defining the t=0 vehicle frame; when
    None, position and path are assumed to be in that frame already. Returns
    (deviation, extrapolated_flag); positive deviation is to the left.
    """
    pts = path.points
    pos = np.asarray(position, dtype=float)
    if frame_pose is not None:
        pose_xy, psi = frame_pose
        pts = to_vehicle_frame(pts, pose_xy, psi)
        pos = to_vehicle_frame(pos[None, :], pose_xy, psi)[0]
    order = np.argsort(pts[:, 0])
    px = pts[order, 0]
    py = pts[order, 1]
    extrapolated = bool(pos[0] < px[0] or pos[0] > px[-1])
    dev = float(pos[1] - extrap_interp(np.array([pos[0]]), px, py)[0])
    return dev, extrapolated


def _pose_delta(sim: VehicleState, recorded_pose) -> PoseDelta:
    (xr, yr), psir = recorded_pose
    c, s = math.cos(-psir), math.sin(-psir)
    dx = c * (sim.x - xr) - s * (sim.y - yr)
    dy = s * (sim.x - xr) + c * (sim.y - yr)
    return PoseDelta(dx=dx, dy=dy, dpsi=sim.psi - psir)


def _center_waypoints(center: CenterPath, state: VehicleState,
                      lookahead: float) -> PathWaypoints:
    local = to_vehicle_frame(center.points, (state.x, state.y), state.psi)
    keep = (local[:, 0] >= -1.0) & (local[:, 0] <= lookahead)
    pts = local[keep]
    if len(pts) < 2:
        raise NoPathError("center path does not cover the control horizon")
    pts = pts[np.argsort(pts[:, 0])]
    pts = pts[np.concatenate([[True], np.diff(pts[:, 0]) > 1e-9])]
    if len(pts) < 2:
        raise NoPathError("center path degenerate in the vehicle frame")
    return PathWaypoints(pts)


@dataclass(frozen=True)
class ClosedLoopConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    lookahead: float = DEFAULT_LOOKAHEAD
    max_failure_ratio: float = 0.25


def _initial_state(scenario, frame_index: int, lateral_offset: float) -> VehicleState:
    (x, y), psi = scenario.log.pose(frame_index)
    # offset applied along the left normal of the recorded heading
    return VehicleState(x=x - lateral_offset * math.sin(psi),
                        y=y + lateral_offset * math.cos(psi),
                        psi=psi, delta=scenario.log.delta[frame_index],
                        v=scenario.log.v[frame_index])


def simulate_closed_loop(scenario, detector: DetectorSpec, cfg: ClosedLoopConfig,
                         t_steps: int, start_frame: int = 0,
                         initial_offset: float = 0.0,
                         initial_state: VehicleState | None = None,
                         collect_frames: bool = False):
    """Run the detection-steered closed loop for t_steps control periods.

    Per step: synthesize the current frame at the simulated pose, detect lanes,
    derive the desired path, plan steering, actuate. Returns (trace_steps,
    synthesized_frames) where steps has t_steps + 1 entries including t=0.
    """
    if scenario.center is None:
        raise ValidationError("scenario needs a center path for driving metrics")
    if start_frame + t_steps >= len(scenario.frames) + 1:
        raise ValidationError(
            f"scenario too short: need frames up to {start_frame + t_steps}")
    s = initial_state if initial_state is not None \
        else _initial_state(scenario, start_frame, initial_offset)
    t0_pose = scenario.log.pose(start_frame)
    center = scenario.center

    dev0, _ = lateral_deviation((s.x, s.y), center, frame_pose=t0_pose)
    steps = [TraceStep(t=0, state=s, command=s.delta, deviation=dev0)]
    frames_out = []
    failures = 0
    for t in range(t_steps):
        frame_rec = scenario.frames[start_frame + t]
        recorded_pose = scenario.log.pose(start_frame + t)
        delta = _pose_delta(s, recorded_pose)
        img = synthesize_frame(frame_rec.load_image(), scenario.homography, delta)
        if collect_frames:
            frames_out.append(img)
        ctx = DetectionContext(scenario=scenario, frame_index=start_frame + t,
                               pose_delta=delta)
        flags = []
        try:
            det = detect(detector, img, ctx)
            path = desired_path(det, scenario.homography, cfg.lookahead,
                                center_x=img.shape[1] / 2.0,
                                lane_width=scenario.lane_width)
            if path.fallback:
                flags.append(f"fallback_{path.fallback}")
            local_state = replace(s, x=0.0, y=0.0, psi=0.0)
            plan = plan_steering(local_state, path.waypoints, cfg.controller,
                                 cfg.sim.wheelbase)
            if plan.extrapolated:
                flags.append("path_extrapolated")
            command = plan.command
        except NoPathError:
            failures += 1
            flags.append("no_path")
            command = s.delta     # hold steering on detection failure
        if failures > cfg.max_failure_ratio * t_steps:
            raise EvaluationFailureError(
                f"detector produced no path on {failures}/{t_steps} steps",
                partial_trace=tuple(steps))
        s = actuate(s, command, cfg.sim)
        # replay the recorded speed profile
        nxt = min(start_frame + t + 1, len(scenario.log) - 1)
        s = replace(s, v=scenario.log.v[nxt])
        dev, extrap = lateral_deviation((s.x, s.y), center, frame_pose=t0_pose)
        if extrap:
            flags.append("deviation_extrapolated")
        steps.append(TraceStep(t=t + 1, state=s, command=command,
                               deviation=dev, flags=tuple(flags)))
    return tuple(steps), frames_out


def e2e_ld(scenario, detector: DetectorSpec, cfg: ClosedLoopConfig,
           initial_offset: float = 0.0):
    """Maximum absolute lateral deviation over a T_E-step detection-steered rollout."""
    steps, _ = simulate_closed_loop(scenario, detector, cfg, cfg.sim.t_e,
                                    initial_offset=initial_offset)
    value = max(abs(st.deviation) for st in steps)
    return value, RolloutTrace(steps=steps, value=value, metric="e2e_ld")


def psld(scenario, frame_index: int, detection: DetectionResult,
         cfg: ClosedLoopConfig, initial_state: VehicleState | None = None):
    """Per-frame surrogate: one detection-driven step, then ground-truth tracking.

    Stage 1 steers from the given detection for one control period; stage 2
    follows the scenario center path for T_p - 1 further periods. The value is
    the maximum absolute deviation over t in [1, T_p], divided by T_p.
    """
    if scenario.center is None:
        raise ValidationError("scenario needs a center path for PSLD")
    t_p = cfg.sim.t_p
    s = initial_state if initial_state is not None \
        else _initial_state(scenario, frame_index, 0.0)
    t0_pose = scenario.log.pose(frame_index)
    center = scenario.center

    dev0, _ = lateral_deviation((s.x, s.y), center, frame_pose=t0_pose)
    steps = [TraceStep(t=0, state=s, command=s.delta, deviation=dev0)]
    for t in range(t_p):
        flags = []
        local_state = replace(s, x=0.0, y=0.0, psi=0.0)
        if t == 0:
            path = desired_path(detection, scenario.homography, cfg.lookahead,
                                center_x=_frame_width(scenario, frame_index) / 2.0,
                                lane_width=scenario.lane_width)
            if path.fallback:
                flags.append(f"fallback_{path.fallback}")
            waypoints = path.waypoints
        else:
            waypoints = _center_waypoints(center, s, cfg.lookahead)
        plan = plan_steering(local_state, waypoints, cfg.controller, cfg.sim.wheelbase)
        s = actuate(s, plan.command, cfg.sim)
        nxt = min(frame_index + t + 1, len(scenario.log) - 1)
        s = replace(s, v=scenario.log.v[nxt])
        dev, extrap = lateral_deviation((s.x, s.y), center, frame_pose=t0_pose)
        if extrap:
            flags.append("deviation_extrapolated")
        steps.append(TraceStep(t=t + 1, state=s, command=plan.command,
                               deviation=dev, flags=tuple(flags)))
    value = max(abs(st.deviation) for st in steps[1:]) / t_p
    return value, RolloutTrace(steps=tuple(steps), value=value, metric="psld")


def _frame_width(scenario, frame_index: int) -> float:
    img = scenario.frames[frame_index].load_image()
    return img.shape[1]


def psld_rollout(scenario, detector: DetectorSpec, cfg: ClosedLoopConfig,
                 mode: str = "benign") -> list[float]:
    """Per-frame PSLD values over the scenario.

    Benign mode evaluates each recorded frame at its recorded pose. Attack mode
    advances the detection-steered closed loop and evaluates each synthesized
    frame at the simulated pose. Produces len(frames) - T_p values.
    """
    if mode not in ("benign", "attack"):
        raise ValidationError(f"unknown rollout mode: {mode!r}")
    n = len(scenario.frames) - cfg.sim.t_p
    if n < 1:
        raise ValidationError("scenario shorter than the PSLD horizon")
    values = []
    if mode == "benign":
        for i in range(n):
            ctx = DetectionContext(scenario=scenario, frame_index=i)
            det = detect(detector, scenario.frames[i].load_image(), ctx)
            value, _ = psld(scenario, i, det, cfg)
            values.append(value)
        return values

    # attack-style: simulate the closed loop, then score each simulated state
    steps, _ = simulate_closed_loop(scenario, detector, cfg, n - 1)
    for i in range(n):
        s = steps[i].state
        recorded_pose = scenario.log.pose(i)
        delta = _pose_delta(s, recorded_pose)
        img = synthesize_frame(scenario.frames[i].load_image(),
                               scenario.homography, delta)
        ctx = DetectionContext(scenario=scenario, frame_index=i, pose_delta=delta)
        det = detect(detector, img, ctx)
        value, _ = psld(scenario, i, det, cfg, initial_state=s)
        values.append(value)
    return values


def generate_road_center(scenario, cfg: ClosedLoopConfig | None = None) -> CenterPath:
    """Smooth the human driving trace into a ground-truth road center.

    Rolls the bicycle model + MPC forward using the recorded positions as
    waypoints and the recorded speed profile, then resamples the simulated
    trajectory at 1 m.
    """
    cfg = cfg or ClosedLoopConfig()
    log = scenario.log
    n = len(log)
    if n < 2 * cfg.sim.control_hz:
        raise ValidationError("driving log shorter than 2 seconds")
    human = np.stack([log.x, log.y], axis=1)
    s = VehicleState(x=log.x[0], y=log.y[0], psi=log.psi[0],
                     delta=log.delta[0], v=log.v[0])
    positions = [(s.x, s.y)]
    for t in range(n - 1):
        local = to_vehicle_frame(human, (s.x, s.y), s.psi)
        keep = (local[:, 0] >= 0.3) & (local[:, 0] <= cfg.lookahead)
        pts = local[keep]
        if len(pts) < 2:
            break
        order = np.argsort(pts[:, 0])
        pts = pts[order]
        dedupe = np.concatenate([[True], np.diff(pts[:, 0]) > 1e-9])
        pts = pts[dedupe]
        if len(pts) < 2:
            break
        plan = plan_steering(replace(s, x=0.0, y=0.0, psi=0.0),
                             PathWaypoints(pts), cfg.controller, cfg.sim.wheelbase)
        s = actuate(s, plan.command, cfg.sim)
        s = replace(s, v=log.v[min(t + 1, n - 1)])
        positions.append((s.x, s.y))
        nearest = float(np.min(np.linalg.norm(human - np.array([s.x, s.y]), axis=1)))
        if nearest > 5.0:
            raise GenerationFailureError(
                f"controller diverged {nearest:.2f} m from the human trace at step {t}")
    pts = np.asarray(positions)
    if len(pts) < 2:
        raise GenerationFailureError("trajectory degenerate; log too short")
    return CenterPath(resample_polyline(pts, 1.0))
