"""Detector contract, deterministic synthetic detectors, external protocol client,
and derivation of the desired driving path from detections.

Built-in detectors are pure functions of (spec, scenario, frame index, pose
delta): they model perception of the pose-shifted view analytically from the
scenario's ground-truth center path, so the closed loop behaves identically
for built-in and external detectors.
"""

import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import protocol
from .control import PathWaypoints
from .errors import NoPathError, ValidationError
from .geometry import GroundHomography, PoseDelta, ground_to_image, project_lanes_to_bev
from .paths import extrap_interp, offset_polyline, to_vehicle_frame

BUILTIN_KINDS = ("ground_truth_replay", "biased", "noisy", "curved", "straightener")


@dataclass(frozen=True)
class DetectionResult:
    lanes: tuple                 # image-space polylines, each (N, 2) float array
    scores: tuple                # per-lane confidence in [0, 1]
    raw: object = None           # optional ProbabilityMaps | PolynomialLanes | AnchorSet
    latency_ms: float | None = None

    def __post_init__(self):
        lanes = tuple(np.asarray(l, dtype=float).reshape(-1, 2) for l in self.lanes)
        scores = tuple(float(s) for s in self.scores)
        if len(scores) != len(lanes):
            raise ValidationError("one score per lane required")
        for s in scores:
            if not (0.0 <= s <= 1.0):
                raise ValidationError(f"confidence out of range: {s}")
        for l in lanes:
            if not np.all(np.isfinite(l)):
                raise ValidationError("non-finite lane point")
            l.setflags(write=False)
        object.__setattr__(self, "lanes", lanes)
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class DetectorSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    endpoint: dict | None = None   # for kind == "external"

    def __post_init__(self):
        if self.kind == "external":
            if not self.endpoint:
                raise ValidationError("external detector needs an endpoint")
        elif self.kind not in BUILTIN_KINDS:
            raise ValidationError(f"unknown detector kind: {self.kind!r}")
        if self.kind == "noisy" and self.seed is None:
            raise ValidationError("stochastic builtin requires a seed")

    def label(self) -> str:
        parts = [self.kind] + [f"{k}={v}" for k, v in sorted(self.params.items())]
        if self.seed is not None:
            parts.append(f"seed={self.seed}")
        return ",".join(parts)


@dataclass(frozen=True)
class DetectionContext:
    scenario: object            # Scenario
    frame_index: int
    pose_delta: PoseDelta = PoseDelta()


def sim_pose(ctx: DetectionContext):
    """Simulated camera pose in the scenario ground frame."""
    (xr, yr), psir = ctx.scenario.log.pose(ctx.frame_index)
    c, s = math.cos(psir), math.sin(psir)
    x = xr + c * ctx.pose_delta.dx - s * ctx.pose_delta.dy
    y = yr + s * ctx.pose_delta.dx + c * ctx.pose_delta.dy
    return (x, y), psir + ctx.pose_delta.dpsi


def _center_local(ctx: DetectionContext, x_max: float = 80.0) -> np.ndarray:
    center = ctx.scenario.center
    if center is None:
        raise ValidationError("scenario has no center path; built-ins need one")
    pose_xy, psi = sim_pose(ctx)
    local = to_vehicle_frame(center.points, pose_xy, psi)
    keep = (local[:, 0] >= 1.0) & (local[:, 0] <= x_max)
    if np.sum(keep) < 2:
        raise NoPathError("center path does not extend ahead of the vehicle")
    local = local[keep]
    order = np.argsort(local[:, 0])
    xs, ys = local[order, 0], local[order, 1]
    # resample densely in the near field so the projected polyline reaches the
    # bottom image rows; coarser far out where rows bunch together
    x0, x1 = xs[0], xs[-1]
    grid = np.concatenate([np.arange(x0, min(10.0, x1), 0.1),
                           np.arange(max(10.0, x0), x1, 0.5), [x1]])
    grid = np.unique(grid)
    return np.stack([grid, np.interp(grid, xs, ys)], axis=1)


def _edge_point(p_out, p_in, width, height):
    """Clip the segment from an outside to an inside pixel at the image border."""
    d = p_in - p_out
    t = 0.0
    for axis, hi in ((0, width - 1.0), (1, height - 1.0)):
        if p_out[axis] < 0.0 and d[axis] != 0.0:
            t = max(t, -p_out[axis] / d[axis])
        elif p_out[axis] > hi and d[axis] != 0.0:
            t = max(t, (hi - p_out[axis]) / d[axis])
    return p_out + t * d


def _project_lane(h: GroundHomography, pts_local: np.ndarray, frame: np.ndarray):
    px = ground_to_image(h, pts_local)
    height, width = frame.shape[:2]
    inside = ((px[:, 0] >= 0) & (px[:, 0] < width)
              & (px[:, 1] >= 0) & (px[:, 1] < height))
    out = []
    for i in range(len(px)):
        if inside[i]:
            if i > 0 and not inside[i - 1]:
                out.append(_edge_point(px[i - 1], px[i], width, height))
            out.append(px[i])
        elif i > 0 and inside[i - 1]:
            out.append(_edge_point(px[i], px[i - 1], width, height))
    if not out:
        return np.empty((0, 2))
    return np.asarray(out)


def _lanes_from_center(center_local, lane_width, h, frame):
    left = offset_polyline(center_local, lane_width / 2.0)
    right = offset_polyline(center_local, -lane_width / 2.0)
    lanes = []
    for line in (left, right):
        px = _project_lane(h, line, frame)
        if len(px) >= 2:
            lanes.append(px)
    if not lanes:
        raise NoPathError("no lane line projects into the frame")
    return lanes


def _point_noise(seed, scenario_id, frame_index, lane_idx, point_idx, sigma):
    key = zlib.crc32(scenario_id.encode("utf-8"))
    ss = np.random.SeedSequence([seed, key, frame_index, lane_idx, point_idx])
    return np.random.Generator(np.random.Philox(ss)).normal(0.0, sigma, size=2)


def _detect_builtin(spec: DetectorSpec, frame: np.ndarray,
                    ctx: DetectionContext) -> DetectionResult:
    scenario = ctx.scenario
    h = scenario.homography
    width_m = scenario.lane_width
    center = _center_local(ctx)

    if spec.kind == "biased":
        center = offset_polyline(center, float(spec.params.get("b", 0.0)))
    elif spec.kind == "curved":
        kappa = float(spec.params.get("kappa", 0.0))
        onset = float(spec.params.get("x_onset", 0.0))
        bend = np.where(center[:, 0] > onset,
                        0.5 * kappa * (center[:, 0] - onset) ** 2, 0.0)
        center = np.stack([center[:, 0], center[:, 1] + bend], axis=1)

    if spec.kind == "straightener":
        # least-squares straight-line fit of each ground-truth line in BEV
        lanes = []
        for side in (width_m / 2.0, -width_m / 2.0):
            line = offset_polyline(center, side)
            coef = np.polyfit(line[:, 0], line[:, 1], 1)
            fitted = np.stack([line[:, 0], np.polyval(coef, line[:, 0])], axis=1)
            px = _project_lane(h, fitted, frame)
            if len(px) >= 2:
                lanes.append(px)
        if not lanes:
            raise NoPathError("no lane line projects into the frame")
    else:
        lanes = _lanes_from_center(center, width_m, h, frame)

    if spec.kind == "noisy":
        sigma = float(spec.params.get("sigma", 0.0))
        noisy_lanes = []
        for li, lane in enumerate(lanes):
            pts = lane.copy()
            if sigma > 0:
                for pi in range(len(pts)):
                    pts[pi] += _point_noise(spec.seed, scenario.id, ctx.frame_index,
                                            li, pi, sigma)
            noisy_lanes.append(pts)
        lanes = noisy_lanes

    return DetectionResult(lanes=tuple(lanes), scores=(1.0,) * len(lanes))


_clients: dict[str, protocol.DetectorClient] = {}


def _client_for(endpoint: dict, timeout: float) -> protocol.DetectorClient:
    key = json.dumps(endpoint, sort_keys=True)
    client = _clients.get(key)
    if client is None:
        client = protocol.DetectorClient(endpoint, timeout=timeout)
        _clients[key] = client
    return client


def close_external_detectors():
    for client in _clients.values():
        try:
            client.close()
        except Exception:
            pass
    _clients.clear()


def detect_external(endpoint: dict, frame: np.ndarray,
                    timeout: float = protocol.DEFAULT_TIMEOUT) -> DetectionResult:
    """One round trip of the wire protocol; raw representation preserved."""
    client = _client_for(endpoint, timeout)
    reply = client.detect(frame)
    lanes = []
    scores = []
    for lane in reply.get("lanes", []):
        pts = np.asarray(lane["points"], dtype=float).reshape(-1, 2)
        lanes.append(pts)
        scores.append(lane.get("score", 1.0))
    return DetectionResult(lanes=tuple(lanes), scores=tuple(scores),
                           raw=protocol.decode_raw(reply.get("raw")))


def detect(spec: DetectorSpec, frame: np.ndarray, ctx: DetectionContext) -> DetectionResult:
    if spec.kind == "external":
        return detect_external(spec.endpoint, frame,
                               timeout=float(spec.params.get("timeout", 10.0)))
    return _detect_builtin(spec, frame, ctx)


@dataclass(frozen=True)
class DesiredPath:
    waypoints: PathWaypoints
    fallback: str | None = None   # side that was reconstructed, if any
    dropped_points: int = 0


def desired_path(det: DetectionResult, h: GroundHomography, lookahead: float,
                 center_x: float, lane_width: float = 3.7) -> DesiredPath:
    """Average the ego-left and ego-right lines in BEV into waypoints.

    Both lines are resampled at 1 m longitudinal spacing out to `lookahead`.
    If one side is missing the present line is offset by half the lane width
    (flagged); if both are missing a no-path error is raised.
    """
    if len(det.lanes) == 0:
        raise NoPathError("detection contains no lanes")
    bottoms = []
    for i, lane in enumerate(det.lanes):
        if len(lane) == 0:
            continue
        bi = int(np.argmax(lane[:, 1]))   # bottom-most image point
        bottoms.append((i, lane[bi, 0]))
    left_cands = [(x, i) for i, x in bottoms if x < center_x]
    right_cands = [(x, i) for i, x in bottoms if x >= center_x]
    left_idx = max(left_cands)[1] if left_cands else None
    right_idx = min(right_cands)[1] if right_cands else None
    if left_idx is None and right_idx is None:
        raise NoPathError("no lane on either side of the image center")

    chosen = [det.lanes[i] for i in (left_idx, right_idx) if i is not None]
    bev, dropped = project_lanes_to_bev(chosen, h)
    grid = np.arange(1.0, lookahead + 0.5, 1.0)

    def lateral(points):
        pts = points[np.argsort(points[:, 0])]
        if len(pts) < 2:
            return None
        return extrap_interp(grid, pts[:, 0], pts[:, 1])

    laterals = [lateral(b) for b in bev]
    laterals = [l for l in laterals if l is not None]
    if not laterals:
        raise NoPathError("lane lines degenerate after BEV projection")

    fallback = None
    if left_idx is None:
        center_y = laterals[0] + lane_width / 2.0    # only the right line present
        fallback = "left"
    elif right_idx is None:
        center_y = laterals[0] - lane_width / 2.0
        fallback = "right"
    elif len(laterals) == 1:
        # the other side collapsed during projection; same parallel-offset fallback
        center_y = laterals[0] - lane_width / 2.0
        fallback = "right"
    else:
        center_y = (laterals[0] + laterals[1]) / 2.0
    waypoints = PathWaypoints(np.stack([grid, center_y], axis=1))
    return DesiredPath(waypoints=waypoints, fallback=fallback, dropped_points=dropped)
