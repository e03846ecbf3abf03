"""Synthetic calibrated scenarios for desk-scale evaluation and tests.

A known pinhole camera over a flat road renders procedural frames (bright lane
lines on dark asphalt), so every geometric quantity has an analytic ground
truth and no real driving data is needed.
"""

import json
import math
import os

import cv2
import numpy as np

from .detectors import DetectorSpec
from .geometry import GroundHomography, ground_to_image, pinhole_ground_homography
from .paths import (CenterPath, arc_center_path, extrap_interp, offset_polyline,
                    straight_center_path, to_vehicle_frame)
from .scenario import DrivingLog, FrameRecord, LaneAnnotation, Scenario

IMAGE_W = 640
IMAGE_H = 480
FOCAL = 600.0
CAM_HEIGHT = 1.5
CAM_PITCH = 0.04          # radians, downward
H_SAMPLES = tuple(range(250, 480, 10))
LANE_WIDTH = 3.7
LINE_WIDTH = 0.18         # painted line width, meters
FRAME_RATE = 20.0

ROAD_GRAY = 60
SHOULDER_GRAY = 95
SKY_GRAY = 170
LINE_WHITE = 250


def fixture_homography() -> GroundHomography:
    return pinhole_ground_homography(FOCAL, IMAGE_W / 2.0, IMAGE_H / 2.0,
                                     CAM_HEIGHT, CAM_PITCH)


_ground_grid_cache = {}


def _ground_grid(h: GroundHomography):
    """Per-pixel ground coordinates (and validity) for the fixture camera."""
    key = h.matrix.tobytes()
    if key not in _ground_grid_cache:
        u, v = np.meshgrid(np.arange(IMAGE_W) + 0.0, np.arange(IMAGE_H) + 0.0)
        pix = np.stack([u.ravel(), v.ravel(), np.ones(u.size)], axis=0)
        g = h.matrix @ pix
        w = g[2]
        valid = np.abs(w) > 1e-6
        gx = np.where(valid, g[0] / np.where(valid, w, 1.0), np.inf)
        gy = np.where(valid, g[1] / np.where(valid, w, 1.0), 0.0)
        valid = valid & (gx > 0) & (gx < 300)
        _ground_grid_cache[key] = (gx.reshape(IMAGE_H, IMAGE_W),
                                   gy.reshape(IMAGE_H, IMAGE_W),
                                   valid.reshape(IMAGE_H, IMAGE_W))
    return _ground_grid_cache[key]


def render_frame(h: GroundHomography, center_local: np.ndarray,
                 lane_width: float = LANE_WIDTH) -> np.ndarray:
    """Render the road seen from a pose, given the center path in that pose's frame."""
    gx, gy, valid = _ground_grid(h)
    img = np.full((IMAGE_H, IMAGE_W), SKY_GRAY, dtype=np.uint8)
    img[valid] = SHOULDER_GRAY
    cy = extrap_interp(gx[valid], center_local[:, 0], center_local[:, 1])
    lateral = gy[valid] - cy
    road = np.abs(lateral) <= lane_width / 2.0 + 0.6
    lines = (np.abs(np.abs(lateral) - lane_width / 2.0) <= LINE_WIDTH / 2.0)
    vals = img[valid]
    vals[road] = ROAD_GRAY
    vals[lines] = LINE_WHITE
    img[valid] = vals
    return np.repeat(img[:, :, None], 3, axis=2)


def _annotation_for_pose(h: GroundHomography, center_local: np.ndarray,
                         lane_width: float) -> LaneAnnotation:
    """Project the two ego lines into the image and sample them at H_SAMPLES rows."""
    lanes = []
    for side in (lane_width / 2.0, -lane_width / 2.0):
        line = offset_polyline(center_local, side)
        px = ground_to_image(h, line)
        order = np.argsort(px[:, 1])
        rows = px[order, 1]
        xs = px[order, 0]
        lane = []
        for r in H_SAMPLES:
            if rows[0] <= r <= rows[-1]:
                x = float(np.interp(r, rows, xs))
                lane.append(x if 0 <= x < IMAGE_W else -2)
            else:
                lane.append(-2)
        lanes.append(lane)
    return LaneAnnotation(h_samples=H_SAMPLES, lanes=lanes)


def build_scenario(scenario_id: str, kind: str = "straight", curvature: float = 0.0,
                   n_frames: int = 40, speed: float = 13.4,
                   length: float = 400.0, annotate: bool = True) -> Scenario:
    """Build an in-memory scenario driving along the center path at constant speed."""
    h = fixture_homography()
    if kind == "straight":
        center = straight_center_path(length, x0=-10.0)
    elif kind == "arc":
        center = arc_center_path(length, curvature)
    else:
        raise ValueError(f"unknown scenario kind: {kind!r}")

    pts = center.points
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc_s = np.concatenate([[0.0], np.cumsum(seg)])
    # start a little into the path so waypoints exist slightly behind the car
    s0 = 12.0
    step = speed / FRAME_RATE
    xs, ys, psis = [], [], []
    for i in range(n_frames):
        si = s0 + i * step
        x = np.interp(si, arc_s, pts[:, 0])
        y = np.interp(si, arc_s, pts[:, 1])
        x2 = np.interp(si + 0.5, arc_s, pts[:, 0])
        y2 = np.interp(si + 0.5, arc_s, pts[:, 1])
        xs.append(x)
        ys.append(y)
        psis.append(math.atan2(y2 - y, x2 - x))
    steer = math.atan(2.65 * curvature) if kind == "arc" else 0.0
    log = DrivingLog(x=xs, y=ys, psi=psis, v=[speed] * n_frames,
                     delta=[steer] * n_frames)

    # constant-curvature roads look identical from every on-path pose: render once
    local0 = to_vehicle_frame(pts, (xs[0], ys[0]), psis[0])
    keep = (local0[:, 0] > -5.0) & (local0[:, 0] < 200.0)
    image = render_frame(h, local0[keep])
    frames = []
    for i in range(n_frames):
        ann = None
        if annotate:
            local = to_vehicle_frame(pts, (xs[i], ys[i]), psis[i])
            m = (local[:, 0] > 1.0) & (local[:, 0] < 120.0)
            ann = _annotation_for_pose(h, local[m], LANE_WIDTH)
        frames.append(FrameRecord(frame_index=i, timestamp=i / FRAME_RATE,
                                  image_ref=image, annotation=ann))
    return Scenario(id=scenario_id, frames=frames, log=log, homography=h,
                    center=CenterPath(pts), lane_width=LANE_WIDTH)


def suite_24():
    """24 (scenario, detector) pairs of graded severity for correlation studies."""
    scen_straight = build_scenario("straight-13", "straight", n_frames=31)
    scen_arc_l = build_scenario("arc-l", "arc", curvature=0.003, n_frames=31)
    scen_arc_r = build_scenario("arc-r", "arc", curvature=-0.003, n_frames=31)
    scenarios = [scen_straight, scen_arc_l, scen_arc_r]

    detectors = []
    for b in (0.05, 0.15, 0.3, 0.45):
        detectors.append(DetectorSpec(kind="biased", params={"b": b}))
    for sigma, seed in ((1.0, 7), (4.0, 11)):
        detectors.append(DetectorSpec(kind="noisy", params={"sigma": sigma}, seed=seed))
    for kappa in (0.004, 0.012):
        detectors.append(DetectorSpec(kind="curved",
                                      params={"kappa": kappa, "x_onset": 10.0}))
    pairs = []
    for scen in scenarios:
        for det in detectors:
            pairs.append((scen, det))
    assert len(pairs) == 24
    return pairs


def pixel_bias_to_meters(pixels: float, row: int | None = None) -> float:
    """Lateral meters matching a pixel offset at an annotated row (default: bottom)."""
    h = fixture_homography()
    row = row if row is not None else H_SAMPLES[-1]
    # find forward distance imaged at `row` on the centerline, then convert
    rows = np.array([ground_to_image(h, np.array([x, 0.0]))[1]
                     for x in np.arange(3.0, 80.0, 0.5)])
    xs = np.arange(3.0, 80.0, 0.5)
    x_at_row = float(np.interp(row, rows[::-1], xs[::-1]))
    base = ground_to_image(h, np.array([x_at_row, 0.0]))
    shifted = ground_to_image(h, np.array([x_at_row, 0.5]))
    px_per_meter = abs(shifted[0] - base[0]) / 0.5
    return float(pixels / px_per_meter)


def write_scenario(scenario: Scenario, out_dir) -> str:
    """Persist a scenario as PNG frames plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    frames_doc = []
    for i, fr in enumerate(scenario.frames):
        name = f"frame_{i:04d}.png"
        cv2.imwrite(os.path.join(out_dir, name), fr.load_image())
        entry = {"file": name, "timestamp": fr.timestamp}
        if fr.annotation is not None:
            entry["annotation"] = {"h_samples": list(fr.annotation.h_samples),
                                   "lanes": [list(l) for l in fr.annotation.lanes]}
        frames_doc.append(entry)
    doc = {
        "format_version": 1,
        "id": scenario.id,
        "homography": [float(v) for v in scenario.homography.matrix.ravel()],
        "lane_width": scenario.lane_width,
        "frames": frames_doc,
        "log": [{"x": float(scenario.log.x[i]), "y": float(scenario.log.y[i]),
                 "psi": float(scenario.log.psi[i]), "v": float(scenario.log.v[i]),
                 "delta": float(scenario.log.delta[i])}
                for i in range(len(scenario.log))],
        "center": {"points": [[float(x), float(y)] for x, y in scenario.center.points]},
    }
    manifest = os.path.join(out_dir, "scenario.json")
    with open(manifest, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    return manifest
