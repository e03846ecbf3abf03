"""Ground-frame center paths and polyline utilities shared by control and metrics."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class CenterPath:
    """Ordered lane-center waypoints (x, y meters) in a ground frame, sampled <= 1 m."""
    points: np.ndarray = field()  # (N, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValidationError("center path needs at least 2 (x, y) points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("non-finite center path point")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0):
            raise ValidationError("center path arc length must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def arc_length(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline at uniform arc-length spacing (endpoints kept)."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        raise ValidationError("degenerate polyline")
    n = max(2, int(math.floor(total / spacing)) + 1)
    targets = np.linspace(0.0, total, n)
    x = np.interp(targets, s, pts[:, 0])
    y = np.interp(targets, s, pts[:, 1])
    return np.stack([x, y], axis=1)


def to_vehicle_frame(points: np.ndarray, pose_xy, pose_psi: float) -> np.ndarray:
    """Express ground-frame points in the vehicle frame at the given pose."""
    pts = np.asarray(points, dtype=float) - np.asarray(pose_xy, dtype=float)
    c, s = math.cos(-pose_psi), math.sin(-pose_psi)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T


def from_vehicle_frame(points: np.ndarray, pose_xy, pose_psi: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(pose_psi), math.sin(pose_psi)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + np.asarray(pose_xy, dtype=float)


def straight_center_path(length: float, y: float = 0.0, spacing: float = 1.0,
                         x0: float = 0.0) -> CenterPath:
    n = max(2, int(length / spacing) + 1)
    x = np.linspace(x0, x0 + length, n)
    return CenterPath(np.stack([x, np.full(n, y)], axis=1))


def arc_center_path(length: float, curvature: float, spacing: float = 1.0) -> CenterPath:
    """Constant-curvature arc starting at the origin heading along +x."""
    if curvature == 0.0:
        return straight_center_path(length, spacing=spacing)
    n = max(2, int(length / spacing) + 1)
    s = np.linspace(0.0, length, n)
    r = 1.0 / curvature
    x = r * np.sin(curvature * s)
    y = r * (1.0 - np.cos(curvature * s))
    return CenterPath(np.stack([x, y], axis=1))


def extrap_interp(xq, px, py):
    """np.interp with linear extrapolation from the end segments."""
    xq = np.asarray(xq, dtype=float)
    y = np.interp(xq, px, py)
    if px[-1] > px[0]:
        m_lo = (py[1] - py[0]) / (px[1] - px[0])
        m_hi = (py[-1] - py[-2]) / (px[-1] - px[-2])
        y = np.where(xq < px[0], py[0] + m_lo * (xq - px[0]), y)
        y = np.where(xq > px[-1], py[-1] + m_hi * (xq - px[-1]), y)
    return y


def offset_polyline(points: np.ndarray, offset: float) -> np.ndarray:
    """Offset a polyline along its left normal by `offset` meters."""
    pts = np.asarray(points, dtype=float)
    tang = np.gradient(pts, axis=0)
    norm = np.linalg.norm(tang, axis=1, keepdims=True)
    tang = tang / np.where(norm > 0, norm, 1.0)
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)  # left of travel
    return pts + offset * normal
