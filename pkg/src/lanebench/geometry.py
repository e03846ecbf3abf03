"""Ground-plane camera geometry: image/BEV mapping and pose-conditioned frame synthesis.

Conventions: the ground frame is the vehicle frame (x forward, y lateral-left,
meters). A GroundHomography maps homogeneous image pixels (u, v, 1) to ground
points. Images are numpy uint8 arrays of shape (H, W, 3).
"""

import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import DegenerateProjectionError, EmptyProjectionError, ValidationError

_W_EPS = 1e-9


@dataclass(frozen=True)
class GroundHomography:
    matrix: np.ndarray = field()  # 3x3, image pixel -> ground meters

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValidationError("homography must be a finite 3x3 matrix")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ValidationError("homography is not invertible")
        # store with unit bottom-right entry so equality checks are well-defined
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


@dataclass(frozen=True)
class PoseDelta:
    dx: float = 0.0    # forward meters
    dy: float = 0.0    # lateral meters
    dpsi: float = 0.0  # heading radians

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dpsi)):
            raise ValidationError("non-finite pose delta")
        if abs(self.dpsi) >= math.pi / 2:
            raise ValidationError("|dpsi| must be < pi/2")


def image_to_ground(h: GroundHomography, pixels):
    """Map image pixels to ground-plane meters.

    Accepts a single (u, v) pair or an (N, 2) array; raises on degenerate
    (at/above-horizon) pixels.
    """
    pts = np.atleast_2d(np.asarray(pixels, dtype=float))
    hom = np.hstack([pts, np.ones((len(pts), 1))])
    out = hom @ h.matrix.T
    w = out[:, 2]
    if np.any(np.abs(w) <= _W_EPS):
        raise DegenerateProjectionError("pixel at or above the horizon")
    ground = out[:, :2] / w[:, None]
    if np.ndim(pixels) == 1:
        return ground[0]
    return ground


def ground_to_image(h: GroundHomography, points):
    """Map ground-plane points (meters) to image pixels."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hom = np.hstack([pts, np.ones((len(pts), 1))])
    out = hom @ h.inverse.T
    w = out[:, 2]
    if np.any(np.abs(w) <= _W_EPS):
        raise DegenerateProjectionError("ground point projects to infinity")
    px = out[:, :2] / w[:, None]
    if np.ndim(points) == 1:
        return px[0]
    return px


def rigid_ground_motion(delta: PoseDelta) -> np.ndarray:
    """Ground-plane coordinates of a point after the camera moves by delta.

    Translate by (-dx, -dy), then rotate by -dpsi about the origin.
    """
    c, s = math.cos(-delta.dpsi), math.sin(-delta.dpsi)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    trans = np.array([[1.0, 0.0, -delta.dx], [0.0, 1.0, -delta.dy], [0.0, 0.0, 1.0]])
    return rot @ trans


def compose_pose_warp(h: GroundHomography, delta: PoseDelta) -> np.ndarray:
    """Pixel-to-pixel warp seeing the ground from a pose displaced by delta.

    Composition: image -> ground -> rigid motion -> image.
    """
    warp = h.inverse @ rigid_ground_motion(delta) @ h.matrix
    if abs(warp[2, 2]) > 1e-12:
        warp = warp / warp[2, 2]
    return warp


def synthesize_frame(src: np.ndarray, h: GroundHomography, delta: PoseDelta) -> np.ndarray:
    """Warp a recorded frame to the viewpoint of a displaced vehicle pose.

    Bilinear inverse-mapped resampling, edge replication outside the source.
    Identity delta returns a bit-identical copy.
    """
    if delta.dx == 0.0 and delta.dy == 0.0 and delta.dpsi == 0.0:
        return src.copy()
    warp = compose_pose_warp(h, delta)
    height, width = src.shape[:2]
    return cv2.warpPerspective(
        src, warp, (width, height),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE,
    )


def render_patch(dst: np.ndarray, h: GroundHomography, patch: np.ndarray,
                 placement) -> tuple[np.ndarray, bool]:
    """Composite an RGBA patch texture onto the ground rectangle.

    placement is (x0 meters ahead, width meters, length meters); the rectangle
    is centered laterally. Returns (image, offscreen_flag); offscreen means the
    rectangle could not be drawn and dst was returned unchanged.
    """
    x0, width_m, length_m = placement
    if patch.size == 0 or patch.ndim != 3 or patch.shape[2] != 4:
        raise ValidationError("patch must be a non-empty RGBA image")
    corners_ground = np.array([
        [x0, width_m / 2],             # near-left
        [x0, -width_m / 2],            # near-right
        [x0 + length_m, -width_m / 2],  # far-right
        [x0 + length_m, width_m / 2],  # far-left
    ])
    if x0 <= 0:
        return dst, True
    try:
        corners_px = ground_to_image(h, corners_ground)
    except DegenerateProjectionError:
        return dst, True
    height, width = dst.shape[:2]
    if (np.all(corners_px[:, 0] < 0) or np.all(corners_px[:, 0] >= width)
            or np.all(corners_px[:, 1] < 0) or np.all(corners_px[:, 1] >= height)):
        return dst, True

    ph, pw = patch.shape[:2]
    # patch columns span the rectangle width (left to right), rows the length (far to near)
    src_corners = np.array([[-0.5, ph - 0.5], [pw - 0.5, ph - 0.5],
                            [pw - 0.5, -0.5], [-0.5, -0.5]], dtype=np.float32)
    warp = cv2.getPerspectiveTransform(src_corners, corners_px.astype(np.float32))
    warped = cv2.warpPerspective(
        patch, warp, (width, height),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0,
    )
    alpha = warped[:, :, 3:4].astype(float) / 255.0
    out = dst.astype(float) * (1.0 - alpha) + warped[:, :, :3].astype(float) * alpha
    return np.clip(np.rint(out), 0, 255).astype(np.uint8), False


def adapt_frame_geometry(src: np.ndarray, crop, out_size) -> np.ndarray:
    """Crop (left, top, right, bottom) then bilinear-resize to out_size (w, h)."""
    left, top, right, bottom = crop
    out_w, out_h = out_size
    height, width = src.shape[:2]
    if not (0 <= left < right <= width and 0 <= top < bottom <= height):
        raise ValidationError("crop window empty or out of bounds")
    if out_w <= 0 or out_h <= 0:
        raise ValidationError("output size must be positive")
    cropped = src[top:bottom, left:right]
    if (out_w, out_h) == (right - left, bottom - top):
        return cropped.copy()
    return cv2.resize(cropped, (out_w, out_h), interpolation=cv2.INTER_LINEAR)


def project_lanes_to_bev(lanes, h: GroundHomography):
    """Project image-space lane polylines to BEV meters.

    Above-horizon points are dropped; returns (bev_lanes, dropped_count).
    Raises if a non-empty lane loses every point.
    """
    bev_lanes = []
    dropped = 0
    any_points = False
    any_kept = False
    for lane in lanes:
        pts = np.asarray(lane, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            bev_lanes.append(np.zeros((0, 2)))
            continue
        any_points = True
        hom = np.hstack([pts, np.ones((len(pts), 1))])
        out = hom @ h.matrix.T
        keep = np.abs(out[:, 2]) > _W_EPS
        dropped += int(np.sum(~keep))
        ground = out[keep, :2] / out[keep, 2:3]
        if len(ground):
            any_kept = True
        bev_lanes.append(ground)
    if any_points and not any_kept:
        raise EmptyProjectionError("all lane points at or above the horizon")
    return bev_lanes, dropped


def pinhole_ground_homography(focal: float, cx: float, cy: float,
                              cam_height: float, pitch: float) -> GroundHomography:
    """Homography of a forward-looking pinhole camera pitched down over a flat road.

    Used to build calibrated synthetic fixtures: camera at (0, 0, cam_height),
    optical axis pitched down by `pitch` radians, ground plane z=0.
    """
    cp, sp = math.cos(pitch), math.sin(pitch)
    # world axes (fwd, left, up); ray from camera to ground point (X, Y, 0) is
    # (X, Y, -cam_height). camera basis: right=(0,-1,0), down=(-sp,0,-cp),
    # forward=(cp,0,-sp). Columns below are the (X, Y, 1) basis of that ray.
    x_c = np.array([0.0, -1.0, 0.0])
    y_c = np.array([-sp, 0.0, -cp])
    z_c = np.array([cp, 0.0, -sp])
    g2i = np.zeros((3, 3))
    basis = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
             np.array([0.0, 0.0, -cam_height])]
    for col, vec in enumerate(basis):
        cam = np.array([x_c @ vec, y_c @ vec, z_c @ vec])
        g2i[:, col] = [focal * cam[0] + cx * cam[2], focal * cam[1] + cy * cam[2], cam[2]]
    return GroundHomography(np.linalg.inv(g2i))
