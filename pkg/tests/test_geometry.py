import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanebench.errors import (DegenerateProjectionError, EmptyProjectionError,
                              ValidationError)
from lanebench.geometry import (GroundHomography, PoseDelta, adapt_frame_geometry,
                                compose_pose_warp, ground_to_image, image_to_ground,
                                pinhole_ground_homography, project_lanes_to_bev,
                                render_patch, synthesize_frame)
from lanebench.fixtures import fixture_homography, render_frame
from lanebench.paths import straight_center_path


@pytest.fixture(scope="module")
def h():
    return fixture_homography()


@pytest.fixture(scope="module")
def road(h):
    return render_frame(h, straight_center_path(120.0, 0.0).points)


def test_normalized_storage(h):
    assert h.matrix[2, 2] == pytest.approx(1.0)
    assert not h.matrix.flags.writeable


def test_rejects_singular_matrix():
    with pytest.raises(ValidationError):
        GroundHomography(np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        GroundHomography(np.full((3, 3), np.nan))


def test_round_trip_fixed_point(h):
    px = ground_to_image(h, np.array([10.0, 0.0]))
    back = image_to_ground(h, px)
    assert np.allclose(back, [10.0, 0.0], atol=1e-6)


@given(st.floats(4.0, 120.0), st.floats(-8.0, 8.0))
@settings(max_examples=100, deadline=None)
def test_round_trip_everywhere(x, y):
    h = fixture_homography()
    back = image_to_ground(h, ground_to_image(h, np.array([x, y])))
    assert np.allclose(back, [x, y], atol=1e-6)


def test_horizon_pixel_degenerate(h):
    # solve the projective w term for zero to land exactly on the horizon row
    m = h.matrix
    u = 320.0
    v = -(m[2, 0] * u + m[2, 2]) / m[2, 1]
    with pytest.raises(DegenerateProjectionError):
        image_to_ground(h, np.array([u, v]))


def test_pinhole_calibration_point():
    h = pinhole_ground_homography(600.0, 320.0, 240.0, 1.5, 0.04)
    # a surveyed lane-marking corner 12 m ahead, 1.85 m left
    px = ground_to_image(h, np.array([12.0, 1.85]))
    assert np.allclose(image_to_ground(h, px), [12.0, 1.85], atol=0.05)
    # straight ahead projects onto the image centerline
    assert ground_to_image(h, np.array([20.0, 0.0]))[0] == pytest.approx(320.0, abs=1e-6)


def test_identity_warp(h):
    w = compose_pose_warp(h, PoseDelta())
    assert np.allclose(w / w[2, 2], np.eye(3), atol=1e-12)


def test_forward_delta_shifts_ground_distance(h):
    w = compose_pose_warp(h, PoseDelta(dx=1.0))
    src_px = np.append(ground_to_image(h, np.array([10.0, 0.0])), 1.0)
    out = w @ src_px
    expected = ground_to_image(h, np.array([9.0, 0.0]))
    assert np.allclose(out[:2] / out[2], expected, atol=1e-6)


def test_lateral_delta_shifts_lane(h):
    w = compose_pose_warp(h, PoseDelta(dy=0.5))
    src_px = np.append(ground_to_image(h, np.array([15.0, 1.8])), 1.0)
    out = w @ src_px
    expected = ground_to_image(h, np.array([15.0, 1.3]))
    assert np.allclose(out[:2] / out[2], expected, atol=1e-6)


def test_warp_composition(h):
    a = PoseDelta(dx=0.4, dy=0.1, dpsi=0.01)
    b = PoseDelta(dx=0.3, dy=-0.2, dpsi=-0.02)
    import math
    # rigid composition of applying b after a (small-angle exact formula)
    ca, sa = math.cos(a.dpsi), math.sin(a.dpsi)
    dx = a.dx + b.dx * ca - b.dy * sa
    dy = a.dy + b.dx * sa + b.dy * ca
    combined = PoseDelta(dx=dx, dy=dy, dpsi=a.dpsi + b.dpsi)
    left = compose_pose_warp(h, b) @ compose_pose_warp(h, a)
    right = compose_pose_warp(h, combined)
    assert np.linalg.norm(left / left[2, 2] - right / right[2, 2]) < 1e-9


def test_zero_delta_bit_identical(road, h):
    out = synthesize_frame(road, h, PoseDelta())
    assert out is not road
    assert np.array_equal(out, road)


def _psnr(a, b):
    err = np.mean((a.astype(float) - b.astype(float)) ** 2)
    if err == 0:
        return np.inf
    return 10.0 * np.log10(255.0 ** 2 / err)


def test_warp_round_trip_psnr(road, h):
    delta = PoseDelta(dx=0.7, dy=0.3, dpsi=0.01)
    inv = PoseDelta(dx=-0.7, dy=-0.3, dpsi=-0.01)
    # inverse of a rigid motion is not the negated delta unless dpsi is small;
    # 0.01 rad keeps the approximation below the resampling noise floor
    back = synthesize_frame(synthesize_frame(road, h, delta), h, inv)
    interior = (slice(60, 420), slice(60, 580))
    assert _psnr(back[interior], road[interior]) > 30.0


def test_patch_corner_projection(road, h):
    patch = np.zeros((16, 8, 4), dtype=np.uint8)
    patch[:, :, :3] = 128
    patch[:, :, 3] = 255
    out, offscreen = render_patch(road, h, patch, (7.0, 3.6, 36.0))
    assert not offscreen
    assert not np.array_equal(out, road)
    # pixels whose ground projection is outside the rectangle stay untouched
    corners = np.array([[7.0, 1.8], [7.0, -1.8], [43.0, -1.8], [43.0, 1.8]])
    corner_px = ground_to_image(h, corners)
    probe = ground_to_image(h, np.array([[5.0, 0.0], [45.0, 0.0], [20.0, 3.5]]))
    for u, v in np.round(probe).astype(int):
        assert np.array_equal(out[v, u], road[v, u])
    # the composited area reaches the projected rectangle corners
    changed = np.argwhere(np.any(out != road, axis=2))  # (row, col)
    for u, v in corner_px:
        d = np.min(np.hypot(changed[:, 1] - u, changed[:, 0] - v))
        assert d <= 1.5


def test_transparent_patch_noop(road, h):
    patch = np.zeros((4, 4, 4), dtype=np.uint8)
    out, offscreen = render_patch(road, h, patch, (7.0, 3.6, 36.0))
    assert np.array_equal(out, road)
    assert not offscreen


def test_patch_behind_camera_noop(road, h):
    patch = np.full((4, 4, 4), 255, dtype=np.uint8)
    out, offscreen = render_patch(road, h, patch, (-5.0, 3.6, 2.0))
    assert offscreen
    assert out is road


def test_adapt_identity(road):
    height, width = road.shape[:2]
    out = adapt_frame_geometry(road, (0, 0, width, height), (width, height))
    assert np.array_equal(out, road)


def test_adapt_downscale_checkerboard():
    tile = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    board = np.kron(np.ones((32, 32), dtype=np.uint8), tile)
    img = np.stack([board] * 3, axis=2)
    out = adapt_frame_geometry(img, (0, 0, 64, 64), (32, 32))
    # a 2x box downscale of an alternating pattern lands on the mean
    assert abs(out.astype(float).mean() - 127.5) <= 1.0


def test_adapt_invalid_crop(road):
    with pytest.raises(ValidationError):
        adapt_frame_geometry(road, (10, 10, 10, 20), (5, 5))
    with pytest.raises(ValidationError):
        adapt_frame_geometry(road, (0, 0, 10, 10), (0, 5))


def test_bev_projection_collinear(h):
    xs = np.linspace(6.0, 60.0, 25)
    px = ground_to_image(h, np.stack([xs, np.full_like(xs, 1.85)], axis=1))
    bev, dropped = project_lanes_to_bev([px], h)
    assert dropped == 0
    lat = bev[0][:, 1]
    assert np.sqrt(np.mean((lat - lat.mean()) ** 2)) < 0.02


def test_bev_empty_list(h):
    bev, dropped = project_lanes_to_bev([], h)
    assert bev == [] and dropped == 0


def _horizon_pixel(h, u):
    m = h.matrix
    return [u, -(m[2, 0] * u + m[2, 2]) / m[2, 1]]


def test_bev_drops_above_horizon(h):
    xs = np.linspace(6.0, 60.0, 10)
    px = ground_to_image(h, np.stack([xs, np.zeros_like(xs)], axis=1))
    px[0] = _horizon_pixel(h, 320.0)   # push one point onto the horizon
    bev, dropped = project_lanes_to_bev([px], h)
    assert dropped == 1
    assert len(bev[0]) == 9


def test_bev_all_degenerate_raises(h):
    bad = np.array([_horizon_pixel(h, 300.0), _horizon_pixel(h, 340.0)])
    with pytest.raises(EmptyProjectionError):
        project_lanes_to_bev([bad], h)


def test_pose_delta_validation():
    with pytest.raises(ValidationError):
        PoseDelta(dpsi=2.0)
    with pytest.raises(ValidationError):
        PoseDelta(dx=float("nan"))
