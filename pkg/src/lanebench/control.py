"""MPC path following: pick the steering command that best tracks waypoints.

The decision vector is the steering-rate sequence over the horizon; it is
minimized by fixed-iteration projected gradient descent with central
finite-difference gradients. Deterministic for fixed inputs and config.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_MAX_STEER, VehicleState
from .errors import ValidationError


@dataclass(frozen=True)
class PathWaypoints:
    """Ordered (x, y) waypoints in the current vehicle frame, meters."""
    points: np.ndarray = field()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValidationError("path needs at least 2 waypoints")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("non-finite waypoint")
        dx = np.diff(pts[:, 0])
        if np.any(dx < 0):
            raise ValidationError("waypoint x must be monotone non-decreasing")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) <= 0):
            raise ValidationError("consecutive waypoints must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class ControllerConfig:
    horizon_steps: int = 20
    step_dt: float = 0.05
    w_lat: float = 1.0
    w_head: float = 2.0
    w_rate: float = 50.0
    solver_iters: int = 40
    fd_step: float = 1e-5                       # finite-difference step, radians
    rate_bound: float = math.radians(1.25)      # steering change per control period
    max_steer: float = DEFAULT_MAX_STEER

    def __post_init__(self):
        if self.horizon_steps < 1 or self.step_dt <= 0:
            raise ValidationError("invalid horizon")
        if min(self.w_lat, self.w_head, self.w_rate) < 0 or \
                max(self.w_lat, self.w_head, self.w_rate) <= 0:
            raise ValidationError("at least one non-negative weight must be positive")
        if self.solver_iters < 1:
            raise ValidationError("solver_iters must be >= 1")


@dataclass(frozen=True)
class SteeringPlan:
    command: float           # steering angle for the next control period, radians
    extrapolated: bool       # path was shorter than the horizon
    cost: float


def _extrap_interp(xq, px, py):
    """np.interp with linear extrapolation from the end segments."""
    y = np.interp(xq, px, py)
    if px[-1] > px[0]:
        m_lo = (py[1] - py[0]) / (px[1] - px[0])
        m_hi = (py[-1] - py[-2]) / (px[-1] - px[-2])
        lo = xq < px[0]
        hi = xq > px[-1]
        y = np.where(lo, py[0] + m_lo * (xq - px[0]), y)
        y = np.where(hi, py[-1] + m_hi * (xq - px[-1]), y)
    return y


def _dedupe_x(px, py):
    """Drop waypoints sharing an x coordinate (keep the first) so interp is well-posed."""
    keep = np.concatenate([[True], np.diff(px) > 0])
    return px[keep], py[keep]


try:
    from numba import njit as _njit
except ImportError:      # pragma: no cover - numba is an optional accelerator
    _njit = None


def _ref_at(x, px, py, pheading, m_lo, m_hi, h_lo, h_hi):
    """Path lateral position and heading at x, linear-extrapolated beyond the ends."""
    idx = np.clip(np.searchsorted(px, x) - 1, 0, len(px) - 2)
    x0 = px[idx]
    t = (x - x0) / (px[idx + 1] - x0)
    y = py[idx] + t * (py[idx + 1] - py[idx])
    head = pheading[idx] + t * (pheading[idx + 1] - pheading[idx])
    lo = x < px[0]
    hi = x > px[-1]
    if np.any(lo):
        y = np.where(lo, py[0] + m_lo * (x - px[0]), y)
        head = np.where(lo, h_lo, head)
    if np.any(hi):
        y = np.where(hi, py[-1] + m_hi * (x - px[-1]), y)
        head = np.where(hi, h_hi, head)
    return y, head


def _rollout_cost(rates, delta0, v, wheelbase, cfg, path_tab):
    """Vectorized cost of a batch of steering-rate sequences, shape (B, N)."""
    b, n = rates.shape
    dt = cfg.step_dt
    x = np.zeros(b)
    y = np.zeros(b)
    psi = np.zeros(b)
    delta = np.full(b, delta0)
    cost = np.zeros(b)
    for k in range(n):
        rate = np.clip(rates[:, k], -cfg.rate_bound, cfg.rate_bound)
        new_delta = np.clip(delta + rate, -cfg.max_steer, cfg.max_steer)
        applied = new_delta - delta
        delta = new_delta
        x = x + v * np.cos(psi) * dt
        y = y + v * np.sin(psi) * dt
        psi = psi + (v / wheelbase) * np.tan(delta) * dt
        ref_y, ref_head = _ref_at(x, *path_tab)
        e_lat = y - ref_y
        e_head = psi - ref_head
        cost += cfg.w_lat * e_lat ** 2 + cfg.w_head * e_head ** 2 + cfg.w_rate * applied ** 2
    return cost


def _rollout_cost_scalar(rates, delta0, v, wheelbase, dt, w_lat, w_head, w_rate,
                         rate_bound, max_steer, px, py, phead, m_lo, m_hi):
    """Scalar-loop twin of _rollout_cost, JIT-compiled when numba is available."""
    b, n = rates.shape
    npts = len(px)
    out = np.zeros(b)
    for i in range(b):
        x = 0.0
        y = 0.0
        psi = 0.0
        delta = delta0
        cost = 0.0
        for k in range(n):
            rate = min(rate_bound, max(-rate_bound, rates[i, k]))
            new_delta = min(max_steer, max(-max_steer, delta + rate))
            applied = new_delta - delta
            delta = new_delta
            x = x + v * math.cos(psi) * dt
            y = y + v * math.sin(psi) * dt
            psi = psi + (v / wheelbase) * math.tan(delta) * dt
            if x < px[0]:
                ref_y = py[0] + m_lo * (x - px[0])
                ref_head = phead[0]
            elif x > px[-1]:
                ref_y = py[-1] + m_hi * (x - px[-1])
                ref_head = phead[-1]
            else:
                j = np.searchsorted(px, x) - 1
                if j < 0:
                    j = 0
                elif j > npts - 2:
                    j = npts - 2
                t = (x - px[j]) / (px[j + 1] - px[j])
                ref_y = py[j] + t * (py[j + 1] - py[j])
                ref_head = phead[j] + t * (phead[j + 1] - phead[j])
            e_lat = y - ref_y
            e_head = psi - ref_head
            cost += w_lat * e_lat * e_lat + w_head * e_head * e_head \
                + w_rate * applied * applied
        out[i] = cost
    return out


if _njit is not None:
    _rollout_cost_scalar = _njit(cache=True)(_rollout_cost_scalar)


def plan_steering(s: VehicleState, path: PathWaypoints, cfg: ControllerConfig,
                  wheelbase: float) -> SteeringPlan:
    """Return the first steering angle of the cost-minimizing horizon plan.

    The path is given in the current vehicle frame, so the rollout starts at the
    origin with zero heading; only the current steering angle and speed carry over.
    """
    px, py = _dedupe_x(path.points[:, 0], path.points[:, 1])
    if len(px) < 2:
        raise ValidationError("path degenerates to a single x coordinate")
    slope = np.gradient(py, px)
    pheading = np.arctan(slope)
    m_lo = (py[1] - py[0]) / (px[1] - px[0])
    m_hi = (py[-1] - py[-2]) / (px[-1] - px[-2])
    path_tab = (px, py, pheading, m_lo, m_hi, pheading[0], pheading[-1])

    n = cfg.horizon_steps
    rates = np.zeros(n)
    if _njit is not None:
        scalar_args = (float(s.delta), float(s.v), float(wheelbase), cfg.step_dt,
                       cfg.w_lat, cfg.w_head, cfg.w_rate, cfg.rate_bound,
                       cfg.max_steer, px, py, pheading, m_lo, m_hi)

        def cost_fn(batch):
            return _rollout_cost_scalar(batch, *scalar_args)
    else:
        vec_args = (s.delta, s.v, wheelbase, cfg, path_tab)

        def cost_fn(batch):
            return _rollout_cost(batch, *vec_args)

    cost = cost_fn(rates[None, :])[0]
    lr = 0.05
    h = cfg.fd_step
    eye = np.eye(n)
    for _ in range(cfg.solver_iters):
        batch = np.vstack([rates[None, :] + h * eye, rates[None, :] - h * eye])
        costs = cost_fn(batch)
        grad = (costs[:n] - costs[n:]) / (2.0 * h)
        trial = np.clip(rates - lr * grad, -cfg.rate_bound, cfg.rate_bound)
        trial_cost = cost_fn(trial[None, :])[0]
        if trial_cost < cost:
            rates, cost = trial, trial_cost
        else:
            lr *= 0.5
            if lr < 1e-10:   # step size exhausted; further iterations are no-ops
                break
    command = float(np.clip(s.delta + np.clip(rates[0], -cfg.rate_bound, cfg.rate_bound),
                            -cfg.max_steer, cfg.max_steer))
    reach = s.v * n * cfg.step_dt
    extrapolated = bool(px[-1] < reach)
    return SteeringPlan(command=command, extrapolated=extrapolated, cost=float(cost))
