"""Expected-road-center objective values for the four detector output representations.

These score where the detected lane structure places the road center; they are
the scoring side of adversarial patch generation and need no model gradients.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ProbabilityMaps:
    """L lane-existence probability maps, each H rows x W columns, values in [0, 1]."""
    maps: np.ndarray = field()   # (L, H, W)

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=float)
        if m.ndim != 3 or min(m.shape) < 1:
            raise ValidationError("probability maps must have shape (L, H, W)")
        if not np.all(np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
            raise ValidationError("probabilities must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "maps", m)


@dataclass(frozen=True)
class PolynomialLanes:
    """L polynomial lanes (coefficients highest degree first) over sample rows."""
    coeffs: np.ndarray = field()       # (L, d + 1)
    sample_rows: np.ndarray = field()  # normalized y values

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        rows = np.asarray(self.sample_rows, dtype=float)
        if c.ndim != 2 or len(c) < 1:
            raise ValidationError("coefficients must have shape (L, d + 1)")
        if rows.ndim != 1 or len(rows) < 1:
            raise ValidationError("at least one sample row required")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(rows))):
            raise ValidationError("non-finite polynomial lane data")
        c.setflags(write=False)
        rows.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "sample_rows", rows)

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1


@dataclass(frozen=True)
class Anchor:
    xs: tuple        # x-values over the anchor's row-index set
    offsets: tuple   # per-row offsets
    prob: float

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        offsets = tuple(float(v) for v in self.offsets)
        if len(xs) < 1 or len(xs) != len(offsets):
            raise ValidationError("anchor needs matching non-empty xs and offsets")
        if not (0.0 <= self.prob <= 1.0):
            raise ValidationError("anchor probability must be in [0, 1]")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "offsets", offsets)


@dataclass(frozen=True)
class AnchorSet:
    anchors: tuple

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))


def erc_segmentation(maps: ProbabilityMaps, row_normalized: bool = False) -> float:
    """Probability-weighted mean column of the maps, in normalized image width.

    Column i (1-based) contributes at (i - 0.5) / W. The plain form divides by
    L*H only, so its value scales with total probability mass; it equals the
    0.5-at-center intuition only when each row's probabilities sum to 1. The
    row_normalized variant divides each row by its mass first (non-standard,
    clearly flagged in reports).
    """
    m = maps.maps
    length, height, width = m.shape
    cols = (np.arange(width) + 0.5) / width
    if row_normalized:
        mass = m.sum(axis=2, keepdims=True)
        m = np.divide(m, mass, out=np.zeros_like(m), where=mass > 0)
    return float((m * cols).sum() / (length * height))


def erc_curve(lanes: PolynomialLanes) -> float:
    """Mean polynomial evaluation over lanes and sample rows."""
    rows = lanes.sample_rows
    # powers: highest degree first, matching the coefficient layout
    powers = rows[None, :] ** np.arange(lanes.degree, -1, -1)[:, None]
    vals = lanes.coeffs @ powers   # (L, |rows|)
    return float(vals.mean())


def erc_anchor(anchors: AnchorSet) -> float:
    """Probability-weighted sum of per-anchor mean x positions (unnormalized)."""
    total = 0.0
    for a in anchors.anchors:
        mean_x = float(np.mean(np.asarray(a.xs) + np.asarray(a.offsets)))
        total += mean_x * a.prob
    return total
