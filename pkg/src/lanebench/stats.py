"""Pearson correlation with two-sided significance and star labeling."""

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import InsufficientDataError, ValidationError

# significance legend: not significant above 0.05, then one/two/three stars
STAR_THRESHOLDS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


def significance_label(p: float) -> str:
    for threshold, label in STAR_THRESHOLDS:
        if p <= threshold:
            return label
    return "ns"


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p: float
    n: int
    label: str


def pearson(x, y) -> CorrelationResult:
    """Sample Pearson r with an exact two-sided t-test p value (n - 2 dof)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValidationError("series must have equal length")
    n = len(x)
    if n < 3:
        raise InsufficientDataError(f"need at least 3 samples, got {n}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValidationError("correlation undefined for a constant series")
    xc = x - x.mean()
    yc = y - y.mean()
    r = float(np.sum(xc * yc) / np.sqrt(np.sum(xc ** 2) * np.sum(yc ** 2)))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * np.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * sps.t.sf(abs(t), df=n - 2))
    return CorrelationResult(r=r, p=p, n=n, label=significance_label(p))
