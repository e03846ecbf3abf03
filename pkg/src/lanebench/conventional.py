"""TuSimple-style accuracy and F1 with line matching, parameter sweeps, and BEV distances."""

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .geometry import GroundHomography, project_lanes_to_bev
from .scenario import SENTINEL, LaneAnnotation, MetricParams

DEFAULT_ALPHAS = tuple(range(5, 51, 5))                    # every 5 px, 5..50
DEFAULT_BETAS = tuple(round(0.5 + 0.05 * i, 2) for i in range(9))  # 0.50..0.90


def _pred_x_at_rows(pred: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Interpolate a predicted polyline's x at the given image rows.

    Linear between adjacent points; rows outside the polyline's vertical span
    return NaN (counted as misses).
    """
    pts = np.asarray(pred, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.full(len(rows), np.nan)
    order = np.argsort(pts[:, 1])
    ys = pts[order, 1]
    xs = pts[order, 0]
    out = np.interp(rows, ys, xs)
    outside = (rows < ys[0]) | (rows > ys[-1])
    return np.where(outside, np.nan, out)


def line_accuracy(pred, h_samples, gt_xs, alpha: float) -> float:
    """Fraction of annotated rows where the prediction is within alpha pixels."""
    rows = np.asarray(h_samples, dtype=float)
    gt = np.asarray(gt_xs, dtype=float)
    valid = gt != SENTINEL
    if not np.any(valid):
        raise UndefinedMetricError("ground-truth lane has no annotated rows")
    px = _pred_x_at_rows(pred, rows[valid])
    hits = np.abs(px - gt[valid]) <= alpha
    hits = np.where(np.isnan(px), False, hits)
    return float(np.sum(hits)) / int(np.sum(valid))


def _gt_lane_indices(ann: LaneAnnotation):
    idxs = [i for i in range(len(ann.lanes))
            if any(x != SENTINEL for x in ann.lanes[i])]
    if not idxs:
        raise UndefinedMetricError("annotation has no non-empty ground-truth lane")
    return idxs


def pair_accuracies(preds, ann: LaneAnnotation, alpha: float) -> np.ndarray:
    """(n_pred, n_gt) matrix of line accuracies over non-empty gt lanes."""
    gt_idx = _gt_lane_indices(ann)
    mat = np.zeros((len(preds), len(gt_idx)))
    for i, pred in enumerate(preds):
        for j, g in enumerate(gt_idx):
            mat[i, j] = line_accuracy(pred, ann.h_samples, ann.lanes[g], alpha)
    return mat


def frame_accuracy(preds, ann: LaneAnnotation, alpha: float) -> float:
    """Mean over gt lanes of the best-matching prediction's accuracy (0 if none)."""
    gt_idx = _gt_lane_indices(ann)
    if len(preds) == 0:
        return 0.0
    mat = pair_accuracies(preds, ann, alpha)
    return float(np.mean(np.max(mat, axis=0)))


def greedy_match(mat: np.ndarray):
    """One-to-one matching in descending pair-accuracy order."""
    pairs = []
    used_pred = set()
    used_gt = set()
    order = np.dstack(np.unravel_index(np.argsort(-mat, axis=None, kind="stable"),
                                       mat.shape))[0]
    for i, j in order:
        if i in used_pred or j in used_gt:
            continue
        used_pred.add(int(i))
        used_gt.add(int(j))
        pairs.append((int(i), int(j), float(mat[i, j])))
    return pairs


def f1(preds, ann: LaneAnnotation, params: MetricParams) -> dict:
    """Lane-level precision/recall/F1 with greedy best-accuracy matching."""
    n_gt = len(_gt_lane_indices(ann))
    n_pred = len(preds)
    if n_pred == 0:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0, "tp": 0}
    mat = pair_accuracies(preds, ann, params.alpha)
    tp = sum(1 for _, _, acc in greedy_match(mat) if acc >= params.beta)
    precision = tp / n_pred
    recall = tp / n_gt
    if precision == 0.0 or recall == 0.0:
        score = 0.0
    else:
        score = 2.0 / (1.0 / precision + 1.0 / recall)
    return {"precision": precision, "recall": recall, "f1": score, "tp": tp}


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    beta: float
    mean_accuracy: float
    mean_f1: float


def sweep_params(dataset, alphas=DEFAULT_ALPHAS, betas=DEFAULT_BETAS) -> list[SweepRow]:
    """Mean accuracy/F1 over (preds, annotation) pairs for every grid point.

    Rows are sorted by (alpha, beta); the default grids produce 90 rows.
    """
    if not alphas or not betas:
        raise ValidationError("sweep grids must be non-empty")
    if not dataset:
        raise ValidationError("sweep needs at least one annotated frame")
    rows = []
    for alpha in sorted(alphas):
        accs = [frame_accuracy(preds, ann, alpha) for preds, ann in dataset]
        for beta in sorted(betas):
            params = MetricParams(alpha=alpha, beta=beta)
            f1s = [f1(preds, ann, params)["f1"] for preds, ann in dataset]
            rows.append(SweepRow(alpha=float(alpha), beta=float(beta),
                                 mean_accuracy=float(np.mean(accs)),
                                 mean_f1=float(np.mean(f1s))))
    return rows


def bev_distance(pred, gt, h: GroundHomography, norm: str = "L1",
                 max_range: float = 50.0) -> float:
    """Lateral distance between two lines after BEV projection.

    Both polylines are resampled at 1 m longitudinal spacing over their common
    support clipped to max_range; L1 is the mean absolute lateral difference,
    L2 the root-mean-square.
    """
    if norm not in ("L1", "L2"):
        raise ValidationError(f"unknown norm: {norm!r}")
    bev, _ = project_lanes_to_bev([pred, gt], h)
    curves = []
    for line in bev:
        pts = line[np.argsort(line[:, 0])]
        if len(pts) < 2:
            raise ValidationError("line projects to fewer than 2 BEV points")
        curves.append(pts)
    lo = max(curves[0][0, 0], curves[1][0, 0])
    hi = min(curves[0][-1, 0], curves[1][-1, 0], max_range)
    if hi <= lo:
        raise ValidationError("lines share no longitudinal support within range")
    grid = np.arange(np.ceil(lo), hi + 1e-9, 1.0)
    if len(grid) < 2:
        grid = np.array([lo, hi])
    d = (np.interp(grid, curves[0][:, 0], curves[0][:, 1])
         - np.interp(grid, curves[1][:, 0], curves[1][:, 1]))
    if norm == "L1":
        return float(np.mean(np.abs(d)))
    return float(np.sqrt(np.mean(d ** 2)))
