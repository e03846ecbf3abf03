"""Run orchestration shared by the HTTP service and the CLI.

Each entry point takes plain scenarios plus a detector spec, fans the work out
over a thread pool, and returns report rows ready for CSV serialization. The
effective configuration is embedded in every row so that reruns with the same
inputs produce byte-identical reports.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .conventional import (DEFAULT_ALPHAS, DEFAULT_BETAS, _gt_lane_indices,
                           bev_distance, f1, frame_accuracy, greedy_match,
                           pair_accuracies, sweep_params)
from .detectors import DetectionContext, DetectorSpec, detect
from .driving import ClosedLoopConfig, e2e_ld, psld_rollout, simulate_closed_loop
from .errors import InsufficientDataError, LanebenchError, ValidationError
from .scenario import MetricParams, MetricReport, read_report
from .stats import pearson


def detector_from_dict(doc: dict) -> DetectorSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValidationError("detector spec needs at least a 'kind' key")
    return DetectorSpec(kind=doc["kind"], params=dict(doc.get("params", {})),
                        seed=doc.get("seed"), endpoint=doc.get("endpoint"))


def effective_config(**kwargs) -> str:
    """Canonical JSON echo of a run configuration, embedded in every report row."""
    doc = {"artifact_version": __version__}
    doc.update(kwargs)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _pool(workers):
    return ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1)


@dataclass
class RunOutcome:
    rows: list = field(default_factory=list)          # aggregate MetricReport rows
    frame_rows: list = field(default_factory=list)    # per-frame detail tuples
    traces: dict = field(default_factory=dict)        # scenario_id -> rollout trace dict
    failures: dict = field(default_factory=dict)      # scenario_id -> message


def _conventional_one(scenario, spec, params):
    h = scenario.homography
    per_frame = []
    for i, frame in enumerate(scenario.frames):
        ann = frame.annotation
        if ann is None:
            continue
        det = detect(spec, frame.load_image(), DetectionContext(scenario, i))
        acc = frame_accuracy(det.lanes, ann, params.alpha)
        scores = f1(det.lanes, ann, params)
        l1 = l2 = np.nan
        mat = pair_accuracies(det.lanes, ann, params.alpha)
        gt_idx = _gt_lane_indices(ann)
        if mat.size:
            dists = []
            for pi, gi, _acc in greedy_match(mat):
                gt = np.asarray(ann.lane_points(gt_idx[gi]), dtype=float)
                try:
                    dists.append((bev_distance(det.lanes[pi], gt, h, "L1"),
                                  bev_distance(det.lanes[pi], gt, h, "L2")))
                except LanebenchError:
                    pass
            if dists:
                l1 = float(np.mean([d[0] for d in dists]))
                l2 = float(np.mean([d[1] for d in dists]))
        per_frame.append((i, acc, scores["f1"], scores["precision"],
                          scores["recall"], l1, l2))
    if not per_frame:
        raise ValidationError(f"scenario {scenario.id!r} has no annotated frames")
    return per_frame


def eval_conventional(scenarios, spec: DetectorSpec,
                      params: MetricParams | None = None,
                      workers: int | None = None) -> RunOutcome:
    """Accuracy, F1, and BEV distances per scenario (mean over annotated frames)."""
    params = params or MetricParams()
    cfg_str = effective_config(command="eval-conventional", detector=spec.label(),
                               alpha=params.alpha, beta=params.beta)
    out = RunOutcome()
    with _pool(workers) as pool:
        results = list(pool.map(
            lambda s: _run_safely(_conventional_one, s, spec, params), scenarios))
    for scenario, result in zip(scenarios, results):
        if isinstance(result, str):
            out.failures[scenario.id] = result
            continue
        for row in result:
            out.frame_rows.append((scenario.id,) + row)
        cols = np.array([r[1:] for r in result], dtype=float)
        names = ("accuracy", "f1", "precision", "recall", "bev_l1", "bev_l2")
        for j, name in enumerate(names):
            vals = cols[:, j]
            vals = vals[np.isfinite(vals)]
            if not len(vals):
                continue
            out.rows.append(MetricReport(scenario_id=scenario.id, metric=name,
                                         value=float(vals.mean()),
                                         detector=spec.label(), config=cfg_str))
    return out


def _run_safely(fn, *args):
    try:
        return fn(*args)
    except LanebenchError as exc:
        return f"{type(exc).__name__}: {exc}"


def _driving_one(scenario, spec, cfg, mode):
    value, trace = e2e_ld(scenario, spec, cfg)
    psld_values = psld_rollout(scenario, spec, cfg, mode=mode)
    return value, trace, psld_values


def eval_driving(scenarios, spec: DetectorSpec,
                 cfg: ClosedLoopConfig | None = None, mode: str = "benign",
                 workers: int | None = None) -> RunOutcome:
    """Closed-loop maximum deviation plus the per-frame surrogate, per scenario.

    The surrogate is aggregated as the mean over evaluated frames; the
    per-frame series is kept in the trace output.
    """
    cfg = cfg or ClosedLoopConfig()
    cfg_str = effective_config(command="eval-driving", detector=spec.label(),
                               mode=mode, t_e=cfg.sim.t_e, t_p=cfg.sim.t_p,
                               lookahead=cfg.lookahead)
    out = RunOutcome()
    with _pool(workers) as pool:
        results = list(pool.map(
            lambda s: _run_safely(_driving_one, s, spec, cfg, mode), scenarios))
    for scenario, result in zip(scenarios, results):
        if isinstance(result, str):
            out.failures[scenario.id] = result
            continue
        value, trace, psld_values = result
        out.rows.append(MetricReport(scenario_id=scenario.id, metric="e2e_ld",
                                     value=value, detector=spec.label(),
                                     config=cfg_str))
        out.rows.append(MetricReport(scenario_id=scenario.id, metric="psld",
                                     value=float(np.mean(psld_values)),
                                     detector=spec.label(), config=cfg_str))
        doc = trace.to_dict()
        doc["psld_per_frame"] = [float(v) for v in psld_values]
        out.traces[scenario.id] = doc
    return out


def run_sweep(scenarios, spec: DetectorSpec, alphas=DEFAULT_ALPHAS,
              betas=DEFAULT_BETAS, workers: int | None = None):
    """Detector outputs against annotations over the (alpha, beta) grid."""
    def frames_of(scenario):
        pairs = []
        for i, frame in enumerate(scenario.frames):
            if frame.annotation is None:
                continue
            det = detect(spec, frame.load_image(), DetectionContext(scenario, i))
            pairs.append((det.lanes, frame.annotation))
        return pairs
    with _pool(workers) as pool:
        per_scenario = list(pool.map(frames_of, scenarios))
    dataset = [p for chunk in per_scenario for p in chunk]
    if not dataset:
        raise ValidationError("no annotated frames in the scenario set")
    return sweep_params(dataset, alphas, betas)


def sweep_csv(rows) -> str:
    lines = ["alpha,beta,mean_accuracy,mean_f1"]
    for r in rows:
        lines.append(f"{r.alpha:g},{r.beta:g},{r.mean_accuracy:.6f},{r.mean_f1:.6f}")
    return "\n".join(lines) + "\n"


def frame_rows_csv(frame_rows) -> str:
    lines = ["scenario_id,frame_index,accuracy,f1,precision,recall,bev_l1,bev_l2"]
    for sid, i, acc, f, p, r, l1, l2 in frame_rows:
        def fmt(v):
            return "" if not np.isfinite(v) else f"{v:.6f}"
        lines.append(f"{sid},{i},{fmt(acc)},{fmt(f)},{fmt(p)},{fmt(r)},"
                     f"{fmt(l1)},{fmt(l2)}")
    return "\n".join(lines) + "\n"


def run_correlation_suite(cfg: ClosedLoopConfig | None = None,
                          workers: int | None = None) -> RunOutcome:
    """Drive every (scenario, detector) pair of the built-in correlation suite.

    Emits one e2e_ld and one psld row per pair; the pair id doubles as the
    scenario id so the rows join one-to-one downstream.
    """
    from .fixtures import suite_24
    cfg = cfg or ClosedLoopConfig()
    pairs = suite_24()
    out = RunOutcome()
    with _pool(workers) as pool:
        results = list(pool.map(
            lambda p: _run_safely(_driving_one, p[0], p[1], cfg, "benign"), pairs))
    for (scenario, spec), result in zip(pairs, results):
        pair_id = f"{scenario.id}|{spec.label()}"
        if isinstance(result, str):
            out.failures[pair_id] = result
            continue
        value, _, psld_values = result
        cfg_str = effective_config(command="eval-driving", detector=spec.label(),
                                   suite="correlation", t_e=cfg.sim.t_e,
                                   t_p=cfg.sim.t_p, lookahead=cfg.lookahead)
        out.rows.append(MetricReport(scenario_id=pair_id, metric="e2e_ld",
                                     value=value, detector=spec.label(),
                                     config=cfg_str))
        out.rows.append(MetricReport(scenario_id=pair_id, metric="psld",
                                     value=float(np.mean(psld_values)),
                                     detector=spec.label(), config=cfg_str))
    return out


def correlate_rows(rows, pairs=None):
    """Join metric report rows on scenario id and correlate metric pairs.

    Each pair is (metric_x, metric_y); by default every other metric present is
    correlated against the closed-loop deviation metric. Returns (table rows,
    {name: svg}) where table rows are dicts.
    """
    by_metric = {}
    for r in rows:
        by_metric.setdefault(r.metric, {})[r.scenario_id] = r.value
    if pairs is None:
        if "e2e_ld" not in by_metric:
            raise InsufficientDataError("no e2e_ld column to correlate against")
        pairs = [(m, "e2e_ld") for m in sorted(by_metric) if m != "e2e_ld"]
    table, plots = [], {}
    for mx, my in pairs:
        if mx not in by_metric or my not in by_metric:
            raise InsufficientDataError(f"metric column missing: {mx!r} or {my!r}")
        ids = sorted(set(by_metric[mx]) & set(by_metric[my]))
        if len(ids) < 3:
            raise InsufficientDataError(
                f"{len(ids)} joined rows for {mx} vs {my}; need at least 3")
        x = np.array([by_metric[mx][i] for i in ids])
        y = np.array([by_metric[my][i] for i in ids])
        res = pearson(x, y)
        table.append({"metric_x": mx, "metric_y": my, "n": res.n,
                      "r": res.r, "p": res.p, "label": res.label})
        plots[f"{mx}_vs_{my}.svg"] = scatter_svg(x, y, mx, my,
                                                 f"{mx} vs {my} (r={res.r:.3f} {res.label})")
    return table, plots


def correlate_reports(paths, pairs=None):
    rows = []
    for p in paths:
        rows.extend(read_report(p))
    return correlate_rows(rows, pairs)


def correlation_csv(table) -> str:
    lines = ["metric_x,metric_y,n,r,p,label"]
    for t in table:
        lines.append(f"{t['metric_x']},{t['metric_y']},{t['n']},"
                     f"{t['r']:.6f},{t['p']:.6g},{t['label']}")
    return "\n".join(lines) + "\n"


def scatter_svg(x, y, xlabel: str, ylabel: str, title: str = "",
                size: int = 420) -> str:
    """Static scatter plot; no plotting dependency, deterministic output."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pad, plot = 50, size - 100
    def scale(v):
        lo, hi = float(v.min()), float(v.max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        margin = 0.05 * (hi - lo)
        return lo - margin, hi + margin
    x0, x1 = scale(x)
    y0, y1 = scale(y)
    def px(v):
        return pad + (v - x0) / (x1 - x0) * plot
    def py(v):
        return pad + plot - (v - y0) / (y1 - y0) * plot
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>',
             f'<rect x="{pad}" y="{pad}" width="{plot}" height="{plot}" '
             'fill="none" stroke="#444"/>']
    for vx, vy in zip(x, y):
        parts.append(f'<circle cx="{px(vx):.2f}" cy="{py(vy):.2f}" r="3.5" '
                     'fill="#1f77b4" fill-opacity="0.8"/>')
    parts.append(f'<text x="{size / 2:.0f}" y="{size - 10}" text-anchor="middle" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="14" y="{size / 2:.0f}" text-anchor="middle" '
                 f'font-size="13" transform="rotate(-90 14 {size / 2:.0f})">{ylabel}</text>')
    if title:
        parts.append(f'<text x="{size / 2:.0f}" y="28" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    for lo, hi, at, vert in ((x0, x1, size - 30, True), (y0, y1, 32, False)):
        for frac in (0.0, 0.5, 1.0):
            v = lo + frac * (hi - lo)
            if vert:
                parts.append(f'<text x="{px(v):.0f}" y="{at}" text-anchor="middle" '
                             f'font-size="10">{v:.3g}</text>')
            else:
                parts.append(f'<text x="{at}" y="{py(v):.0f}" text-anchor="end" '
                             f'font-size="10">{v:.3g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def synth_frames(scenario, spec: DetectorSpec, steps: int,
                 cfg: ClosedLoopConfig | None = None,
                 initial_offset: float = 0.0):
    """Detection-steered rollout capturing each synthesized frame as PNG bytes."""
    import cv2
    cfg = cfg or ClosedLoopConfig()
    _, frames = simulate_closed_loop(scenario, spec, cfg, steps,
                                     initial_offset=initial_offset,
                                     collect_frames=True)
    encoded = []
    for i, img in enumerate(frames):
        ok, buf = cv2.imencode(".png", img)
        if not ok:
            raise LanebenchError("png encoding failed")
        encoded.append((f"frame_{i:04d}.png", buf.tobytes()))
    return encoded
