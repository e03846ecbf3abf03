"""Scenario ingestion: TuSimple line-JSON, scenario manifests, ego-line selection, CSV reports."""

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import ParseError, SideMissingError, ValidationError
from .geometry import GroundHomography
from .paths import CenterPath, arc_center_path, straight_center_path

SENTINEL = -2  # TuSimple "no point at this row"

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class LaneAnnotation:
    h_samples: tuple     # image rows, strictly increasing
    lanes: tuple         # per-lane x lists aligned to h_samples; -2 = missing

    def __post_init__(self):
        hs = tuple(int(v) for v in self.h_samples)
        if any(b <= a for a, b in zip(hs, hs[1:])):
            raise ValidationError("h_samples must be strictly increasing")
        lanes = tuple(tuple(float(x) for x in lane) for lane in self.lanes)
        for i, lane in enumerate(lanes):
            if len(lane) != len(hs):
                raise ValidationError(f"lane {i} length {len(lane)} != |h_samples| {len(hs)}")
            if any(not math.isfinite(x) for x in lane):
                raise ValidationError(f"non-finite x in lane {i}")
        object.__setattr__(self, "h_samples", hs)
        object.__setattr__(self, "lanes", lanes)

    def lane_points(self, idx):
        """Non-sentinel (x, row) points of one lane."""
        pts = [(x, y) for x, y in zip(self.lanes[idx], self.h_samples) if x != SENTINEL]
        return np.array(pts, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    timestamp: float
    image_ref: object            # file path or ndarray
    annotation: LaneAnnotation | None = None

    def load_image(self) -> np.ndarray:
        if isinstance(self.image_ref, np.ndarray):
            return self.image_ref
        img = cv2.imread(str(self.image_ref), cv2.IMREAD_COLOR)
        if img is None:
            raise ValidationError(f"cannot read image: {self.image_ref}")
        return img


@dataclass(frozen=True)
class DrivingLog:
    x: np.ndarray       # meters, local ground frame
    y: np.ndarray
    psi: np.ndarray     # radians
    v: np.ndarray       # m/s
    delta: np.ndarray   # steering, radians

    def __post_init__(self):
        arrays = {}
        n = None
        for name in ("x", "y", "psi", "v", "delta"):
            a = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"non-finite values in log field {name}")
            if n is None:
                n = len(a)
            elif len(a) != n:
                raise ValidationError("driving log fields must have equal length")
            a.setflags(write=False)
            arrays[name] = a
        if np.any(arrays["v"] < 0):
            raise ValidationError("speed must be non-negative")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    def __len__(self):
        return len(self.x)

    def pose(self, i):
        return (self.x[i], self.y[i]), self.psi[i]


@dataclass(frozen=True)
class Scenario:
    id: str
    frames: tuple                 # FrameRecord, 20 Hz nominal
    log: DrivingLog
    homography: GroundHomography
    center: CenterPath | None = None
    lane_width: float = 3.7

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) != len(self.log):
            raise ValidationError(
                f"frame count {len(frames)} != log length {len(self.log)}")
        ts = [f.timestamp for f in frames]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValidationError("frame timestamps must be non-decreasing")
        object.__setattr__(self, "frames", frames)

    @property
    def frame_rate(self) -> float:
        return 20.0


@dataclass(frozen=True)
class MetricParams:
    alpha: float = 20.0   # pixel threshold
    beta: float = 0.85    # line-accuracy threshold for a true positive

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if not (0 < self.beta <= 1):
            raise ValidationError("beta must be in (0, 1]")


@dataclass(frozen=True)
class MetricReport:
    scenario_id: str
    metric: str
    value: float
    detector: str = ""
    config: str = ""      # provenance: JSON-encoded effective configuration
    flags: str = ""


def load_tusimple(path) -> list[FrameRecord]:
    """Parse TuSimple line-JSON: one record per line with lanes/h_samples/raw_file."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            try:
                ann = LaneAnnotation(h_samples=obj["h_samples"], lanes=obj["lanes"])
            except KeyError as exc:
                raise ParseError(f"{path}:{lineno}: missing key {exc}") from exc
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            records.append(FrameRecord(
                frame_index=len(records),
                timestamp=len(records) / 20.0,
                image_ref=obj.get("raw_file", ""),
                annotation=ann,
            ))
    return records


def _center_from_manifest(spec) -> CenterPath:
    if "points" in spec:
        return CenterPath(np.asarray(spec["points"], dtype=float))
    kind = spec.get("kind")
    length = float(spec.get("length", 100.0))
    if kind == "straight":
        return straight_center_path(length, y=float(spec.get("y", 0.0)),
                                    x0=float(spec.get("x0", 0.0)))
    if kind == "arc":
        return arc_center_path(length, float(spec["curvature"]))
    raise ValidationError(f"unknown center path kind: {kind!r}")


def load_scenario(manifest_path) -> Scenario:
    """Load and fully validate a scenario directory from its manifest JSON."""
    manifest_path = os.fspath(manifest_path)
    base = os.path.dirname(manifest_path)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: malformed JSON: {exc}") from exc

    version = doc.get("format_version")
    if version != MANIFEST_VERSION:
        raise ValidationError(f"unsupported manifest format_version: {version!r}")
    hmg = np.asarray(doc["homography"], dtype=float)
    if hmg.size != 9:
        raise ValidationError("homography must have 9 row-major entries")
    homography = GroundHomography(hmg.reshape(3, 3))

    frames = []
    for i, fr in enumerate(doc["frames"]):
        img_path = os.path.join(base, fr["file"])
        if not os.path.exists(img_path):
            raise ValidationError(f"frame image missing: {img_path}")
        ann = None
        if fr.get("annotation") is not None:
            ann = LaneAnnotation(h_samples=fr["annotation"]["h_samples"],
                                 lanes=fr["annotation"]["lanes"])
        frames.append(FrameRecord(frame_index=i,
                                  timestamp=float(fr.get("timestamp", i / 20.0)),
                                  image_ref=img_path, annotation=ann))

    log_rows = doc["log"]
    log = DrivingLog(
        x=[r["x"] for r in log_rows], y=[r["y"] for r in log_rows],
        psi=[r["psi"] for r in log_rows], v=[r["v"] for r in log_rows],
        delta=[r.get("delta", 0.0) for r in log_rows],
    )
    center = None
    if doc.get("center") is not None:
        center = _center_from_manifest(doc["center"])
    return Scenario(id=doc.get("id", os.path.basename(base) or "scenario"),
                    frames=frames, log=log, homography=homography, center=center,
                    lane_width=float(doc.get("lane_width", 3.7)))


def select_ego_lines(annotation: LaneAnnotation, center_x: float):
    """Pick the ego-left and ego-right lanes by x at each lane's lowest annotated row.

    Left: greatest such x < center_x; right: smallest such x >= center_x.
    Returns (left_index, right_index); raises SideMissingError when a side is empty.
    """
    bottoms = []
    for i in range(len(annotation.lanes)):
        pts = annotation.lane_points(i)
        if len(pts) == 0:
            continue
        bottoms.append((i, pts[-1, 0]))  # h_samples increasing -> last point is lowest
    left = [(x, i) for i, x in bottoms if x < center_x]
    right = [(x, i) for i, x in bottoms if x >= center_x]
    if not left:
        raise SideMissingError("left")
    if not right:
        raise SideMissingError("right")
    return max(left)[1], min(right)[1]


def report_csv(rows: list[MetricReport]) -> str:
    """Metric rows as CSV text, values in fixed 6-decimal notation."""
    if not rows:
        raise ValidationError("refusing to write an empty report")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario_id", "metric", "value", "detector", "config", "flags"])
    for r in rows:
        writer.writerow([r.scenario_id, r.metric, f"{r.value:.6f}",
                         r.detector, r.config, r.flags])
    return buf.getvalue()


def write_report(rows: list[MetricReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_csv(rows))


def parse_report(text: str) -> list[MetricReport]:
    reader = csv.DictReader(io.StringIO(text))
    return [MetricReport(scenario_id=row["scenario_id"], metric=row["metric"],
                         value=float(row["value"]), detector=row["detector"],
                         config=row["config"], flags=row["flags"])
            for row in reader]


def read_report(path) -> list[MetricReport]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_report(fh.read())
