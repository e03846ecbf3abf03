"""HTTP surface over the evaluation runners.

Every endpoint is a POST taking a JSON request and returning a JSON document
with a summary plus the produced artifacts: text files under "files", PNGs
base64-encoded under "binary". The CLI is a thin client of this service and by
default mounts it in-process.
"""

import base64
import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, runner
from .driving import ClosedLoopConfig
from .dynamics import SimConfig
from .errors import LanebenchError
from .fixtures import build_scenario
from .protocol import protocol_check
from .scenario import MetricParams, load_scenario, parse_report, report_csv


class DetectorModel(BaseModel):
    kind: str
    params: dict = Field(default_factory=dict)
    seed: int | None = None
    endpoint: dict | None = None


class FixtureModel(BaseModel):
    id: str | None = None
    kind: str = "straight"
    curvature: float = 0.0
    speed: float = 13.4
    n_frames: int = 40


class ScenarioSetModel(BaseModel):
    manifests: list[str] = Field(default_factory=list)
    fixtures: list[FixtureModel] = Field(default_factory=list)


class SimModel(BaseModel):
    t_e: int = 20
    t_p: int = 10
    lookahead: float = 40.0


class ConventionalRequest(BaseModel):
    scenarios: ScenarioSetModel
    detector: DetectorModel
    alpha: float = 20.0
    beta: float = 0.85
    workers: int | None = None


class DrivingRequest(BaseModel):
    scenarios: ScenarioSetModel = Field(default_factory=ScenarioSetModel)
    detector: DetectorModel | None = None
    sim: SimModel = Field(default_factory=SimModel)
    mode: str = "benign"
    suite: str | None = None      # "correlation" runs the built-in pair suite
    workers: int | None = None


class SweepRequest(BaseModel):
    scenarios: ScenarioSetModel
    detector: DetectorModel
    alphas: list[float] | None = None
    betas: list[float] | None = None
    workers: int | None = None


class CorrelateRequest(BaseModel):
    report_paths: list[str] = Field(default_factory=list)
    report_texts: list[str] = Field(default_factory=list)
    pairs: list[list[str]] | None = None


class SynthFramesRequest(BaseModel):
    scenario: ScenarioSetModel
    detector: DetectorModel
    steps: int = 20
    initial_offset: float = 0.0
    sim: SimModel = Field(default_factory=SimModel)


class ProtocolCheckRequest(BaseModel):
    endpoint: dict
    rounds: int = 100


app = FastAPI(title="lanebench", version=__version__)


def _fail(status: int, message: str):
    raise HTTPException(status_code=status, detail=message)


def _scenarios(model: ScenarioSetModel):
    out = []
    for path in model.manifests:
        if not os.path.exists(path):
            _fail(422, f"scenario manifest not found: {path}")
        out.append(load_scenario(path))
    for f in model.fixtures:
        sid = f.id or (f"{f.kind}-{f.speed:g}" +
                       (f"-k{f.curvature:g}" if f.curvature else ""))
        out.append(build_scenario(sid, kind=f.kind, curvature=f.curvature,
                                  n_frames=f.n_frames, speed=f.speed))
    if not out:
        _fail(422, "empty scenario set: give manifests or fixtures")
    return out


def _loop_config(sim: SimModel) -> ClosedLoopConfig:
    return ClosedLoopConfig(sim=SimConfig(t_e=sim.t_e, t_p=sim.t_p),
                            lookahead=sim.lookahead)


def _detector(model: DetectorModel):
    return runner.detector_from_dict(model.model_dump())


def _wrap(call):
    try:
        return call()
    except HTTPException:
        raise
    except LanebenchError as exc:
        _fail(422, f"{type(exc).__name__}: {exc}")
    except Exception as exc:   # internal fault, distinct from config errors
        _fail(500, f"{type(exc).__name__}: {exc}")


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/eval/conventional")
def eval_conventional(req: ConventionalRequest):
    def run():
        scenarios = _scenarios(req.scenarios)
        params = MetricParams(alpha=req.alpha, beta=req.beta)
        out = runner.eval_conventional(scenarios, _detector(req.detector),
                                       params, workers=req.workers)
        files = {}
        if out.rows:
            files["report.csv"] = report_csv(out.rows)
        if out.frame_rows:
            files["frames.csv"] = runner.frame_rows_csv(out.frame_rows)
        return {"summary": {"scenarios": len(scenarios),
                            "failures": out.failures},
                "files": files, "binary": {}}
    return _wrap(run)


@app.post("/eval/driving")
def eval_driving(req: DrivingRequest):
    def run():
        cfg = _loop_config(req.sim)
        if req.suite == "correlation":
            out = runner.run_correlation_suite(cfg, workers=req.workers)
            n = len(out.rows) // 2 + len(out.failures)
        elif req.suite is not None:
            _fail(422, f"unknown suite: {req.suite!r}")
        else:
            if req.detector is None:
                _fail(422, "detector is required unless a suite is named")
            scenarios = _scenarios(req.scenarios)
            out = runner.eval_driving(scenarios, _detector(req.detector), cfg,
                                      mode=req.mode, workers=req.workers)
            n = len(scenarios)
        files = {}
        if out.rows:
            files["report.csv"] = report_csv(out.rows)
        if out.traces:
            import json
            files["traces.json"] = json.dumps(out.traces, sort_keys=True,
                                              indent=1) + "\n"
        return {"summary": {"scenarios": n, "failures": out.failures},
                "files": files, "binary": {}}
    return _wrap(run)


@app.post("/sweep")
def sweep(req: SweepRequest):
    def run():
        scenarios = _scenarios(req.scenarios)
        kwargs = {}
        if req.alphas is not None:
            kwargs["alphas"] = req.alphas
        if req.betas is not None:
            kwargs["betas"] = req.betas
        rows = runner.run_sweep(scenarios, _detector(req.detector),
                                workers=req.workers, **kwargs)
        return {"summary": {"rows": len(rows)},
                "files": {"sweep.csv": runner.sweep_csv(rows)}, "binary": {}}
    return _wrap(run)


@app.post("/correlate")
def correlate(req: CorrelateRequest):
    def run():
        rows = []
        for path in req.report_paths:
            if not os.path.exists(path):
                _fail(422, f"report not found: {path}")
            with open(path, encoding="utf-8") as fh:
                rows.extend(parse_report(fh.read()))
        for text in req.report_texts:
            rows.extend(parse_report(text))
        pairs = [tuple(p) for p in req.pairs] if req.pairs else None
        table, plots = runner.correlate_rows(rows, pairs)
        files = {"correlation.csv": runner.correlation_csv(table)}
        files.update(plots)
        return {"summary": {"table": table}, "files": files, "binary": {}}
    return _wrap(run)


@app.post("/synth-frames")
def synth_frames(req: SynthFramesRequest):
    def run():
        scenarios = _scenarios(req.scenario)
        if len(scenarios) != 1:
            _fail(422, "synth-frames takes exactly one scenario")
        frames = runner.synth_frames(scenarios[0], _detector(req.detector),
                                     req.steps, cfg=_loop_config(req.sim),
                                     initial_offset=req.initial_offset)
        binary = {name: base64.b64encode(data).decode("ascii")
                  for name, data in frames}
        return {"summary": {"frames": len(binary)}, "files": {}, "binary": binary}
    return _wrap(run)


@app.post("/protocol-check")
def protocol_check_endpoint(req: ProtocolCheckRequest):
    def run():
        result = protocol_check(req.endpoint, rounds=req.rounds)
        return {"summary": result, "files": {}, "binary": {}}
    return _wrap(run)
