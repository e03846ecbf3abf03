"""Thin command-line client for the evaluation service.

Without --server the service runs in-process, so the CLI works standalone;
with --server it talks to a remote instance over HTTP. Each command posts one
request and writes the returned artifacts into --out.

Exit codes: 0 success (per-scenario failures are summarized, not fatal),
2 usage or configuration error, 3 internal error.
"""

import base64
import json
import os
import sys

import click
import httpx


def _parse_detector(text: str) -> dict:
    """Accept JSON or the shorthand kind:key=value,key=value."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"bad detector JSON: {exc}")
    kind, _, rest = text.partition(":")
    doc = {"kind": kind, "params": {}}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            if not _:
                raise click.UsageError(f"bad detector parameter: {item!r}")
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                parsed = value
            if key == "seed":
                doc["seed"] = int(parsed)
            else:
                doc["params"][key] = parsed
    return doc


def _parse_fixture(text: str) -> dict:
    """Accept JSON or the shorthand kind[:key=value,...], e.g. straight:speed=13.4."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    kind, _, rest = text.partition(":")
    doc = {"kind": kind}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            doc[key] = json.loads(value) if key != "id" else value
    return doc


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app, raise_server_exceptions=False)


def _post(ctx_obj, path: str, body: dict) -> dict:
    with _client(ctx_obj["server"]) as client:
        try:
            resp = client.post(path, json=body)
        except httpx.HTTPError as exc:
            click.echo(f"service unreachable: {exc}", err=True)
            sys.exit(3)
    if resp.status_code >= 500:
        click.echo(f"internal error: {resp.json().get('detail', resp.text)}", err=True)
        sys.exit(3)
    if resp.status_code >= 400:
        click.echo(f"error: {resp.json().get('detail', resp.text)}", err=True)
        sys.exit(2)
    return resp.json()


def _write_artifacts(doc: dict, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    for name, text in doc.get("files", {}).items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        click.echo(f"wrote {path}")
    for name, b64 in doc.get("binary", {}).items():
        path = os.path.join(out_dir, name)
        with open(path, "wb") as fh:
            fh.write(base64.b64decode(b64))
        click.echo(f"wrote {path}")
    failures = doc.get("summary", {}).get("failures") or {}
    for sid, message in failures.items():
        click.echo(f"scenario {sid} failed: {message}", err=True)


def _base_body(config: str | None) -> dict:
    if not config:
        return {}
    if not os.path.exists(config):
        raise click.UsageError(f"config file not found: {config}")
    with open(config, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"bad config JSON in {config}: {exc}")
    if not isinstance(doc, dict):
        raise click.UsageError("config file must hold a JSON object")
    return doc


def _scenario_set(body: dict, manifests, fixtures) -> dict:
    doc = body.setdefault("scenarios", {})
    if manifests:
        doc["manifests"] = list(manifests)
    if fixtures:
        doc["fixtures"] = [_parse_fixture(f) for f in fixtures]
    return body


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the service in-process.")
@click.option("--out", default=".", metavar="DIR", show_default=True,
              help="Directory for report and plot artifacts.")
@click.pass_context
def main(ctx, server, out):
    """Deterministic lane-detection evaluation: conventional and driving metrics."""
    ctx.obj = {"server": server, "out": out}


_common = [
    click.option("--manifest", "manifests", multiple=True,
                 help="Scenario manifest JSON path (repeatable)."),
    click.option("--fixture", "fixtures", multiple=True,
                 help="Built-in fixture, e.g. straight:speed=13.4 or arc:curvature=0.003."),
    click.option("--detector", default=None,
                 help="Detector spec: kind:key=value,... or JSON."),
    click.option("--config", default=None, help="JSON request template; flags override."),
    click.option("--workers", type=int, default=None),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command("eval-conventional")
@_with_common
@click.option("--alpha", type=float, default=None, help="Pixel threshold.")
@click.option("--beta", type=float, default=None, help="True-positive accuracy threshold.")
@click.pass_obj
def eval_conventional(obj, manifests, fixtures, detector, config, workers, alpha, beta):
    """Accuracy, F1, and BEV distance reports over annotated scenarios."""
    body = _scenario_set(_base_body(config), manifests, fixtures)
    if detector:
        body["detector"] = _parse_detector(detector)
    if alpha is not None:
        body["alpha"] = alpha
    if beta is not None:
        body["beta"] = beta
    if workers is not None:
        body["workers"] = workers
    _write_artifacts(_post(obj, "/eval/conventional", body), obj["out"])


@main.command("eval-driving")
@_with_common
@click.option("--mode", type=click.Choice(["benign", "attack"]), default=None)
@click.option("--suite", default=None,
              help="Named built-in run, e.g. 'correlation' for the pair suite.")
@click.option("--t-e", type=int, default=None, help="Closed-loop horizon in frames.")
@click.option("--t-p", type=int, default=None, help="Surrogate horizon in frames.")
@click.pass_obj
def eval_driving(obj, manifests, fixtures, detector, config, workers, mode, suite, t_e, t_p):
    """Closed-loop deviation and per-frame surrogate reports."""
    body = _scenario_set(_base_body(config), manifests, fixtures)
    if detector:
        body["detector"] = _parse_detector(detector)
    if mode:
        body["mode"] = mode
    if suite:
        body["suite"] = suite
    sim = body.setdefault("sim", {})
    if t_e is not None:
        sim["t_e"] = t_e
    if t_p is not None:
        sim["t_p"] = t_p
    if workers is not None:
        body["workers"] = workers
    _write_artifacts(_post(obj, "/eval/driving", body), obj["out"])


@main.command()
@click.argument("reports", nargs=-1, required=True)
@click.option("--pair", "pairs", multiple=True, metavar="X:Y",
              help="Metric pair to correlate, e.g. psld:e2e_ld (repeatable).")
@click.pass_obj
def correlate(obj, reports, pairs):
    """Join metric reports on scenario id; correlation table plus scatter plots."""
    texts = []
    for path in reports:
        if not os.path.exists(path):
            raise click.UsageError(f"report not found: {path}")
        with open(path, encoding="utf-8") as fh:
            texts.append(fh.read())
    body = {"report_texts": texts}
    if pairs:
        body["pairs"] = [p.split(":", 1) for p in pairs]
    doc = _post(obj, "/correlate", body)
    _write_artifacts(doc, obj["out"])
    for row in doc["summary"]["table"]:
        click.echo(f"{row['metric_x']} vs {row['metric_y']}: "
                   f"r={row['r']:.4f} p={row['p']:.4g} {row['label']} (n={row['n']})")


@main.command()
@_with_common
@click.option("--alphas", default=None, help="Comma-separated pixel thresholds.")
@click.option("--betas", default=None, help="Comma-separated accuracy thresholds.")
@click.pass_obj
def sweep(obj, manifests, fixtures, detector, config, workers, alphas, betas):
    """Mean accuracy and F1 over the (alpha, beta) parameter grid."""
    body = _scenario_set(_base_body(config), manifests, fixtures)
    if detector:
        body["detector"] = _parse_detector(detector)
    if alphas:
        body["alphas"] = [float(v) for v in alphas.split(",")]
    if betas:
        body["betas"] = [float(v) for v in betas.split(",")]
    if workers is not None:
        body["workers"] = workers
    _write_artifacts(_post(obj, "/sweep", body), obj["out"])


@main.command("synth-frames")
@_with_common
@click.option("--steps", type=int, default=20, show_default=True)
@click.option("--offset", type=float, default=0.0, show_default=True,
              help="Initial lateral offset in meters.")
@click.pass_obj
def synth_frames(obj, manifests, fixtures, detector, config, workers, steps, offset):
    """Dump the frames synthesized along a detection-steered rollout."""
    body = _base_body(config)
    body = {"scenario": _scenario_set({"scenarios": body.get("scenario", {})},
                                      manifests, fixtures)["scenarios"],
            "steps": steps, "initial_offset": offset}
    if detector:
        body["detector"] = _parse_detector(detector)
    elif "detector" not in body:
        raise click.UsageError("--detector is required")
    _write_artifacts(_post(obj, "/synth-frames", body), obj["out"])


@main.command("protocol-check")
@click.option("--endpoint", default=None, help="Endpoint JSON, e.g. "
              '\'{"transport":"tcp","host":"127.0.0.1","port":9000}\'.')
@click.option("--cmd", default=None,
              help="Shorthand for a stdio endpoint: the server command line.")
@click.option("--rounds", type=int, default=100, show_default=True)
@click.pass_obj
def protocol_check_cmd(obj, endpoint, cmd, rounds):
    """Conformance-check a detector endpoint: handshake, round trips, error replies."""
    if bool(endpoint) == bool(cmd):
        raise click.UsageError("give exactly one of --endpoint or --cmd")
    if cmd:
        doc = {"transport": "stdio", "cmd": cmd.split()}
    else:
        try:
            doc = json.loads(endpoint)
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"bad endpoint JSON: {exc}")
    result = _post(obj, "/protocol-check", {"endpoint": doc, "rounds": rounds})
    summary = result["summary"]
    for check in summary["checks"]:
        status = "ok" if check["passed"] else "FAIL"
        detail = f" ({check['detail']})" if check.get("detail") else ""
        click.echo(f"{check['check']}: {status}{detail}")
    if not summary["passed"]:
        sys.exit(2)
    click.echo("protocol check passed")


@main.command("make-fixtures")
@click.option("--fixture", "fixtures", multiple=True, required=True,
              help="Fixture to materialize, e.g. straight:speed=13.4,id=demo.")
@click.pass_obj
def make_fixtures(obj, fixtures):
    """Write built-in fixture scenarios to disk as frames plus a manifest."""
    from .fixtures import build_scenario, write_scenario
    for text in fixtures:
        doc = _parse_fixture(text)
        sid = doc.get("id") or (f"{doc.get('kind', 'straight')}-"
                                f"{doc.get('speed', 13.4):g}")
        scenario = build_scenario(sid, kind=doc.get("kind", "straight"),
                                  curvature=doc.get("curvature", 0.0),
                                  n_frames=doc.get("n_frames", 40),
                                  speed=doc.get("speed", 13.4))
        path = write_scenario(scenario, os.path.join(obj["out"], sid))
        click.echo(f"wrote {path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8701, show_default=True)
def serve(host, port):
    """Run the evaluation service over HTTP."""
    import uvicorn
    from .service import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
