"""Echo-mode detector server speaking the wire protocol, for conformance tests.

Serves lanes from a sidecar annotation file (or a scenario manifest) in request
order, cycling; with neither it replies with no lanes. Run it as a module:

    python3 -m lanebench.mock_detector --manifest scenario.json
    python3 -m lanebench.mock_detector --tcp 9701 --annotations lanes.json

Malformed requests get an error reply and the connection stays open.
"""

import argparse
import json
import socket
import sys

FORMAT_VERSION = 1
SENTINEL = -2


def _annotation_points(ann: dict) -> list:
    lanes = []
    for xs in ann["lanes"]:
        pts = [[float(x), float(h)] for x, h in zip(xs, ann["h_samples"])
               if x != SENTINEL]
        lanes.append({"points": pts, "score": 1.0})
    return lanes


def load_annotations(path: str) -> list:
    """Sidecar file: one annotation object or a list, each with h_samples/lanes."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = [doc]
    return [_annotation_points(ann) for ann in doc]


def load_manifest_annotations(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = []
    for frame in doc["frames"]:
        ann = frame.get("annotation")
        if ann is not None:
            out.append(_annotation_points(ann))
    if not out:
        raise SystemExit("manifest holds no annotations")
    return out


class EchoServer:
    def __init__(self, annotations: list | None):
        self.annotations = annotations
        self.served = 0

    def reply_to(self, line: bytes) -> dict:
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request must be an object")
        except ValueError as exc:
            return {"type": "error", "id": None, "message": f"bad request: {exc}"}
        kind = req.get("type")
        if kind == "hello":
            return {"type": "hello", "format_version": FORMAT_VERSION,
                    "name": "echo"}
        if kind == "detect":
            if "id" not in req:
                return {"type": "error", "id": None, "message": "detect needs an id"}
            if self.annotations:
                lanes = self.annotations[self.served % len(self.annotations)]
            else:
                lanes = []
            self.served += 1
            return {"type": "result", "id": req["id"], "lanes": lanes}
        return {"type": "error", "id": req.get("id"),
                "message": f"unknown request type: {kind!r}"}

    def serve_stream(self, rfile, wfile):
        for line in rfile:
            line = line.rstrip(b"\n")
            if not line:
                continue
            reply = json.dumps(self.reply_to(line)).encode("utf-8")
            wfile.write(reply + b"\n")
            wfile.flush()


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--annotations", help="sidecar annotation JSON file")
    parser.add_argument("--manifest", help="scenario manifest to echo annotations from")
    parser.add_argument("--tcp", type=int, metavar="PORT",
                        help="listen on TCP instead of stdio")
    args = parser.parse_args(argv)
    if args.annotations and args.manifest:
        parser.error("give at most one of --annotations and --manifest")
    annotations = None
    if args.annotations:
        annotations = load_annotations(args.annotations)
    elif args.manifest:
        annotations = load_manifest_annotations(args.manifest)

    if args.tcp is None:
        server = EchoServer(annotations)
        server.serve_stream(sys.stdin.buffer, sys.stdout.buffer)
        return
    listener = socket.create_server(("127.0.0.1", args.tcp))
    print(f"listening on 127.0.0.1:{listener.getsockname()[1]}", file=sys.stderr)
    while True:
        conn, _ = listener.accept()
        with conn:
            server = EchoServer(annotations)
            rfile = conn.makefile("rb")
            wfile = conn.makefile("wb")
            try:
                server.serve_stream(rfile, wfile)
            except (BrokenPipeError, ConnectionResetError):
                pass


if __name__ == "__main__":
    main()
