"""Newline-delimited JSON detector wire protocol: client and conformance checks.

Transport is a byte stream, either a child process's stdio or a TCP socket.
handshake:  {"type":"hello","format_version":1} ->
            {"type":"hello","format_version":1,"name":<string>}
request:    {"type":"detect","id":i,"width":w,"height":h,"image_png_b64":...}
response:   {"type":"result","id":i,"lanes":[{"points":[[x,y],...],"score":s},...],
             "raw":<optional>}
error:      {"type":"error","id":i,"message":...}
"""

import base64
import json
import socket
import subprocess

import cv2
import numpy as np

from .errors import DetectorUnavailableError, ProtocolError, ValidationError
from .objectives import Anchor, AnchorSet, PolynomialLanes, ProbabilityMaps

FORMAT_VERSION = 1
DEFAULT_TIMEOUT = 10.0


def encode_png_b64(image: np.ndarray) -> str:
    ok, buf = cv2.imencode(".png", image)
    if not ok:
        raise ValidationError("PNG encoding failed")
    return base64.b64encode(buf.tobytes()).decode("ascii")


def decode_png_b64(data: str) -> np.ndarray:
    buf = np.frombuffer(base64.b64decode(data), dtype=np.uint8)
    img = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    if img is None:
        raise ProtocolError("undecodable PNG payload")
    return img


def decode_raw(obj):
    """Decode the optional raw representation attached to a result."""
    if obj is None:
        return None
    kind = obj.get("kind")
    if kind == "probmap":
        maps = np.asarray(obj["maps"], dtype=float)
        w, h = int(obj["width"]), int(obj["height"])
        return ProbabilityMaps(maps.reshape(-1, h, w))
    if kind == "poly":
        degree = int(obj["degree"])
        coeffs = np.asarray(obj["coeffs"], dtype=float).reshape(-1, degree + 1)
        return PolynomialLanes(coeffs=coeffs,
                               sample_rows=np.asarray(obj.get("rows", [0.5]), dtype=float))
    if kind == "anchor":
        anchors = [Anchor(xs=a["xs"], offsets=a["offsets"], prob=a["prob"])
                   for a in obj["anchors"]]
        return AnchorSet(anchors)
    raise ProtocolError(f"unknown raw kind: {kind!r}")


class _StdioTransport:
    def __init__(self, cmd, timeout):
        try:
            self.proc = subprocess.Popen(
                cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
        except OSError as exc:
            raise DetectorUnavailableError(f"cannot start detector process: {exc}") from exc
        self.timeout = timeout

    def send_line(self, line: bytes):
        try:
            self.proc.stdin.write(line + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise DetectorUnavailableError(f"detector process gone: {exc}") from exc

    def recv_line(self) -> bytes:
        # stdio reads block; rely on the child exiting to unblock on failure
        line = self.proc.stdout.readline()
        if not line:
            raise DetectorUnavailableError("detector process closed its stdout")
        return line.rstrip(b"\n")

    def close(self):
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        self.proc.wait(timeout=5)


class _TcpTransport:
    def __init__(self, host, port, timeout):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise DetectorUnavailableError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.settimeout(timeout)
        self.buf = b""

    def send_line(self, line: bytes):
        try:
            self.sock.sendall(line + b"\n")
        except OSError as exc:
            raise DetectorUnavailableError(f"send failed: {exc}") from exc

    def recv_line(self) -> bytes:
        while b"\n" not in self.buf:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                raise DetectorUnavailableError("detector response timed out")
            except OSError as exc:
                raise DetectorUnavailableError(f"recv failed: {exc}") from exc
            if not chunk:
                raise DetectorUnavailableError("detector closed the connection")
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return line

    def close(self):
        self.sock.close()


class DetectorClient:
    """Client half of the detector protocol; one connection, sequential requests."""

    def __init__(self, endpoint: dict, timeout: float = DEFAULT_TIMEOUT):
        transport = endpoint.get("transport", "stdio")
        if transport == "stdio":
            self.transport = _StdioTransport(endpoint["cmd"], timeout)
        elif transport == "tcp":
            self.transport = _TcpTransport(endpoint.get("host", "127.0.0.1"),
                                           int(endpoint["port"]), timeout)
        else:
            raise ValidationError(f"unknown transport: {transport!r}")
        self.next_id = 1
        self.name = None
        self._handshake()

    def _send(self, obj):
        self.transport.send_line(json.dumps(obj).encode("utf-8"))

    def _recv(self):
        line = self.transport.recv_line()
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"undecodable reply: {line[:200]!r}") from exc

    def _handshake(self):
        self._send({"type": "hello", "format_version": FORMAT_VERSION})
        reply = self._recv()
        if reply.get("type") != "hello" or reply.get("format_version") != FORMAT_VERSION:
            raise ProtocolError(f"bad handshake reply: {json.dumps(reply)[:200]}")
        self.name = reply.get("name", "")

    def detect(self, image: np.ndarray):
        """Send one frame; return the decoded reply dict (type result)."""
        req_id = self.next_id
        self.next_id += 1
        height, width = image.shape[:2]
        self._send({"type": "detect", "id": req_id, "width": int(width),
                    "height": int(height), "image_png_b64": encode_png_b64(image)})
        reply = self._recv()
        kind = reply.get("type")
        if kind == "error":
            raise ProtocolError(f"detector error reply: {reply.get('message')}")
        if kind != "result":
            raise ProtocolError(f"unexpected reply type: {json.dumps(reply)[:200]}")
        if reply.get("id") != req_id:
            raise ProtocolError(
                f"id mismatch: sent {req_id}, got {reply.get('id')!r}")
        return reply

    def send_raw_line(self, line: bytes):
        self.transport.send_line(line)

    def recv_reply(self):
        return self._recv()

    def close(self):
        self.transport.close()


def protocol_check(endpoint: dict, rounds: int = 100, image: np.ndarray | None = None,
                   timeout: float = DEFAULT_TIMEOUT) -> dict:
    """Run the conformance suite against an endpoint; returns per-check results."""
    if image is None:
        image = np.zeros((32, 48, 3), dtype=np.uint8)
    checks = []

    def record(name, passed, detail=""):
        checks.append({"check": name, "passed": bool(passed), "detail": detail})

    client = None
    try:
        client = DetectorClient(endpoint, timeout=timeout)
        record("handshake", True, f"name={client.name}")
    except (DetectorUnavailableError, ProtocolError) as exc:
        record("handshake", False, str(exc))
        return {"passed": False, "checks": checks}

    try:
        ok = True
        for _ in range(rounds):
            reply = client.detect(image)
            for lane in reply.get("lanes", []):
                score = lane.get("score", 1.0)
                if not (0.0 <= score <= 1.0):
                    raise ProtocolError(f"confidence out of range: {score}")
        record("round_trips", ok, f"{rounds} sequential detects, ids matched")
    except (DetectorUnavailableError, ProtocolError) as exc:
        record("round_trips", False, str(exc))

    try:
        client.send_raw_line(b"this is not json")
        reply = client.recv_reply()
        record("malformed_request", reply.get("type") == "error",
               json.dumps(reply)[:200])
    except (DetectorUnavailableError, ProtocolError) as exc:
        record("malformed_request", False, str(exc))

    try:
        reply = client.detect(image)
        record("connection_survives_error", reply.get("type") == "result", "")
    except (DetectorUnavailableError, ProtocolError) as exc:
        record("connection_survives_error", False, str(exc))

    client.close()
    return {"passed": all(c["passed"] for c in checks), "checks": checks}
