"""Minimal HTTP scoring service.

POST /score with a JSON body

    {"near_wav_b64": ..., "far_wav_b64": ..., "enhanced_wav_b64": ...,
     "scenario": "nst"|"fst"|"dt" (optional)}

returns {"echo_mos": v, "other_mos": v, "model_version": s}. GET /health
reports whether a checkpoint is loaded. Scoring is identical to the CLI
`score` command for the same decoded inputs. The loaded checkpoint is
immutable and shared read-only across request threads.
"""

from __future__ import annotations

import base64
import binascii
import json
import zlib
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .audio import read_wav_bytes
from .errors import (
    CorruptHeaderError,
    EmptyClipError,
    SampleRateMismatchError,
    UnsupportedFormatError,
)
from .features import ScoringRequest, score
from .types import Scenario

MAX_BODY_BYTES = 64 * 1024 * 1024


class _BadRequest(Exception):
    pass


def model_version(ckpt) -> str:
    crc = 0
    for name in sorted(ckpt.params):
        crc = zlib.crc32(ckpt.params[name].tobytes(), crc)
    return f"{ckpt.format_version}-{crc:08x}"


def _decode_clip(body: dict, field: str):
    if field not in body:
        raise _BadRequest(f"missing field {field}")
    try:
        raw = base64.b64decode(body[field], validate=True)
    except (binascii.Error, TypeError, ValueError):
        raise _BadRequest(f"{field} is not valid base64")
    try:
        return read_wav_bytes(raw)
    except (CorruptHeaderError, UnsupportedFormatError, ValueError) as exc:
        raise _BadRequest(f"{field}: {exc}")


def _parse_body(raw: bytes) -> ScoringRequest:
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise _BadRequest("body is not valid JSON")
    if not isinstance(body, dict):
        raise _BadRequest("body must be a JSON object")
    scenario = None
    if body.get("scenario") is not None:
        try:
            scenario = Scenario(body["scenario"])
        except ValueError:
            raise _BadRequest(f"unknown scenario {body['scenario']!r}")
    near = _decode_clip(body, "near_wav_b64")
    far = _decode_clip(body, "far_wav_b64")
    enhanced = _decode_clip(body, "enhanced_wav_b64")
    try:
        return ScoringRequest(near, far, enhanced, scenario)
    except EmptyClipError as exc:
        raise _BadRequest(str(exc))


class ScoringHandler(BaseHTTPRequestHandler):
    checkpoint = None
    version = ""
    quiet = True
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    def _send_json(self, code: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):  # noqa: N802 (http.server naming)
        if self.path != "/health":
            self._send_json(404, {"error": "not found"})
            return
        self._send_json(200, {"status": "ok",
                              "checkpoint_loaded": self.checkpoint is not None})

    def do_POST(self):  # noqa: N802
        if self.path != "/score":
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self._send_json(400, {"error": "missing or invalid Content-Length"})
            return
        if length < 0:
            self._send_json(400, {"error": "invalid Content-Length"})
            return
        if length > MAX_BODY_BYTES:
            self._send_json(413, {"error": f"body exceeds {MAX_BODY_BYTES} bytes"})
            return
        if self.checkpoint is None:
            self._send_json(503, {"error": "no checkpoint loaded"})
            return
        raw = self.rfile.read(length)
        try:
            request = _parse_body(raw)
            pair = score(self.checkpoint, request)
        except _BadRequest as exc:
            self._send_json(400, {"error": str(exc)})
            return
        except SampleRateMismatchError as exc:
            self._send_json(422, {"error": str(exc)})
            return
        except Exception as exc:  # pragma: no cover - defensive
            self._send_json(500, {"error": f"internal error: {exc}"})
            return
        self._send_json(200, {"echo_mos": pair.echo_mos, "other_mos": pair.other_mos,
                              "model_version": self.version})


def make_server(checkpoint, host: str = "127.0.0.1", port: int = 8080,
                quiet: bool = True) -> ThreadingHTTPServer:
    handler = type("BoundScoringHandler", (ScoringHandler,), {
        "checkpoint": checkpoint,
        "version": model_version(checkpoint) if checkpoint is not None else "",
        "quiet": quiet,
    })
    return ThreadingHTTPServer((host, port), handler)
