"""Deterministic scripted mock backends for offline end-to-end testing.

A MockScript maps fixture images to canned detect/segment responses and
prompt fingerprints to canned chat replies. The server resolves incoming
images to fixture ids by hashing their decoded RGB bytes, so any PNG
encoder produces the same id. Responses are byte-identical for identical
requests; the only mutable state is an atomic request counter.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping

from .datasets import mask_from_payload, mask_payload, RleCodecError
from .imaging import ImageFormatError, load_rgb_png, rgb_from_payload
from .model import Detection, RgbImage
from .gateway import SegmentCandidate

_WHITESPACE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase and collapse all whitespace runs to single spaces."""
    return _WHITESPACE.sub(" ", text.strip().lower())


def prompt_fingerprint(contents: list[str] | str) -> str:
    """Fingerprint of chat message contents: SHA-256 of the normalized text."""
    if isinstance(contents, str):
        contents = [contents]
    joined = normalize_text(" ".join(contents))
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def image_fingerprint(image: RgbImage) -> str:
    """Content hash of the decoded RGB pixels, independent of PNG encoding."""
    digest = hashlib.sha256()
    digest.update(f"{image.width}x{image.height}:".encode("ascii"))
    digest.update(image.pixels.tobytes())
    return digest.hexdigest()


class MockScriptError(ValueError):
    """The script file violates its schema or references missing fixtures."""


@dataclass(frozen=True)
class MockScript:
    """Canned backend behavior keyed by fixture image and prompt fingerprint."""

    images: Mapping[str, RgbImage]
    detect: Mapping[str, tuple[Detection, ...]] = field(default_factory=dict)
    segment: Mapping[str, Mapping[str, tuple[SegmentCandidate, ...]]] = field(
        default_factory=dict
    )
    chat: Mapping[str, str] = field(default_factory=dict)
    plan_grasp: dict | None = None
    transient_failure_indices: frozenset[int] = frozenset()
    transient_failure_status: int = 503

    def __post_init__(self) -> None:
        for image_id in list(self.detect) + list(self.segment):
            if image_id not in self.images:
                raise MockScriptError(f"script references unknown image {image_id!r}")

    def fingerprint_index(self) -> dict[str, str]:
        return {image_fingerprint(img): image_id for image_id, img in self.images.items()}


def load_mock_script(path: str | Path) -> MockScript:
    """Load a script JSON file; fixture image paths are relative to it.

    Schema::

        {"images": {"id": "rel/path.png"},
         "detect": {"id": [{"label": ..., "confidence": ..., "bbox": [x0,y0,x1,y1]}]},
         "segment": {"id": {"part query": [{"part_label": ..., "confidence": ...,
                                            "mask": {"width": W, "height": H, "rle": [...]}}]}},
         "chat": [{"prompt": "...", "content": "..."} |
                  {"fingerprint": "...", "content": "..."}],
         "plan_grasp": {"position": [...], "approach": [...],
                        "axis_angle": ..., "quality": ...},      # optional
         "transient_failure_indices": [0]}                        # optional
    """
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MockScriptError(f"{path}: cannot load script: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), dict):
        raise MockScriptError(f"{path}: script needs an 'images' mapping")

    images: dict[str, RgbImage] = {}
    for image_id, rel in doc["images"].items():
        img_path = base / rel
        if not img_path.is_file():
            raise MockScriptError(f"{path}: fixture image missing: {img_path}")
        images[image_id] = load_rgb_png(img_path)

    detect: dict[str, tuple[Detection, ...]] = {}
    for image_id, items in (doc.get("detect") or {}).items():
        try:
            detect[image_id] = tuple(
                Detection(
                    label=item["label"],
                    confidence=float(item["confidence"]),
                    bbox=tuple(item["bbox"]),
                )
                for item in items
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MockScriptError(f"{path}: bad detect entry for {image_id!r}: {exc}") from exc

    segment: dict[str, dict[str, tuple[SegmentCandidate, ...]]] = {}
    for image_id, queries in (doc.get("segment") or {}).items():
        per_query: dict[str, tuple[SegmentCandidate, ...]] = {}
        for query, items in queries.items():
            try:
                per_query[normalize_text(query)] = tuple(
                    SegmentCandidate(
                        part_label=item["part_label"],
                        confidence=float(item["confidence"]),
                        mask=mask_from_payload(item["mask"]),
                    )
                    for item in items
                )
            except (KeyError, TypeError, ValueError, RleCodecError) as exc:
                raise MockScriptError(
                    f"{path}: bad segment entry for ({image_id!r}, {query!r}): {exc}"
                ) from exc
        segment[image_id] = per_query

    chat: dict[str, str] = {}
    for entry in doc.get("chat") or []:
        if not isinstance(entry, dict) or "content" not in entry:
            raise MockScriptError(f"{path}: chat entries need a 'content' field")
        if "fingerprint" in entry:
            fingerprint = str(entry["fingerprint"])
        elif "prompt" in entry:
            fingerprint = prompt_fingerprint(str(entry["prompt"]))
        else:
            raise MockScriptError(f"{path}: chat entries need 'prompt' or 'fingerprint'")
        chat[fingerprint] = str(entry["content"])

    try:
        return MockScript(
            images=images,
            detect=detect,
            segment=segment,
            chat=chat,
            plan_grasp=doc.get("plan_grasp"),
            transient_failure_indices=frozenset(
                int(i) for i in doc.get("transient_failure_indices") or []
            ),
            transient_failure_status=int(doc.get("transient_failure_status", 503)),
        )
    except (MockScriptError, TypeError, ValueError) as exc:
        raise MockScriptError(f"{path}: {exc}") from exc


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


class _RequestRejected(Exception):
    def __init__(self, status: int, error: str, **extra):
        super().__init__(error)
        self.status = status
        self.body = {"error": error, **extra}


class MockServerHandle:
    """Running mock service; stop() shuts it down."""

    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread, state: "_MockState"):
        self._server = server
        self._thread = thread
        self._state = state

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[0], self._server.server_address[1]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def stats(self) -> dict:
        return self._state.snapshot()

    def request_count(self, endpoint: str | None = None) -> int:
        snap = self._state.snapshot()
        if endpoint is None:
            return snap["total"]
        return snap["by_endpoint"].get(endpoint, 0)

    def chat_fingerprint_count(self, fingerprint: str) -> int:
        return self._state.snapshot()["chat_fingerprints"].get(fingerprint, 0)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)


class _MockState:
    """Request counters; the only mutable state in the server."""

    def __init__(self, script: MockScript):
        self.script = script
        self.fingerprint_index = script.fingerprint_index()
        self._lock = threading.Lock()
        self._total = 0
        self._by_endpoint: dict[str, int] = {}
        self._chat_fingerprints: dict[str, int] = {}

    def next_index(self, endpoint: str) -> int:
        with self._lock:
            index = self._total
            self._total += 1
            self._by_endpoint[endpoint] = self._by_endpoint.get(endpoint, 0) + 1
            return index

    def count_chat_fingerprint(self, fingerprint: str) -> None:
        with self._lock:
            self._chat_fingerprints[fingerprint] = (
                self._chat_fingerprints.get(fingerprint, 0) + 1
            )

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "total": self._total,
                "by_endpoint": dict(sorted(self._by_endpoint.items())),
                "chat_fingerprints": dict(sorted(self._chat_fingerprints.items())),
            }


def _detection_payload(det: Detection) -> dict:
    return {
        "label": det.label,
        "confidence": det.confidence,
        "bbox": list(det.bbox),
    }


def _candidate_payload(candidate: SegmentCandidate) -> dict:
    return {
        "part_label": candidate.part_label,
        "confidence": candidate.confidence,
        "mask": mask_payload(candidate.mask),
    }


class _MockHandler(BaseHTTPRequestHandler):
    state: _MockState  # set by serve_mock on the subclass

    protocol_version = "HTTP/1.1"

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        pass

    def _reply(self, status: int, body: dict) -> None:
        if status >= 400:
            # The request body may be partially unread; never reuse the socket.
            self.close_connection = True
        data = _canonical(body)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_json(self) -> dict:
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            raise _RequestRejected(400, "bad_content_length")
        if length <= 0 or length > 64 * 1024 * 1024:
            raise _RequestRejected(400, "bad_content_length")
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise _RequestRejected(400, "body_not_json")
        if not isinstance(body, dict):
            raise _RequestRejected(400, "body_not_object")
        return body

    def _resolve_image(self, body: dict) -> str:
        image_obj = body.get("image")
        if not isinstance(image_obj, dict):
            raise _RequestRejected(400, "missing_image")
        try:
            image = rgb_from_payload(image_obj)
        except (ImageFormatError, TypeError, ValueError):
            raise _RequestRejected(400, "undecodable_image")
        image_id = self.state.fingerprint_index.get(image_fingerprint(image))
        if image_id is None:
            raise _RequestRejected(404, "unknown_image")
        return image_id

    def do_GET(self) -> None:  # noqa: N802 - stdlib naming
        if self.path == "/v1/stats":
            self._reply(200, self.state.snapshot())
        else:
            self._reply(404, {"error": "unknown_path", "path": self.path})

    def do_POST(self) -> None:  # noqa: N802 - stdlib naming
        try:
            handler = {
                "/v1/detect": self._handle_detect,
                "/v1/segment": self._handle_segment,
                "/v1/chat": self._handle_chat,
                "/v1/plan_grasp": self._handle_plan_grasp,
            }.get(self.path)
            if handler is None:
                raise _RequestRejected(404, "unknown_path", path=self.path)
            body = self._read_json()
            index = self.state.next_index(self.path.rsplit("/", 1)[-1])
            if index in self.state.script.transient_failure_indices:
                raise _RequestRejected(
                    self.state.script.transient_failure_status, "forced_transient_failure"
                )
            handler(body)
        except _RequestRejected as rejected:
            self._reply(rejected.status, rejected.body)
        except Exception:  # malformed input must never crash the server
            self._reply(400, {"error": "bad_request"})

    def _handle_detect(self, body: dict) -> None:
        labels = body.get("candidate_labels")
        if not isinstance(labels, list) or not labels or not all(
            isinstance(label, str) and label for label in labels
        ):
            raise _RequestRejected(400, "bad_candidate_labels")
        image_id = self._resolve_image(body)
        detections = self.state.script.detect.get(image_id, ())
        self._reply(200, {"detections": [_detection_payload(d) for d in detections]})

    def _handle_segment(self, body: dict) -> None:
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            raise _RequestRejected(400, "bad_query")
        image_id = self._resolve_image(body)
        candidates = self.state.script.segment.get(image_id, {}).get(
            normalize_text(query), ()
        )
        self._reply(200, {"candidates": [_candidate_payload(c) for c in candidates]})

    def _handle_chat(self, body: dict) -> None:
        messages = body.get("messages")
        if (
            not isinstance(messages, list)
            or not messages
            or not all(
                isinstance(m, dict)
                and isinstance(m.get("role"), str)
                and isinstance(m.get("content"), str)
                for m in messages
            )
        ):
            raise _RequestRejected(400, "bad_messages")
        if not isinstance(body.get("temperature"), (int, float)):
            raise _RequestRejected(400, "bad_temperature")
        fingerprint = prompt_fingerprint([m["content"] for m in messages])
        self.state.count_chat_fingerprint(fingerprint)
        content = self.state.script.chat.get(fingerprint)
        if content is None:
            raise _RequestRejected(404, "unscripted_prompt", fingerprint=fingerprint)
        self._reply(200, {"content": content})

    def _handle_plan_grasp(self, body: dict) -> None:
        mask_obj = body.get("mask")
        if not isinstance(mask_obj, dict):
            raise _RequestRejected(400, "missing_mask")
        try:
            mask_from_payload(mask_obj)
        except RleCodecError:
            raise _RequestRejected(400, "bad_mask")
        if not isinstance(body.get("depth_png_b64"), str):
            raise _RequestRejected(400, "missing_depth")
        intrinsics = body.get("intrinsics")
        if not isinstance(intrinsics, dict) or not all(
            isinstance(intrinsics.get(k), (int, float)) for k in ("fx", "fy", "cx", "cy")
        ):
            raise _RequestRejected(400, "bad_intrinsics")
        response = self.state.script.plan_grasp
        if response is None:
            raise _RequestRejected(404, "no_grasp_scripted")
        self._reply(200, response)


def serve_mock(script: MockScript, bind_address: tuple[str, int] = ("127.0.0.1", 0)) -> MockServerHandle:
    """Start the scripted mock service on a daemon thread."""
    state = _MockState(script)
    handler = type("BoundMockHandler", (_MockHandler,), {"state": state})
    server = ThreadingHTTPServer(bind_address, handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, name="mock-backend", daemon=True)
    thread.start()
    return MockServerHandle(server, thread, state)
