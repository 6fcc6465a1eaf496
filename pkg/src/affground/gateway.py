"""Typed HTTP clients for the detect / segment / chat backend capabilities.

All three capabilities speak JSON over HTTP/1.1 (see the schemas
package for the exact bodies). The gateway is transport only: it never
filters detections (the pipeline applies the confidence floor) and
never parses chat replies (the prompt engine does).
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, replace
from typing import Sequence

import requests

from .datasets import mask_from_payload, RleCodecError
from .imaging import rgb_payload
from .model import BinaryMask, Detection, RgbImage

ENV_API_KEY = "OVAL_API_KEY"
ENV_BACKEND_BASE = "OVAL_BACKEND_BASE"

DETECT_PATH = "/v1/detect"
SEGMENT_PATH = "/v1/segment"
CHAT_PATH = "/v1/chat"
PLAN_GRASP_PATH = "/v1/plan_grasp"

# HTTP statuses treated as transient and retried with backoff.
_TRANSIENT_STATUSES = frozenset({429, 502, 503, 504})


class BackendError(Exception):
    """Base class for transport and protocol failures."""


class BackendUnreachableError(BackendError):
    """Transport kept failing after the configured retries."""


class RateLimitedError(BackendError):
    """The backend kept answering 429 after the configured retries."""


class ProtocolError(BackendError):
    """The backend answered, but the body violates the wire contract."""

    def __init__(self, message: str, body: str = ""):
        super().__init__(message)
        self.body = body


class UnscriptedPromptError(ProtocolError):
    """A strict mock had no reply scripted for this prompt fingerprint."""

    def __init__(self, fingerprint: str, body: str = ""):
        super().__init__(f"no scripted reply for prompt fingerprint {fingerprint}", body)
        self.fingerprint = fingerprint


class ConfigViolationError(ValueError):
    """A call tried to override a value the config pins."""


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for the three backends."""

    detect_url: str
    segment_url: str
    chat_url: str
    api_key: str | None = None
    request_timeout: float = 60.0
    max_retries: int = 2
    chat_temperature: float = 0.0  # pinned for reproducible language output
    detect_confidence_floor: float = 0.5
    chat_max_inflight: int = 4
    retry_backoff_base: float = 0.5  # seconds; schedule is base * 2**attempt, jitter-free

    def __post_init__(self) -> None:
        if self.chat_temperature < 0:
            raise ValueError("chat_temperature must be >= 0")
        if not 0.0 <= self.detect_confidence_floor <= 1.0:
            raise ValueError("detect_confidence_floor must be in [0, 1]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.chat_max_inflight < 1:
            raise ValueError("chat_max_inflight must be >= 1")

    @classmethod
    def from_base(cls, base_url: str, **overrides) -> "BackendConfig":
        base = base_url.rstrip("/")
        return cls(
            detect_url=base + DETECT_PATH,
            segment_url=base + SEGMENT_PATH,
            chat_url=base + CHAT_PATH,
            **overrides,
        )

    def with_env_overrides(self) -> "BackendConfig":
        """Apply OVAL_BACKEND_BASE / OVAL_API_KEY when present."""
        cfg = self
        base = os.environ.get(ENV_BACKEND_BASE)
        if base:
            base = base.rstrip("/")
            cfg = replace(
                cfg,
                detect_url=base + DETECT_PATH,
                segment_url=base + SEGMENT_PATH,
                chat_url=base + CHAT_PATH,
            )
        key = os.environ.get(ENV_API_KEY)
        if key:
            cfg = replace(cfg, api_key=key)
        return cfg


@dataclass(frozen=True)
class SegmentCandidate:
    """One mask proposal for a part query."""

    part_label: str
    confidence: float
    mask: BinaryMask

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def post_json(
    url: str,
    payload: dict,
    config: BackendConfig,
    session: requests.Session | None = None,
) -> dict:
    """POST a JSON body, retrying transient failures with exponential backoff.

    Retries connection errors, timeouts, and the transient status codes
    (429/502/503/504) up to config.max_retries times, sleeping
    retry_backoff_base * 2**attempt between tries. Anything else that is
    not a 2xx raises ProtocolError with the raw body attached.
    """
    post = (session or requests).post
    headers = {}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    last_transient: str | None = None
    rate_limited = False
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            time.sleep(config.retry_backoff_base * 2 ** (attempt - 1))
        try:
            resp = post(url, json=payload, headers=headers, timeout=config.request_timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_transient = f"{url}: {exc}"
            rate_limited = False
            continue
        if resp.status_code in _TRANSIENT_STATUSES:
            last_transient = f"{url}: HTTP {resp.status_code}"
            rate_limited = resp.status_code == 429
            continue
        if resp.status_code >= 400:
            _raise_protocol_error(url, resp)
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{url}: response is not JSON: {exc}", body=resp.text)
        if not isinstance(body, dict):
            raise ProtocolError(f"{url}: response must be a JSON object", body=resp.text)
        return body
    if rate_limited:
        raise RateLimitedError(f"rate limited after {config.max_retries} retries: {last_transient}")
    raise BackendUnreachableError(
        f"backend unreachable after {config.max_retries} retries: {last_transient}"
    )


def _raise_protocol_error(url: str, resp: requests.Response) -> None:
    text = resp.text
    try:
        body = resp.json()
    except ValueError:
        body = {}
    if isinstance(body, dict) and body.get("error") == "unscripted_prompt":
        raise UnscriptedPromptError(str(body.get("fingerprint", "?")), body=text)
    raise ProtocolError(f"{url}: HTTP {resp.status_code}: {text[:500]}", body=text)


class BackendGateway:
    """Client bundle for one backend configuration.

    Safe to share across concurrent pipeline runs: sessions are
    thread-local and chat requests are bounded by a semaphore sized
    config.chat_max_inflight. Pass `trace_sink` (a list) to collect the
    raw (endpoint, request, response) exchanges of successful calls.
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self._local = threading.local()
        self._chat_slots = threading.BoundedSemaphore(config.chat_max_inflight)

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def _call(self, url: str, payload: dict, trace_sink: list | None, endpoint: str) -> dict:
        body = post_json(url, payload, self.config, session=self._session())
        if trace_sink is not None:
            trace_sink.append((endpoint, payload, body))
        return body

    def detect_objects(
        self,
        image: RgbImage,
        candidate_labels: Sequence[str],
        trace_sink: list | None = None,
    ) -> list[Detection]:
        """Open-vocabulary detection over the candidate label list.

        Returns detections exactly as the backend reported them; the
        confidence floor is applied later by the pipeline.
        """
        if not candidate_labels:
            raise ValueError("candidate_labels must be non-empty")
        payload = {"image": rgb_payload(image), "candidate_labels": list(candidate_labels)}
        body = self._call(self.config.detect_url, payload, trace_sink, "detect")
        raw = body.get("detections")
        if not isinstance(raw, list):
            raise ProtocolError("detect response lacks a 'detections' list", body=str(body))
        allowed = {label.casefold() for label in candidate_labels}
        detections: list[Detection] = []
        for item in raw:
            try:
                det = Detection(
                    label=item["label"],
                    confidence=float(item["confidence"]),
                    bbox=tuple(item["bbox"]),
                )
                det.check_within(image.width, image.height)
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"bad detection {item!r}: {exc}", body=str(body))
            if det.label.casefold() not in allowed:
                raise ProtocolError(
                    f"detection label {det.label!r} not among candidate labels", body=str(body)
                )
            detections.append(det)
        return detections

    def segment_part(
        self,
        image: RgbImage,
        part_query: str,
        trace_sink: list | None = None,
    ) -> list[SegmentCandidate]:
        """Part segmentation; an empty candidate list means the query missed."""
        if not part_query.strip():
            raise ValueError("part_query must be non-empty")
        payload = {"image": rgb_payload(image), "query": part_query}
        body = self._call(self.config.segment_url, payload, trace_sink, "segment")
        raw = body.get("candidates")
        if not isinstance(raw, list):
            raise ProtocolError("segment response lacks a 'candidates' list", body=str(body))
        candidates: list[SegmentCandidate] = []
        for item in raw:
            try:
                mask = mask_from_payload(item["mask"])
                candidate = SegmentCandidate(
                    part_label=item["part_label"],
                    confidence=float(item["confidence"]),
                    mask=mask,
                )
            except (KeyError, TypeError, ValueError, RleCodecError) as exc:
                raise ProtocolError(f"bad segment candidate: {exc}", body=str(body))
            if (mask.width, mask.height) != (image.width, image.height):
                raise ProtocolError(
                    f"candidate mask {mask.width}x{mask.height} does not match image "
                    f"{image.width}x{image.height}",
                    body=str(body),
                )
            candidates.append(candidate)
        candidates.sort(key=lambda c: -c.confidence)
        return candidates

    def chat(
        self,
        messages: Sequence[dict],
        temperature: float | None = None,
        trace_sink: list | None = None,
    ) -> str:
        """Send a chat exchange and return the assistant text verbatim."""
        if not messages:
            raise ValueError("messages must be non-empty")
        if messages[-1].get("role") != "user":
            raise ValueError("final chat message must have role 'user'")
        if temperature is None:
            temperature = self.config.chat_temperature
        elif temperature != self.config.chat_temperature:
            raise ConfigViolationError(
                f"temperature {temperature} conflicts with pinned "
                f"{self.config.chat_temperature}"
            )
        payload = {
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "temperature": temperature,
        }
        with self._chat_slots:
            body = self._call(self.config.chat_url, payload, trace_sink, "chat")
        content = body.get("content")
        if not isinstance(content, str):
            raise ProtocolError("chat response lacks a string 'content'", body=str(body))
        return content
