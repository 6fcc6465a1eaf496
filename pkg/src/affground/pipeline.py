"""End-to-end grounding: detect, filter, select, part query, segment, reprompt.

Semantic failures (nothing detected, nothing selected, part never
found) are encoded in GroundingResult.status so evaluation can score
them as zero; only transport/protocol problems raise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .gateway import BackendGateway, SegmentCandidate
from .model import (
    BinaryMask,
    Detection,
    GroundingResult,
    GroundingStatus,
    RgbImage,
    TraceRecord,
)
from .prompts import (
    DEFAULT_TEMPLATES,
    ParseError,
    TemplateSet,
    extract_list,
    parse_structured_reply,
    render_alternative_prompt,
    render_object_prompt,
    render_part_prompt,
)

ABLATION_FULL = "full"
ABLATION_NO_REPROMPT = "no-reprompt"
ABLATION_VLM_ONLY = "vlm-only"

PICK_HIGHEST_CONFIDENCE = "highest-confidence"
PICK_UNION = "union"


@dataclass(frozen=True)
class PipelineConfig:
    confidence_floor: float = 0.5
    max_reprompts: int = 1
    candidate_pick: str = PICK_HIGHEST_CONFIDENCE
    object_vocabulary: tuple[str, ...] = ()
    ablation: str = ABLATION_FULL
    templates: TemplateSet = DEFAULT_TEMPLATES

    def __post_init__(self) -> None:
        object.__setattr__(self, "object_vocabulary", tuple(self.object_vocabulary))
        if self.max_reprompts < 0:
            raise ValueError("max_reprompts must be >= 0")
        if self.candidate_pick not in (PICK_HIGHEST_CONFIDENCE, PICK_UNION):
            raise ValueError(f"unknown candidate_pick {self.candidate_pick!r}")
        if self.ablation not in (ABLATION_FULL, ABLATION_NO_REPROMPT, ABLATION_VLM_ONLY):
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.ablation != ABLATION_VLM_ONLY and not self.object_vocabulary:
            raise ValueError(f"{self.ablation} mode requires an object vocabulary")

    def describe(self) -> dict:
        return {
            "confidence_floor": self.confidence_floor,
            "max_reprompts": self.max_reprompts,
            "candidate_pick": self.candidate_pick,
            "object_vocabulary": list(self.object_vocabulary),
            "ablation": self.ablation,
        }


def filter_detections(detections: Sequence[Detection], floor: float) -> list[Detection]:
    """Keep detections with confidence >= floor ("below" is strict), order preserved."""
    return [d for d in detections if d.confidence >= floor]


def compose_segment_query(object_name: str, part: str) -> str:
    """Object-qualified part query, e.g. ("knife", "handle") -> "knife handle".

    Parts that already name the object ("cup top" for "cup") pass
    through unchanged to avoid stuttering queries like "cup cup top".
    """
    obj = object_name.strip().casefold()
    norm = part.strip().casefold()
    if norm == obj or norm.startswith(obj + " "):
        return part
    return f"{object_name} {part}"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class _Tracer:
    """Collects gateway exchanges and tags them with pipeline stage names."""

    def __init__(self) -> None:
        self.records: list[TraceRecord] = []

    def run(self, stage: str, call, *args, **kwargs):
        sink: list = []
        result = call(*args, trace_sink=sink, **kwargs)
        for _endpoint, request, response in sink:
            self.records.append(
                TraceRecord(stage=stage, request=_canonical(request), response=_canonical(response))
            )
        return result


def _dedupe_labels(labels: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for label in labels:
        key = label.casefold()
        if key not in seen:
            seen.add(key)
            out.append(label)
    return out


def _chat_parsed(
    gateway: BackendGateway,
    tracer: _Tracer,
    stage: str,
    prompt: str,
    required_headers: Sequence[str],
):
    """One chat round-trip with a single verbatim retry on a parse failure."""
    messages = [{"role": "user", "content": prompt}]
    reply = tracer.run(stage, gateway.chat, messages)
    try:
        return parse_structured_reply(reply, required_headers)
    except ParseError:
        reply = tracer.run(stage, gateway.chat, messages)
        return parse_structured_reply(reply, required_headers)


def select_objects(
    gateway: BackendGateway,
    task: str,
    detected_labels: Sequence[str],
    templates: TemplateSet = DEFAULT_TEMPLATES,
    tracer: _Tracer | None = None,
) -> list[str]:
    """Ask the language backend which detected objects suit the task.

    Returns the case-insensitive intersection of the reply with
    `detected_labels`, in reply order (detected casing kept). An empty
    list signals that nothing usable was selected; parse failures after
    the retry are treated the same way.
    """
    if not detected_labels:
        raise ValueError("detected_labels must be non-empty")
    tracer = tracer or _Tracer()
    prompt = render_object_prompt(task, detected_labels, templates)
    try:
        reply = _chat_parsed(gateway, tracer, "chat/object-select", prompt, ["objects", "reason"])
    except ParseError:
        return []
    wanted = extract_list(reply.sections["objects"])
    by_key = {label.casefold(): label for label in detected_labels}
    return [by_key[w.casefold()] for w in wanted if w.casefold() in by_key]


def query_part(
    gateway: BackendGateway,
    task: str,
    object_name: str,
    templates: TemplateSet = DEFAULT_TEMPLATES,
    tracer: _Tracer | None = None,
) -> str | None:
    """Ask for the task-relevant part of the object; None if no usable reply."""
    if not task or not object_name:
        raise ValueError("task and object_name must be non-empty")
    tracer = tracer or _Tracer()
    prompt = render_part_prompt(task, object_name, templates)
    try:
        reply = _chat_parsed(gateway, tracer, "chat/part-query", prompt, ["part", "reason"])
    except ParseError:
        return None
    parts = extract_list(reply.sections["part"])
    return parts[0] if parts else None


def _pick_candidate(candidates: list[SegmentCandidate], how: str) -> BinaryMask:
    if how == PICK_HIGHEST_CONFIDENCE:
        return candidates[0].mask
    union = reduce(np.logical_or, (np.asarray(c.mask.bits) for c in candidates))
    return BinaryMask.from_array(union)


def segment_with_reprompt(
    gateway: BackendGateway,
    image: RgbImage,
    object_name: str,
    first_part: str,
    config: PipelineConfig,
    max_reprompts: int | None = None,
    tracer: _Tracer | None = None,
) -> tuple[BinaryMask | None, list[str]]:
    """Try to segment the part, asking for alternative names on misses.

    Returns (mask, part_names_tried); mask is None when every attempt
    came back empty (PartNotFound, encoded upstream). A repeated
    alternative name burns an attempt without a segment call, since
    zero-temperature replies can loop.
    """
    if not first_part:
        raise ValueError("first_part must be non-empty")
    tracer = tracer or _Tracer()
    budget = config.max_reprompts if max_reprompts is None else max_reprompts
    max_attempts = 1 + budget
    tried: list[str] = []
    seen: set[str] = set()
    part: str | None = first_part
    for attempt in range(max_attempts):
        tried.append(part)
        key = part.strip().casefold()
        if key not in seen:
            seen.add(key)
            candidates = [
                c
                for c in tracer.run(
                    "segment", gateway.segment_part, image, compose_segment_query(object_name, part)
                )
                if c.mask.area > 0
            ]
            if candidates:
                return _pick_candidate(candidates, config.candidate_pick), tried
        if attempt + 1 == max_attempts:
            break
        prompt = render_alternative_prompt(object_name, tried, config.templates)
        try:
            reply = _chat_parsed(
                gateway, tracer, "chat/alternative-part", prompt, ["part", "reason"]
            )
        except ParseError:
            break
        parts = extract_list(reply.sections["part"])
        if not parts:
            break
        part = parts[0]
    return None, tried


def _ground_vlm_only(
    gateway: BackendGateway, image: RgbImage, task: str, config: PipelineConfig
) -> GroundingResult:
    tracer = _Tracer()
    candidates = [
        c
        for c in tracer.run("segment", gateway.segment_part, image, task)
        if c.mask.area > 0
    ]
    if candidates:
        return GroundingResult(
            status=GroundingStatus.SUCCEEDED,
            mask=_pick_candidate(candidates, config.candidate_pick),
            part_names_tried=(task,),
            trace=tuple(tracer.records),
        )
    return GroundingResult(
        status=GroundingStatus.PART_NOT_FOUND,
        part_names_tried=(task,),
        trace=tuple(tracer.records),
    )


def _select_stage(
    gateway: BackendGateway,
    image: RgbImage,
    task: str,
    config: PipelineConfig,
    tracer: _Tracer,
) -> list[str] | GroundingResult:
    """Detect, filter, and select; a GroundingResult is a terminal failure."""
    detections = tracer.run(
        "detect", gateway.detect_objects, image, list(config.object_vocabulary)
    )
    kept = filter_detections(detections, config.confidence_floor)
    if not kept:
        return GroundingResult(
            status=GroundingStatus.NO_OBJECT_DETECTED, trace=tuple(tracer.records)
        )
    labels = _dedupe_labels([d.label for d in kept])
    selected = select_objects(gateway, task, labels, config.templates, tracer)
    if not selected:
        return GroundingResult(
            status=GroundingStatus.NO_OBJECT_SELECTED, trace=tuple(tracer.records)
        )
    return selected


def _ground_object(
    gateway: BackendGateway,
    image: RgbImage,
    task: str,
    chosen: str,
    config: PipelineConfig,
    budget: int,
    tracer: _Tracer,
) -> GroundingResult:
    first_part = query_part(gateway, task, chosen, config.templates, tracer)
    if first_part is None:
        return GroundingResult(
            status=GroundingStatus.PART_NOT_FOUND,
            selected_object=chosen,
            trace=tuple(tracer.records),
        )
    mask, tried = segment_with_reprompt(
        gateway, image, chosen, first_part, config, max_reprompts=budget, tracer=tracer
    )
    if mask is None:
        return GroundingResult(
            status=GroundingStatus.PART_NOT_FOUND,
            selected_object=chosen,
            part_names_tried=tuple(tried),
            trace=tuple(tracer.records),
        )
    return GroundingResult(
        status=GroundingStatus.SUCCEEDED,
        selected_object=chosen,
        part_names_tried=tuple(tried),
        mask=mask,
        trace=tuple(tracer.records),
    )


def ground_affordance(
    gateway: BackendGateway,
    image: RgbImage,
    task: str,
    config: PipelineConfig,
) -> GroundingResult:
    """Run the full grounding state machine for one image and task.

    Grounds the first selected object (the expected single-object case;
    see ground_affordance_per_object for multi-object scenes). In
    vlm-only mode all language stages are skipped and `task` itself
    (the bare affordance word, by convention) is sent as the segment
    query. no-reprompt mode is the full pipeline with the reprompt
    budget forced to zero.
    """
    if config.ablation == ABLATION_VLM_ONLY:
        return _ground_vlm_only(gateway, image, task, config)
    budget = 0 if config.ablation == ABLATION_NO_REPROMPT else config.max_reprompts
    tracer = _Tracer()
    selected = _select_stage(gateway, image, task, config, tracer)
    if isinstance(selected, GroundingResult):
        return selected
    return _ground_object(gateway, image, task, selected[0], config, budget, tracer)


def ground_affordance_per_object(
    gateway: BackendGateway,
    image: RgbImage,
    task: str,
    config: PipelineConfig,
) -> list[GroundingResult]:
    """Ground every selected object, one result each.

    Detection and object selection run once; the part query and
    segmentation stages run per object, each result carrying the shared
    stage records plus its own continuation.
    """
    if config.ablation == ABLATION_VLM_ONLY:
        return [_ground_vlm_only(gateway, image, task, config)]
    budget = 0 if config.ablation == ABLATION_NO_REPROMPT else config.max_reprompts
    tracer = _Tracer()
    selected = _select_stage(gateway, image, task, config, tracer)
    if isinstance(selected, GroundingResult):
        return [selected]
    shared = list(tracer.records)
    results = []
    for chosen in selected:
        branch = _Tracer()
        branch.records = list(shared)
        results.append(
            _ground_object(gateway, image, task, chosen, config, budget, branch)
        )
    return results


def result_to_json_obj(result: GroundingResult) -> dict:
    """JSON-ready form of a GroundingResult (mask as RLE payload)."""
    from .datasets import mask_payload

    return {
        "status": result.status.value,
        "selected_object": result.selected_object,
        "part_names_tried": list(result.part_names_tried),
        "mask": mask_payload(result.mask) if result.mask is not None else None,
        "trace": [
            {"stage": t.stage, "request": t.request, "response": t.response}
            for t in result.trace
        ],
    }
