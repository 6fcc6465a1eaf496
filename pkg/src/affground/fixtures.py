"""Synthetic scripted fixture corpus for offline end-to-end runs.

Ten 32x32 samples with hand-authored ground truth, a matching mock
script, and a ready-made config file. The cases are arranged so the
three ablations separate cleanly: vlm-only queries miss almost
everywhere, several cases only succeed through the alternative-name
reprompt, and a few fail at known stages (sub-threshold detection,
off-vocabulary selection, part never found).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import (
    DEFAULT_TASK_PHRASES,
    UMD_AFFORDANCES,
    UMD_OBJECT_CLASSES,
    mask_payload,
)
from .imaging import save_rgb_png
from .model import BinaryMask, RgbImage
from .prompts import (
    render_alternative_prompt,
    render_object_prompt,
    render_part_prompt,
)

CANVAS = 32

Px = tuple[int, int]  # (v, u)


def _rect(v0: int, v1: int, u0: int, u1: int) -> tuple[Px, ...]:
    return tuple((v, u) for v in range(v0, v1 + 1) for u in range(u0, u1 + 1))


def _mask(pixels: tuple[Px, ...]) -> BinaryMask:
    bits = np.zeros((CANVAS, CANVAS), dtype=bool)
    for v, u in pixels:
        bits[v, u] = True
    return BinaryMask.from_array(bits)


@dataclass(frozen=True)
class ScriptedCase:
    sample_id: str
    object_label: str
    affordance: str
    detect_confidence: float
    object_reply: str  # name the scripted LLM answers in the Objects section
    first_part: str | None
    first_part_hit: bool
    alt_part: str | None
    alt_part_hit: bool
    gt_px: tuple[Px, ...]
    pred_px: tuple[Px, ...] | None  # candidate mask served on the successful query
    vlm_pred_px: tuple[Px, ...] | None  # candidate for the bare affordance query


# tp/fp/fn per case are chosen so uniform F1 lands on exact simple values.
CASES: tuple[ScriptedCase, ...] = (
    ScriptedCase(
        "s01", "knife", "cut", 0.88, "knife", "blade", True, None, False,
        gt_px=_rect(8, 11, 4, 23),
        pred_px=_rect(8, 11, 4, 23),            # F = 1.0
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s02", "knife", "grasp", 0.91, "knife", "handle", True, None, False,
        gt_px=_rect(20, 21, 4, 8),
        pred_px=_rect(20, 21, 4, 7) + ((20, 10), (21, 10)),  # tp=8 fp=2 fn=2, F = 0.8
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s03", "mug", "wrap-grasp", 0.95, "mug", "mug body", False, "mug side", True,
        gt_px=_rect(6, 15, 20, 23),
        pred_px=_rect(6, 15, 20, 23),           # F = 1.0, reached via reprompt
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s04", "cup", "contain", 0.75, "cup", "cup top", False, "cup rim", True,
        gt_px=_rect(2, 3, 2, 3),
        pred_px=((2, 2), (2, 3), (3, 2), (3, 5)),  # tp=3 fp=1 fn=1, F = 0.75
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s05", "spoon", "scoop", 0.90, "spoon", "bowl", False, "spoon head", True,
        gt_px=_rect(10, 10, 10, 14),
        pred_px=_rect(10, 10, 10, 14),          # F = 1.0, reached via reprompt
        vlm_pred_px=((10, 10),) + _rect(12, 12, 10, 13),  # tp=1 fp=4 fn=4, F = 0.2
    ),
    ScriptedCase(
        "s06", "bowl", "contain", 0.85, "bowl", "interior", False, "bowl inside", False,
        gt_px=_rect(24, 27, 8, 15),
        pred_px=None,                            # part never found
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s07", "hammer", "pound", 0.80, "hammer", "head", True, None, False,
        gt_px=_rect(16, 19, 24, 29),
        pred_px=_rect(16, 19, 24, 29),          # F = 1.0
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s08", "pot", "support", 0.45, "", None, False, None, False,
        gt_px=_rect(28, 29, 2, 9),
        pred_px=None,                            # detection below the 0.5 floor
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s09", "scissors", "cut", 0.70, "sword", None, False, None, False,
        gt_px=_rect(4, 5, 26, 29),
        pred_px=None,                            # selection misses the detected set
        vlm_pred_px=None,
    ),
    ScriptedCase(
        "s10", "ladle", "scoop", 0.92, "ladle", "cup", False, "scoop end", True,
        gt_px=_rect(22, 23, 20, 24),
        pred_px=tuple(p for p in _rect(22, 23, 20, 24) if p != (23, 24)) + ((23, 26),),
        vlm_pred_px=None,                        # tp=9 fp=1 fn=1, F = 0.9
    ),
)


def _case_image(index: int) -> RgbImage:
    pixels = np.zeros((CANVAS, CANVAS, 3), dtype=np.uint8)
    pixels[:, :] = (20 + 9 * index, 36, 52)
    case = CASES[index]
    for v, u in case.gt_px:
        pixels[v, u] = (200, 120 + 8 * index, 40)
    return RgbImage.from_array(pixels)


def _candidate(part_label: str, pixels: tuple[Px, ...], confidence: float = 0.9) -> dict:
    return {
        "part_label": part_label,
        "confidence": confidence,
        "mask": mask_payload(_mask(pixels)),
    }


@dataclass(frozen=True)
class FixtureCorpus:
    root: Path
    manifest_path: Path
    script_path: Path
    config_path: Path


def build_fixture_corpus(root: str | Path) -> FixtureCorpus:
    """Materialize the corpus (images, manifest, mock script, config) under `root`."""
    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    records = []
    detect: dict[str, list] = {}
    segment: dict[str, dict[str, list]] = {}
    chat: list[dict] = []

    for index, case in enumerate(CASES):
        save_rgb_png(_case_image(index), images_dir / f"{case.sample_id}.png")
        records.append({
            "sample_id": case.sample_id,
            "rgb": f"images/{case.sample_id}.png",
            "object": case.object_label,
            "gt": {case.affordance: {"mask_rle": mask_payload(_mask(case.gt_px))}},
        })
        detect[case.sample_id] = [{
            "label": case.object_label,
            "confidence": case.detect_confidence,
            "bbox": [1, 1, 31, 31],
        }]

        queries: dict[str, list] = {}
        task = DEFAULT_TASK_PHRASES[case.affordance]
        if case.object_reply:
            chat.append({
                "prompt": render_object_prompt(task, [case.object_label]),
                "content": f"Objects: {case.object_reply}\nReason: it suits the task.",
            })
        if case.first_part is not None:
            chat.append({
                "prompt": render_part_prompt(task, case.object_label),
                "content": f"Part: {case.first_part}\nReason: that is the working part.",
            })
            if case.first_part_hit:
                queries[_segment_query(case.object_label, case.first_part)] = [
                    _candidate(case.first_part, case.pred_px)
                ]
        if case.alt_part is not None:
            chat.append({
                "prompt": render_alternative_prompt(case.object_label, [case.first_part]),
                "content": f"Part: {case.alt_part}\nReason: a more common name.",
            })
            if case.alt_part_hit:
                queries[_segment_query(case.object_label, case.alt_part)] = [
                    _candidate(case.alt_part, case.pred_px)
                ]
        if case.vlm_pred_px is not None:
            queries[case.affordance] = [_candidate(case.affordance, case.vlm_pred_px, 0.6)]
        segment[case.sample_id] = queries

    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps({
        "schema_version": 1,
        "vocabulary": {
            "affordances": list(UMD_AFFORDANCES),
            "task_phrases": {},
        },
        "object_vocabulary": list(UMD_OBJECT_CLASSES),
        "records": records,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    script_path = root / "mock_script.json"
    script_path.write_text(json.dumps({
        "images": {case.sample_id: f"images/{case.sample_id}.png" for case in CASES},
        "detect": detect,
        "segment": segment,
        "chat": chat,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    config_path = root / "config.json"
    config_path.write_text(json.dumps({
        "pipeline": {
            "confidence_floor": 0.5,
            "max_reprompts": 1,
            "candidate_pick": "highest-confidence",
            "object_vocabulary": list(UMD_OBJECT_CLASSES),
        },
        "metrics": {"beta": 1.0, "weighting": "uniform", "aggregation": "per-affordance"},
        "backend": {"max_retries": 2, "retry_backoff_base": 0.01},
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    return FixtureCorpus(
        root=root,
        manifest_path=manifest_path,
        script_path=script_path,
        config_path=config_path,
    )


def _segment_query(object_label: str, part: str) -> str:
    from .pipeline import compose_segment_query

    return compose_segment_query(object_label, part)
