"""On-disk dataset format: JSON manifest, RLE mask codec, ground-truth loading.

The RLE codec is shared with the wire protocol: row-major run lengths,
starting with the count of leading zeros (possibly 0) and alternating
zero/one runs thereafter. The manifest is a single JSON file with paths
relative to its own directory; see `load_manifest` for the schema.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from .imaging import load_heatmap_png
from .model import AffordanceVocabulary, BinaryMask, SaliencyMap

SCHEMA_VERSION = 1

# Standard UMD-style evaluation vocabulary.
UMD_OBJECT_CLASSES = (
    "knife", "saw", "scissors", "shears", "scoop", "spoon", "trowel", "bowl",
    "cup", "ladle", "mug", "pot", "shovel", "turner", "hammer", "mallet",
    "tenderizer",
)
UMD_AFFORDANCES = (
    "grasp", "cut", "scoop", "contain", "pound", "support", "wrap-grasp",
)

# Task wording fed to the object-selection prompt for each standard
# affordance; a manifest may override any of these.
DEFAULT_TASK_PHRASES: Mapping[str, str] = {
    "grasp": "grasp the object",
    "cut": "cut something with the object",
    "scoop": "scoop something with the object",
    "contain": "use the object to contain something",
    "pound": "pound something with the object",
    "support": "support something with the object",
    "wrap-grasp": "hold the object by wrapping your hand around it",
}


class RleCodecError(ValueError):
    """Run-length counts are malformed for the declared dimensions."""


class ManifestError(ValueError):
    """The manifest violates its schema or internal invariants."""


def encode_rle(mask: BinaryMask) -> list[int]:
    """Row-major run lengths; first entry is the leading-zero run (possibly 0)."""
    flat = np.asarray(mask.bits).ravel()
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return [int(c) for c in counts]


def decode_rle(counts: list[int], width: int, height: int) -> BinaryMask:
    """Inverse of `encode_rle`. Rejects counts that do not tile width*height."""
    if width < 1 or height < 1:
        raise RleCodecError(f"dimensions must be >= 1, got {width}x{height}")
    values: list[int] = []
    for c in counts:
        if isinstance(c, bool) or not isinstance(c, int):
            raise RleCodecError(f"counts must be integers, got {c!r}")
        if c < 0:
            raise RleCodecError(f"negative run length {c}")
        values.append(c)
    total = sum(values)
    if total != width * height:
        raise RleCodecError(
            f"run lengths sum to {total}, expected {width}x{height}={width * height}"
        )
    runs = np.array(values, dtype=np.int64)
    flags = np.arange(len(values)) % 2 == 1  # runs alternate starting with zeros
    flat = np.repeat(flags, runs)
    return BinaryMask(width=width, height=height, bits=flat.reshape(height, width))


def mask_payload(mask: BinaryMask) -> dict:
    """Wire/manifest form of a binary mask."""
    return {"width": mask.width, "height": mask.height, "rle": encode_rle(mask)}


def mask_from_payload(obj: dict) -> BinaryMask:
    try:
        width = int(obj["width"])
        height = int(obj["height"])
        rle = list(obj["rle"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RleCodecError(f"bad mask payload: {exc}") from exc
    return decode_rle(rle, width, height)


@dataclass
class HeatmapRef:
    """Lazy handle on a heatmap ground-truth PNG; loads once, thread-safe."""

    path: Path
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _cached: SaliencyMap | None = field(default=None, repr=False)

    def load(self) -> SaliencyMap:
        with self._lock:
            if self._cached is None:
                self._cached = load_heatmap_png(self.path)
            return self._cached


@dataclass(frozen=True)
class AffordanceRecord:
    """One dataset sample: RGB path, optional depth, per-affordance ground truth."""

    sample_id: str
    rgb_path: Path
    depth_path: Path | None
    object_label: str
    gt: Mapping[str, BinaryMask | HeatmapRef]


@dataclass(frozen=True)
class Manifest:
    schema_version: int
    vocabulary: AffordanceVocabulary
    object_vocabulary: tuple[str, ...]
    records: tuple[AffordanceRecord, ...]


def _png_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as im:
        return im.size  # (width, height)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ManifestError(message)


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a dataset manifest.

    Schema::

        {"schema_version": 1,
         "vocabulary": {"affordances": [...], "task_phrases": {...}},
         "object_vocabulary": [...],
         "records": [{"sample_id": "...", "rgb": "rel/path.png",
                      "depth": "rel/path.png",        # optional
                      "object": "knife",
                      "gt": {"grasp": {"mask_rle": {"width": W, "height": H, "rle": [...]}},
                             "cut":   {"heatmap": "rel/path.png"}}}]}

    Paths are relative to the manifest file. Invariants (unique sample ids,
    vocabulary membership, file existence, dimension agreement) are checked
    eagerly; heatmap pixel data is loaded lazily.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from exc

    _require(isinstance(doc, dict), f"{path}: manifest root must be an object")
    _require(doc.get("schema_version") == SCHEMA_VERSION,
             f"{path}: unsupported schema_version {doc.get('schema_version')!r}")

    vocab_doc = doc.get("vocabulary")
    _require(isinstance(vocab_doc, dict), "vocabulary must be an object")
    affordances = vocab_doc.get("affordances")
    _require(isinstance(affordances, list) and all(isinstance(a, str) for a in affordances)
             and affordances, "vocabulary.affordances must be a non-empty string list")
    phrases = dict(DEFAULT_TASK_PHRASES)
    phrases.update(vocab_doc.get("task_phrases") or {})
    missing = [a for a in affordances if not phrases.get(a)]
    _require(not missing, f"no task phrase (default or explicit) for: {missing}")
    try:
        vocabulary = AffordanceVocabulary(
            affordances=tuple(affordances),
            task_phrases={a: phrases[a] for a in affordances},
        )
    except ValueError as exc:
        raise ManifestError(f"invalid vocabulary: {exc}") from exc

    object_vocabulary = doc.get("object_vocabulary")
    _require(isinstance(object_vocabulary, list) and object_vocabulary
             and all(isinstance(o, str) for o in object_vocabulary),
             "object_vocabulary must be a non-empty string list")

    records_doc = doc.get("records")
    _require(isinstance(records_doc, list), "records must be a list")

    records: list[AffordanceRecord] = []
    seen_ids: set[str] = set()
    for idx, rec in enumerate(records_doc):
        where = f"record #{idx}"
        _require(isinstance(rec, dict), f"{where}: must be an object")
        sample_id = rec.get("sample_id")
        _require(isinstance(sample_id, str) and sample_id, f"{where}: bad sample_id")
        where = f"record {sample_id!r}"
        _require(sample_id not in seen_ids, f"{where}: duplicate sample_id")
        seen_ids.add(sample_id)

        obj_label = rec.get("object")
        _require(obj_label in object_vocabulary,
                 f"{where}: object {obj_label!r} not in object_vocabulary")

        rgb_path = base / rec.get("rgb", "")
        if not rgb_path.is_file():
            raise FileNotFoundError(f"{where}: missing RGB file {rgb_path}")
        rgb_w, rgb_h = _png_size(rgb_path)

        depth_path: Path | None = None
        if rec.get("depth") is not None:
            depth_path = base / rec["depth"]
            if not depth_path.is_file():
                raise FileNotFoundError(f"{where}: missing depth file {depth_path}")
            _require(_png_size(depth_path) == (rgb_w, rgb_h),
                     f"{where}: depth dimensions do not match RGB")

        gt_doc = rec.get("gt")
        _require(isinstance(gt_doc, dict) and gt_doc, f"{where}: gt must be a non-empty object")
        gt: dict[str, BinaryMask | HeatmapRef] = {}
        for affordance, entry in gt_doc.items():
            _require(affordance in vocabulary.affordances,
                     f"{where}: gt affordance {affordance!r} not in vocabulary")
            _require(isinstance(entry, dict), f"{where}/{affordance}: gt entry must be an object")
            if "mask_rle" in entry:
                try:
                    mask = mask_from_payload(entry["mask_rle"])
                except RleCodecError as exc:
                    raise ManifestError(f"{where}/{affordance}: {exc}") from exc
                _require((mask.width, mask.height) == (rgb_w, rgb_h),
                         f"{where}/{affordance}: mask dimensions do not match RGB")
                gt[affordance] = mask
            elif "heatmap" in entry:
                hm_path = base / entry["heatmap"]
                if not hm_path.is_file():
                    raise FileNotFoundError(f"{where}/{affordance}: missing heatmap {hm_path}")
                _require(_png_size(hm_path) == (rgb_w, rgb_h),
                         f"{where}/{affordance}: heatmap dimensions do not match RGB")
                gt[affordance] = HeatmapRef(path=hm_path)
            else:
                raise ManifestError(
                    f"{where}/{affordance}: gt entry needs 'mask_rle' or 'heatmap'"
                )
        records.append(AffordanceRecord(
            sample_id=sample_id,
            rgb_path=rgb_path,
            depth_path=depth_path,
            object_label=obj_label,
            gt=gt,
        ))

    return Manifest(
        schema_version=SCHEMA_VERSION,
        vocabulary=vocabulary,
        object_vocabulary=tuple(object_vocabulary),
        records=tuple(records),
    )


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write a manifest back to disk with paths relative to `path`."""
    path = Path(path)
    base = path.parent

    def rel(p: Path) -> str:
        return Path(os.path.relpath(p, base)).as_posix()

    records = []
    for rec in manifest.records:
        gt: dict[str, dict] = {}
        for affordance, entry in rec.gt.items():
            if isinstance(entry, BinaryMask):
                gt[affordance] = {"mask_rle": mask_payload(entry)}
            else:
                gt[affordance] = {"heatmap": rel(entry.path)}
        record_doc = {
            "sample_id": rec.sample_id,
            "rgb": rel(rec.rgb_path),
            "object": rec.object_label,
            "gt": gt,
        }
        if rec.depth_path is not None:
            record_doc["depth"] = rel(rec.depth_path)
        records.append(record_doc)

    doc = {
        "schema_version": manifest.schema_version,
        "vocabulary": {
            "affordances": list(manifest.vocabulary.affordances),
            "task_phrases": dict(manifest.vocabulary.task_phrases),
        },
        "object_vocabulary": list(manifest.object_vocabulary),
        "records": records,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
