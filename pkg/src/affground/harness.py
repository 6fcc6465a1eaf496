"""Dataset-level evaluation: run the pipeline per (record, affordance) pair.

Rows are produced in a deterministic order regardless of worker count.
Backend transport failures are recorded per row with a distinct status
(scored 0, but distinguishable from semantic pipeline failures).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .datasets import AffordanceRecord, HeatmapRef, Manifest
from .gateway import BackendError, BackendGateway
from .imaging import load_rgb_png
from .metrics import (
    STATUS_TRANSPORT_FAILURE,
    EvalRow,
    MetricConfig,
    fixations_from_heatmap,
    sorted_rows,
    weighted_fscore,
)
from .model import BinaryMask, GroundingResult, GroundingStatus
from .pipeline import ABLATION_VLM_ONLY, PipelineConfig, ground_affordance


@dataclass(frozen=True)
class EvalOutcome:
    rows: tuple[EvalRow, ...]
    results: dict[tuple[str, str], GroundingResult | None]  # None on transport failure


def _gt_binary(record: AffordanceRecord, affordance: str) -> BinaryMask:
    entry = record.gt[affordance]
    if isinstance(entry, HeatmapRef):
        return fixations_from_heatmap(entry.load())
    return entry


def _run_case(
    gateway: BackendGateway,
    record: AffordanceRecord,
    affordance: str,
    task: str,
    pipeline_cfg: PipelineConfig,
    metric_cfg: MetricConfig,
) -> tuple[EvalRow, GroundingResult | None]:
    image = load_rgb_png(record.rgb_path)
    try:
        result = ground_affordance(gateway, image, task, pipeline_cfg)
    except BackendError:
        row = EvalRow(
            sample_id=record.sample_id,
            affordance=affordance,
            status=STATUS_TRANSPORT_FAILURE,
            fscore=None,
        )
        return row, None
    if result.status is GroundingStatus.SUCCEEDED:
        score = weighted_fscore(result.mask, _gt_binary(record, affordance), metric_cfg)
        row = EvalRow(
            sample_id=record.sample_id,
            affordance=affordance,
            status=result.status.value,
            fscore=score,
        )
    else:
        row = EvalRow(
            sample_id=record.sample_id,
            affordance=affordance,
            status=result.status.value,
            fscore=None,
        )
    return row, result


def evaluate_manifest(
    gateway: BackendGateway,
    manifest: Manifest,
    pipeline_cfg: PipelineConfig,
    metric_cfg: MetricConfig = MetricConfig(),
    workers: int | None = None,
) -> EvalOutcome:
    """Ground every (record, gt affordance) case and score it.

    The task sent to the pipeline is the vocabulary's task phrase,
    except in vlm-only mode where the bare affordance word doubles as
    the segment query.
    """
    cases = [
        (record, affordance)
        for record in manifest.records
        for affordance in manifest.vocabulary.affordances
        if affordance in record.gt
    ]

    def run(case: tuple[AffordanceRecord, str]) -> tuple[EvalRow, GroundingResult | None]:
        record, affordance = case
        if pipeline_cfg.ablation == ABLATION_VLM_ONLY:
            task = affordance
        else:
            task = manifest.vocabulary.task_for(affordance)
        return _run_case(gateway, record, affordance, task, pipeline_cfg, metric_cfg)

    max_workers = workers or (os.cpu_count() or 1)
    if max_workers <= 1:
        outcomes = [run(case) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(run, cases))

    rows = sorted_rows(row for row, _ in outcomes)
    results = {
        (record.sample_id, affordance): result
        for (record, affordance), (_, result) in zip(cases, outcomes)
    }
    return EvalOutcome(rows=tuple(rows), results=results)
