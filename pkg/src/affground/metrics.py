"""Mask and saliency evaluation: weighted F-score, KLD, SIM, NSS, aggregation.

The F-score treats a missing prediction as 0, so pipeline failures are
scored rather than skipped. Distribution metrics expect inputs already
normalized to probability mass 1 (see `normalize_to_distribution`).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt

from .model import BinaryMask, SaliencyMap, ShapeError, confusion_counts

WEIGHTING_UNIFORM = "uniform"
WEIGHTING_DISTANCE_GAUSSIAN = "distance-gaussian"

AGGREGATE_PER_AFFORDANCE = "per-affordance"
AGGREGATE_PER_IMAGE = "per-image"

STATUS_TRANSPORT_FAILURE = "TransportFailure"


class UndefinedGroundTruthError(ValueError):
    """F-score is undefined when the ground truth has no foreground."""


class NormalizationError(ValueError):
    """A distribution metric received a map that does not sum to 1."""


class DegenerateMapError(ValueError):
    """NSS cannot standardize a map with zero variance."""


@dataclass(frozen=True)
class MetricConfig:
    """F-score settings.

    `alpha` is carried for the boundary-decay weighting family of the
    evaluation literature; the distance-gaussian rule implemented here
    is controlled by `sigma` alone.
    """

    beta: float = 1.0
    weighting: str = WEIGHTING_UNIFORM
    sigma: float = 5.0
    alpha: float = math.log(0.5) / 5.0

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.weighting not in (WEIGHTING_UNIFORM, WEIGHTING_DISTANCE_GAUSSIAN):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.weighting == WEIGHTING_DISTANCE_GAUSSIAN and self.sigma <= 0:
            raise ValueError("sigma must be > 0 for distance-gaussian weighting")

    def describe(self) -> dict:
        out = {"beta": self.beta, "weighting": self.weighting}
        if self.weighting == WEIGHTING_DISTANCE_GAUSSIAN:
            out["sigma"] = self.sigma
            out["alpha"] = self.alpha
        return out


def weighted_fscore(pred: BinaryMask, gt: BinaryMask, cfg: MetricConfig = MetricConfig()) -> float:
    """Weighted F-score of a predicted mask against binary ground truth.

    Uniform weighting reduces to the standard F-beta over pixel
    confusion counts (exactly 2*tp/(2*tp+fp+fn) at beta=1). The
    distance-gaussian weighting scales each error pixel by
    exp(-d^2 / (2*sigma^2)) where d is the Euclidean distance to the
    nearest ground-truth foreground pixel.
    """
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ShapeError(f"pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}")
    if gt.area == 0:
        raise UndefinedGroundTruthError("ground truth has no foreground")
    beta_sq = cfg.beta * cfg.beta
    if cfg.weighting == WEIGHTING_UNIFORM:
        counts = confusion_counts(pred, gt)
        tp_w: float = counts.tp
        fp_w: float = counts.fp
        fn_w: float = counts.fn
    else:
        distances = distance_transform_edt(~np.asarray(gt.bits))
        weights = np.exp(-(distances * distances) / (2.0 * cfg.sigma * cfg.sigma))
        p, g = np.asarray(pred.bits), np.asarray(gt.bits)
        tp_w = float(weights[p & g].sum())
        fp_w = float(weights[p & ~g].sum())
        fn_w = float(weights[~p & g].sum())
    denominator = (1.0 + beta_sq) * tp_w + beta_sq * fn_w + fp_w
    if denominator == 0.0:
        return 0.0
    return (1.0 + beta_sq) * tp_w / denominator


def _check_distribution(name: str, dist: SaliencyMap) -> None:
    if not dist.is_distribution():
        raise NormalizationError(f"{name} map sums to {dist.total()}, expected 1 within 1e-6")


def _check_same_shape(a: SaliencyMap, b) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise ShapeError(f"{a.width}x{a.height} vs {b.width}x{b.height}")


def kld(pred: SaliencyMap, gt: SaliencyMap, epsilon: float = 1e-12) -> float:
    """Kullback-Leibler divergence of gt from pred over pixels.

    `epsilon` is added to pred only: binary-mask predictions contain
    exact zeros, while gt zeros contribute nothing by definition.
    """
    _check_same_shape(pred, gt)
    _check_distribution("pred", pred)
    _check_distribution("gt", gt)
    g = gt.values
    p = pred.values
    support = g > 0
    return float(np.sum(g[support] * np.log(g[support] / (p[support] + epsilon))))


def sim(pred: SaliencyMap, gt: SaliencyMap) -> float:
    """Histogram intersection of two distributions: sum of element-wise minima."""
    _check_same_shape(pred, gt)
    _check_distribution("pred", pred)
    _check_distribution("gt", gt)
    return float(np.minimum(pred.values, gt.values).sum())


def nss(pred: SaliencyMap, fixations: BinaryMask) -> float:
    """Mean of the standardized saliency map over the fixation pixels."""
    _check_same_shape(pred, fixations)
    if fixations.area == 0:
        raise ValueError("fixation mask has no foreground")
    values = pred.values
    std = float(values.std())
    if std == 0.0:
        raise DegenerateMapError("saliency map has zero variance")
    standardized = (values - values.mean()) / std
    return float(standardized[np.asarray(fixations.bits)].mean())


def fixations_from_heatmap(heatmap: SaliencyMap, fraction: float = 0.5) -> BinaryMask:
    """Binarize a heatmap at `fraction` of its peak; used when no explicit
    fixation mask exists. The rule is deterministic and recorded in reports."""
    peak = heatmap.values.max(initial=0.0)
    if peak <= 0:
        raise ValueError("heatmap has no positive values")
    return BinaryMask.from_array(heatmap.values >= fraction * peak)


@dataclass(frozen=True)
class EvalRow:
    """Score for one (sample, affordance) case; fscore None means zero-filled."""

    sample_id: str
    affordance: str
    status: str
    fscore: float | None

    def __post_init__(self) -> None:
        if (self.fscore is None) != (self.status != "Succeeded"):
            raise ValueError(
                f"row {self.sample_id}/{self.affordance}: fscore must be present "
                "exactly when status is Succeeded"
            )
        if self.fscore is not None and not 0.0 <= self.fscore <= 1.0:
            raise ValueError(f"fscore {self.fscore} out of [0, 1]")

    @property
    def scored(self) -> float:
        return 0.0 if self.fscore is None else self.fscore


def aggregate(rows: Sequence[EvalRow], mode: str = AGGREGATE_PER_AFFORDANCE) -> dict:
    """Reduce rows to per-affordance means plus an overall average.

    Zero-filled rows contribute 0. Per-affordance mode averages within
    each affordance and then reports the unweighted mean of those means;
    per-image mode averages over all rows directly.
    """
    if not rows:
        raise ValueError("no rows to aggregate")
    if mode not in (AGGREGATE_PER_AFFORDANCE, AGGREGATE_PER_IMAGE):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    by_affordance: dict[str, list[float]] = {}
    for row in rows:
        by_affordance.setdefault(row.affordance, []).append(row.scored)
    per_affordance = {
        affordance: sum(scores) / len(scores)
        for affordance, scores in sorted(by_affordance.items())
    }
    if mode == AGGREGATE_PER_AFFORDANCE:
        average = sum(per_affordance.values()) / len(per_affordance)
    else:
        average = sum(row.scored for row in rows) / len(rows)
    return {
        "mode": mode,
        "per_affordance": per_affordance,
        "average": average,
        "row_count": len(rows),
    }


def sorted_rows(rows: Iterable[EvalRow]) -> list[EvalRow]:
    return sorted(rows, key=lambda r: (r.sample_id, r.affordance))


def write_csv(rows: Sequence[EvalRow], path: str | Path) -> None:
    """UTF-8 CSV report, one row per (sample, affordance), deterministic order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "affordance", "status", "fscore"])
        for row in sorted_rows(rows):
            writer.writerow([row.sample_id, row.affordance, row.status, repr(row.scored)])


def write_summary(summary: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
