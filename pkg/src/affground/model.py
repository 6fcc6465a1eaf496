"""Shared domain types and pure mask/image utilities.

Coordinate convention used everywhere: pixel (u, v) with u = column,
v = row, origin at the top-left corner. Rasters are stored row-major
as numpy arrays of shape (height, width[, channels]) and are frozen
after construction, so values are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Mapping

import numpy as np


class ShapeError(ValueError):
    """Two rasters that must agree on dimensions do not."""


class EmptyMaskError(ValueError):
    """An operation required foreground pixels and got none."""


class EmptyDistributionError(ValueError):
    """A map with no positive mass cannot be normalized."""


def _frozen_array(values, dtype, shape) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(values, dtype=dtype))
    if arr.shape != shape:
        raise ShapeError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB raster. `pixels` has shape (height, width, 3)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        object.__setattr__(
            self, "pixels", _frozen_array(self.pixels, np.uint8, (self.height, self.width, 3))
        )

    @classmethod
    def from_array(cls, pixels) -> "RgbImage":
        arr = np.asarray(pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeError(f"expected (H, W, 3) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RgbImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Depth raster in meters; a value of 0 marks an invalid/no-return pixel."""

    width: int
    height: int
    depth: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        arr = _frozen_array(self.depth, np.float64, (self.height, self.width))
        if np.any(arr < 0):
            raise ValueError("depth values must be >= 0")
        object.__setattr__(self, "depth", arr)

    @classmethod
    def from_array(cls, depth) -> "DepthImage":
        arr = np.asarray(depth, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"expected (H, W) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], depth=arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DepthImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.depth, other.depth)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean foreground raster. `bits` has shape (height, width)."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {self.width}x{self.height}")
        object.__setattr__(
            self, "bits", _frozen_array(self.bits, np.bool_, (self.height, self.width))
        )

    @classmethod
    def from_array(cls, bits) -> "BinaryMask":
        arr = np.asarray(bits).astype(bool)
        if arr.ndim != 2:
            raise ShapeError(f"expected (H, W) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], bits=arr)

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(width=width, height=height, bits=np.zeros((height, width), dtype=bool))

    @property
    def area(self) -> int:
        """Count of foreground pixels."""
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.bits, other.bits)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Nonnegative real-valued raster; a distribution map additionally sums to 1."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"map dimensions must be >= 1, got {self.width}x{self.height}")
        arr = _frozen_array(self.values, np.float64, (self.height, self.width))
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("saliency values must be finite and >= 0")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_array(cls, values) -> "SaliencyMap":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"expected (H, W) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], values=arr)

    def total(self) -> float:
        return float(self.values.sum())

    def is_distribution(self, tol: float = 1e-6) -> bool:
        return abs(self.total() - 1.0) <= tol

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SaliencyMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Detection:
    """One labeled box reported by the perception backend."""

    label: str
    confidence: float
    bbox: tuple[float, float, float, float]  # (x_min, y_min, x_max, y_max) in pixels

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("detection label must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        x0, y0, x1, y1 = self.bbox
        if x0 > x1 or y0 > y1:
            raise ValueError(f"degenerate bbox {self.bbox}")
        object.__setattr__(self, "bbox", (float(x0), float(y0), float(x1), float(y1)))

    def check_within(self, width: int, height: int) -> None:
        x0, y0, x1, y1 = self.bbox
        if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
            raise ValueError(f"bbox {self.bbox} exceeds {width}x{height} image bounds")


@dataclass(frozen=True)
class AffordanceVocabulary:
    """Ordered affordance labels plus the imperative task sentence for each."""

    affordances: tuple[str, ...]
    task_phrases: Mapping[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "affordances", tuple(self.affordances))
        if len(set(self.affordances)) != len(self.affordances):
            raise ValueError("affordance labels must be unique")
        phrases = dict(self.task_phrases)
        missing = [a for a in self.affordances if not phrases.get(a)]
        if missing:
            raise ValueError(f"missing task phrase for affordances: {missing}")
        object.__setattr__(self, "task_phrases", MappingProxyType(phrases))

    def task_for(self, affordance: str) -> str:
        return self.task_phrases[affordance]


class GroundingStatus(str, Enum):
    SUCCEEDED = "Succeeded"
    NO_OBJECT_DETECTED = "NoObjectDetected"
    NO_OBJECT_SELECTED = "NoObjectSelected"
    PART_NOT_FOUND = "PartNotFound"


@dataclass(frozen=True)
class TraceRecord:
    """One backend exchange: stage name plus canonical request/response bodies."""

    stage: str
    request: str
    response: str


@dataclass(frozen=True)
class GroundingResult:
    """Full trace of one pipeline run."""

    status: GroundingStatus
    selected_object: str | None = None
    part_names_tried: tuple[str, ...] = ()
    mask: BinaryMask | None = None
    trace: tuple[TraceRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "part_names_tried", tuple(self.part_names_tried))
        object.__setattr__(self, "trace", tuple(self.trace))
        succeeded = self.status is GroundingStatus.SUCCEEDED
        has_mask = self.mask is not None and self.mask.area > 0
        if succeeded != has_mask:
            raise ValueError(
                f"status {self.status.value} inconsistent with mask "
                f"{'present' if self.mask is not None else 'absent'}"
            )


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Per-pixel confusion counts between a predicted and ground-truth mask."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ShapeError(
            f"pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )
    p, g = pred.bits, gt.bits
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = pred.width * pred.height - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass(frozen=True)
class MaskAxes:
    """Centroid and principal axes of a mask's foreground pixel cloud.

    Angles are measured in the image plane from the +u axis toward +v
    (i.e. clockwise on screen), reported in [0, pi). When the two
    eigenvalues coincide the orientation is undefined; `major_angle`
    then defaults to 0 and `degenerate` is set.
    """

    centroid: tuple[float, float]  # (u, v), subpixel
    major_angle: float
    minor_angle: float
    eigenvalues: tuple[float, float]  # (lambda1 >= lambda2)
    degenerate: bool


# Relative spread below which the second-moment ellipse is treated as isotropic.
_DEGENERACY_RTOL = 1e-9


def mask_centroid_and_axes(mask: BinaryMask) -> MaskAxes:
    """Centroid and principal axes of the foreground via second central moments."""
    vs, us = np.nonzero(mask.bits)
    n = us.size
    if n == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    cu = float(us.mean())
    cv = float(vs.mean())
    du = us - cu
    dv = vs - cv
    m20 = float((du * du).mean())
    m02 = float((dv * dv).mean())
    m11 = float((du * dv).mean())
    spread = math.hypot((m20 - m02) / 2.0, m11)
    mean_moment = (m20 + m02) / 2.0
    lam1 = mean_moment + spread
    lam2 = mean_moment - spread
    if spread <= _DEGENERACY_RTOL * max(1.0, lam1):
        return MaskAxes(
            centroid=(cu, cv),
            major_angle=0.0,
            minor_angle=math.pi / 2.0,
            eigenvalues=(lam1, lam2),
            degenerate=True,
        )
    theta = 0.5 * math.atan2(2.0 * m11, m20 - m02)
    if theta < 0.0:
        theta += math.pi
    minor = theta + math.pi / 2.0
    if minor >= math.pi:
        minor -= math.pi
    return MaskAxes(
        centroid=(cu, cv),
        major_angle=theta,
        minor_angle=minor,
        eigenvalues=(lam1, lam2),
        degenerate=False,
    )


def normalize_to_distribution(source: BinaryMask | SaliencyMap) -> SaliencyMap:
    """Convert a mask or saliency map to a probability distribution over pixels.

    A binary mask maps to uniform weight 1/area over its foreground; a
    saliency map is divided by its total mass. Scale-invariant and
    idempotent on distributions.
    """
    if isinstance(source, BinaryMask):
        area = source.area
        if area == 0:
            raise EmptyDistributionError("mask has no foreground to distribute mass over")
        values = source.bits.astype(np.float64) / float(area)
        return SaliencyMap(width=source.width, height=source.height, values=values)
    total = source.values.sum()
    if total <= 0.0:
        raise EmptyDistributionError("saliency map has no positive mass")
    return SaliencyMap(
        width=source.width, height=source.height, values=source.values / total
    )
