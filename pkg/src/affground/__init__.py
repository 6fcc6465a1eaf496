"""Open-vocabulary affordance grounding: pipeline, metrics, grasp synthesis."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def schemas_dir() -> Path:
    """Directory holding the published wire-protocol JSON schemas."""
    return Path(resources.files(__name__) / "schemas")  # type: ignore[arg-type]


from .model import (  # noqa: E402
    AffordanceVocabulary,
    BinaryMask,
    ConfusionCounts,
    DepthImage,
    Detection,
    GroundingResult,
    GroundingStatus,
    RgbImage,
    SaliencyMap,
    confusion_counts,
    mask_centroid_and_axes,
    normalize_to_distribution,
)

__all__ = [
    "AffordanceVocabulary",
    "BinaryMask",
    "ConfusionCounts",
    "DepthImage",
    "Detection",
    "GroundingResult",
    "GroundingStatus",
    "RgbImage",
    "SaliencyMap",
    "confusion_counts",
    "mask_centroid_and_axes",
    "normalize_to_distribution",
    "schemas_dir",
    "__version__",
]
