"""Top-down grasp synthesis from an affordance mask plus depth.

The built-in planner grasps at the mask centroid with the gripper
closing across the object's narrow dimension (minor principal axis);
approach is always straight down the camera z-axis. An external
planner service can be substituted through `plan_via_external`, whose
result is converted to the same top-down form.
"""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .datasets import mask_payload
from .gateway import BackendConfig, BackendError, ProtocolError, post_json
from .model import BinaryMask, DepthImage, EmptyMaskError, mask_centroid_and_axes

APPROACH_DOWN = (0.0, 0.0, -1.0)

# Depth sampled as the median of valid returns in this window around the
# grasp pixel; median resists depth holes at object edges.
_DEPTH_WINDOW = 5


class InvalidDepthError(ValueError):
    """A projection was requested for a non-positive depth."""


class DepthHoleError(ValueError):
    """No valid depth returns near the grasp point."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be > 0")


@dataclass(frozen=True)
class GraspPose:
    """Top-down pick: position in the camera frame plus wrist yaw.

    Yaw is the in-plane gripper-closing direction, canonicalized to
    [-pi/2, pi/2) because antipodal grasps are ambiguous by pi. The
    approach vector is fixed straight down the camera z-axis.
    """

    position: tuple[float, float, float]
    yaw: float
    approach: tuple[float, float, float] = APPROACH_DOWN
    degenerate: bool = False
    quality: float | None = None

    def __post_init__(self) -> None:
        if self.position[2] <= 0:
            raise ValueError(f"grasp depth must be > 0, got {self.position[2]}")
        if not -math.pi / 2 <= self.yaw < math.pi / 2:
            raise ValueError(f"yaw {self.yaw} outside [-pi/2, pi/2)")


def pixel_to_camera(
    u: float, v: float, depth: float, k: CameraIntrinsics
) -> tuple[float, float, float]:
    """Back-project a pixel at a known depth into the camera frame."""
    if depth <= 0:
        raise InvalidDepthError(f"depth must be > 0, got {depth}")
    x = (u - k.cx) * depth / k.fx
    y = (v - k.cy) * depth / k.fy
    return (x, y, depth)


def canonical_yaw(angle: float) -> float:
    """Wrap an in-plane angle into [-pi/2, pi/2)."""
    wrapped = math.remainder(angle, math.pi)
    if wrapped >= math.pi / 2:
        wrapped -= math.pi
    return wrapped


def _median_window_depth(depth: DepthImage, u: float, v: float) -> float:
    half = _DEPTH_WINDOW // 2
    col = int(round(u))
    row = int(round(v))
    r0 = max(0, row - half)
    r1 = min(depth.height, row + half + 1)
    c0 = max(0, col - half)
    c1 = min(depth.width, col + half + 1)
    window = np.asarray(depth.depth)[r0:r1, c0:c1]
    valid = window[window > 0]
    if valid.size == 0:
        raise DepthHoleError(
            f"no valid depth in {_DEPTH_WINDOW}x{_DEPTH_WINDOW} window at ({col}, {row})"
        )
    return float(np.median(valid))


def plan_topdown_grasp(
    mask: BinaryMask, depth: DepthImage, k: CameraIntrinsics
) -> GraspPose:
    """Grasp at the mask centroid, closing across the minor principal axis."""
    if mask.area < 10:
        raise EmptyMaskError(f"mask area {mask.area} too small to plan a grasp (need >= 10)")
    if (mask.width, mask.height) != (depth.width, depth.height):
        raise ValueError(
            f"mask {mask.width}x{mask.height} does not match depth "
            f"{depth.width}x{depth.height}"
        )
    axes = mask_centroid_and_axes(mask)
    u, v = axes.centroid
    z = _median_window_depth(depth, u, v)
    yaw = 0.0 if axes.degenerate else canonical_yaw(axes.minor_angle)
    return GraspPose(
        position=pixel_to_camera(u, v, z, k),
        yaw=yaw,
        degenerate=axes.degenerate,
    )


def _depth_png_b64(depth: DepthImage) -> str:
    millimeters = np.round(np.asarray(depth.depth) * 1000.0).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(millimeters).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def plan_via_external(
    mask: BinaryMask,
    depth: DepthImage,
    k: CameraIntrinsics,
    planner_url: str,
    config: BackendConfig | None = None,
    fallback: bool = False,
) -> GraspPose:
    """Ask an external planner service, then convert its grasp to top-down form.

    The planner's x, y, z and in-plane axis are kept; its approach
    direction is discarded in favor of straight-down. With `fallback`
    set, transport failures fall back to the built-in planner.
    """
    if config is None:
        config = BackendConfig(detect_url="", segment_url="", chat_url="")
    payload = {
        "mask": mask_payload(mask),
        "depth_png_b64": _depth_png_b64(depth),
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy},
    }
    try:
        body = post_json(planner_url, payload, config)
    except BackendError:
        if fallback:
            return plan_topdown_grasp(mask, depth, k)
        raise
    try:
        x, y, z = (float(c) for c in body["position"])
        axis_angle = float(body["axis_angle"])
        quality = float(body["quality"]) if body.get("quality") is not None else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad planner response: {exc}", body=str(body))
    if z <= 0:
        raise ProtocolError(f"planner returned non-positive depth {z}", body=str(body))
    return GraspPose(
        position=(x, y, z),
        yaw=canonical_yaw(axis_angle),
        quality=quality,
    )
