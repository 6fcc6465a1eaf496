"""PNG codecs for the raster types plus overlay rendering.

RGB travels on the wire as base64 PNG; depth and heatmap ground truth
live on disk as 16-bit single-channel PNGs (depth in millimeters,
heatmaps scaled to the full [0, 65535] range).
"""

from __future__ import annotations

import base64
import hashlib
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .model import BinaryMask, DepthImage, RgbImage, SaliencyMap


class ImageFormatError(ValueError):
    """A file on disk does not match the expected PNG layout."""


_16BIT_MODES = ("I;16", "I;16B", "I;16L", "I")


def load_rgb_png(path: str | Path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage.from_array(np.asarray(im.convert("RGB")))


def save_rgb_png(image: RgbImage, path: str | Path) -> None:
    Image.fromarray(np.asarray(image.pixels)).save(path, format="PNG")


def rgb_to_png_bytes(image: RgbImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image.pixels)).save(buf, format="PNG")
    return buf.getvalue()


def rgb_from_png_bytes(data: bytes) -> RgbImage:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return RgbImage.from_array(np.asarray(im.convert("RGB")))
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"payload is not decodable PNG: {exc}") from exc


def rgb_payload(image: RgbImage) -> dict:
    """Wire form of a full RGB image."""
    return {
        "width": image.width,
        "height": image.height,
        "png_b64": base64.b64encode(rgb_to_png_bytes(image)).decode("ascii"),
    }


def rgb_from_payload(obj: dict) -> RgbImage:
    try:
        data = base64.b64decode(obj["png_b64"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise ImageFormatError(f"bad png_b64 field: {exc}") from exc
    image = rgb_from_png_bytes(data)
    if (image.width, image.height) != (int(obj.get("width", -1)), int(obj.get("height", -1))):
        raise ImageFormatError(
            f"declared {obj.get('width')}x{obj.get('height')} does not match decoded "
            f"{image.width}x{image.height}"
        )
    return image


def load_depth_png(path: str | Path) -> DepthImage:
    """Load a 16-bit single-channel PNG; values are millimeters, 0 = invalid."""
    with Image.open(path) as im:
        if im.mode not in _16BIT_MODES:
            raise ImageFormatError(
                f"{path}: expected 16-bit single-channel PNG, got mode {im.mode!r}"
            )
        millimeters = np.asarray(im, dtype=np.float64)
    if millimeters.max(initial=0.0) > 65535:
        raise ImageFormatError(f"{path}: pixel values exceed 16-bit range")
    return DepthImage.from_array(millimeters / 1000.0)


def save_depth_png(depth: DepthImage, path: str | Path) -> None:
    millimeters = np.round(np.asarray(depth.depth) * 1000.0)
    if millimeters.max(initial=0.0) > 65535:
        raise ValueError("depth exceeds the 65.535 m range of 16-bit millimeter PNG")
    Image.fromarray(millimeters.astype(np.uint16)).save(path, format="PNG")


def load_heatmap_png(path: str | Path) -> SaliencyMap:
    """Load a 16-bit heatmap PNG; values normalized from [0, 65535] to [0, 1]."""
    with Image.open(path) as im:
        if im.mode not in _16BIT_MODES:
            raise ImageFormatError(
                f"{path}: expected 16-bit single-channel PNG, got mode {im.mode!r}"
            )
        raw = np.asarray(im, dtype=np.float64)
    return SaliencyMap.from_array(raw / 65535.0)


def save_heatmap_png(heatmap: SaliencyMap, path: str | Path) -> None:
    peak = heatmap.values.max(initial=0.0)
    scale = 65535.0 / peak if peak > 0 else 0.0
    Image.fromarray(np.round(heatmap.values * scale).astype(np.uint16)).save(
        path, format="PNG"
    )


def load_mask_png(path: str | Path) -> BinaryMask:
    """Any nonzero pixel counts as foreground."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMask.from_array(arr > 0)


def save_mask_png(mask: BinaryMask, path: str | Path) -> None:
    Image.fromarray(np.where(np.asarray(mask.bits), 255, 0).astype(np.uint8)).save(
        path, format="PNG"
    )


def mask_png_bytes(mask: BinaryMask) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.where(np.asarray(mask.bits), 255, 0).astype(np.uint8)).save(
        buf, format="PNG"
    )
    return buf.getvalue()


def overlay_color_for(name: str) -> tuple[int, int, int]:
    """Deterministic tint color derived from a label string."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    # Keep channels bright enough to stand out on dark backgrounds.
    return tuple(96 + (b % 160) for b in digest[:3])  # type: ignore[return-value]


def render_overlay(image: RgbImage, mask: BinaryMask, name: str) -> RgbImage:
    """Alpha-blend the mask onto the image at 50% with a color hashed from `name`."""
    if (image.width, image.height) != (mask.width, mask.height):
        raise ValueError(
            f"mask {mask.width}x{mask.height} does not match image "
            f"{image.width}x{image.height}"
        )
    color = np.array(overlay_color_for(name), dtype=np.float64)
    out = np.asarray(image.pixels, dtype=np.float64).copy()
    fg = np.asarray(mask.bits)
    out[fg] = out[fg] * 0.5 + color * 0.5
    return RgbImage.from_array(np.round(out).astype(np.uint8))
