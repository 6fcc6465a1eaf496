"""Optional live-backend smoke test, excluded from CI.

Enable by exporting:

    OVAL_LIVE_SMOKE=1
    OVAL_BACKEND_BASE=http://adapter-host:8100
    OVAL_SMOKE_IMAGE=/path/to/knife.png          # object on a plain background
    OVAL_SMOKE_HANDLE_BOX=x0,y0,x1,y1            # hand-annotated handle box

Real models drift, so this is documented as best-effort: it asserts only
that "grasp" grounds to a mask overlapping the annotated handle box with
IoU > 0.2.
"""

import os

import numpy as np
import pytest

from affground.datasets import UMD_OBJECT_CLASSES
from affground.gateway import BackendConfig, BackendGateway
from affground.imaging import load_rgb_png
from affground.model import GroundingStatus
from affground.pipeline import PipelineConfig, ground_affordance

pytestmark = pytest.mark.skipif(
    os.environ.get("OVAL_LIVE_SMOKE") != "1"
    or not os.environ.get("OVAL_BACKEND_BASE")
    or not os.environ.get("OVAL_SMOKE_IMAGE"),
    reason="live smoke disabled (set OVAL_LIVE_SMOKE=1 plus backend/image env vars)",
)


def test_live_grasp_grounding_overlaps_handle():
    config = BackendConfig.from_base("http://unused").with_env_overrides()
    gateway = BackendGateway(config)
    image = load_rgb_png(os.environ["OVAL_SMOKE_IMAGE"])
    result = ground_affordance(
        gateway,
        image,
        "grasp the object",
        PipelineConfig(object_vocabulary=UMD_OBJECT_CLASSES),
    )
    assert result.status is GroundingStatus.SUCCEEDED, result.status

    box = os.environ.get("OVAL_SMOKE_HANDLE_BOX")
    if not box:
        pytest.skip("no OVAL_SMOKE_HANDLE_BOX provided; grounding succeeded")
    x0, y0, x1, y1 = (int(c) for c in box.split(","))
    box_bits = np.zeros((image.height, image.width), dtype=bool)
    box_bits[y0:y1, x0:x1] = True
    mask_bits = np.asarray(result.mask.bits)
    intersection = np.count_nonzero(mask_bits & box_bits)
    union = np.count_nonzero(mask_bits | box_bits)
    assert intersection / union > 0.2
