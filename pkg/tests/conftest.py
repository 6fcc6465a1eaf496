import math

import numpy as np
import pytest

from affground.datasets import load_manifest
from affground.fixtures import build_fixture_corpus
from affground.gateway import BackendConfig, BackendGateway
from affground.mockserver import load_mock_script, serve_mock


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    return build_fixture_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def corpus_manifest(corpus):
    return load_manifest(corpus.manifest_path)


@pytest.fixture(scope="session")
def mock_backend(corpus):
    handle = serve_mock(load_mock_script(corpus.script_path))
    yield handle
    handle.stop()


@pytest.fixture()
def backend_config(mock_backend):
    return BackendConfig.from_base(mock_backend.url, retry_backoff_base=0.01)


@pytest.fixture()
def gateway(backend_config):
    return BackendGateway(backend_config)


@pytest.fixture()
def serve_script():
    """Serve ad-hoc MockScript objects; stops them all at teardown."""
    handles = []

    def _serve(script):
        handle = serve_mock(script)
        handles.append(handle)
        return handle

    yield _serve
    for handle in handles:
        handle.stop()


def rotated_rect_mask(
    long_px: float,
    short_px: float,
    angle_rad: float,
    canvas_w: int = 96,
    canvas_h: int = 96,
    center: tuple[float, float] | None = None,
):
    """Rasterize a rectangle whose long side points along `angle_rad`.

    Angle follows the image convention: measured from +u toward +v.
    Returns a numpy bool array of shape (canvas_h, canvas_w).
    """
    if center is None:
        center = ((canvas_w - 1) / 2.0, (canvas_h - 1) / 2.0)
    cu, cv = center
    us, vs = np.meshgrid(np.arange(canvas_w), np.arange(canvas_h))
    du = us - cu
    dv = vs - cv
    cos_a, sin_a = math.cos(angle_rad), math.sin(angle_rad)
    along = du * cos_a + dv * sin_a
    across = -du * sin_a + dv * cos_a
    return (np.abs(along) <= long_px / 2.0) & (np.abs(across) <= short_px / 2.0)


def angle_distance_mod_pi(a: float, b: float) -> float:
    """Distance between two undirected axis angles."""
    return abs(math.remainder(a - b, math.pi))
