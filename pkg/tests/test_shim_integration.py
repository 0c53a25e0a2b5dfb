"""Optional live-shim integration: runs only when OWSGG_SHIM_URL points at a
running shim (see shim/README.md). The rest of the suite never needs it."""

import os
from pathlib import Path

import numpy as np
import pytest

from owsgg.backends import BackendHub, DetectionRequest, ShimBackend, StageCache
from owsgg.config import ModelIds
from owsgg.core import ImageRef

SHIM_URL = os.environ.get("OWSGG_SHIM_URL")
SCENE = Path(__file__).parent.parent / "shim" / "test" / "fixtures" / "scene.png"

pytestmark = pytest.mark.skipif(
    not SHIM_URL or not SCENE.exists(), reason="OWSGG_SHIM_URL not set or shim fixture missing"
)


@pytest.fixture
def hub(tmp_path):
    shim = ShimBackend(SHIM_URL)
    return BackendHub(
        StageCache(tmp_path / "c.jsonl"),
        ModelIds(),
        mode="live",
        detect_backend=shim,
        depth_backend=shim,
        embed_backend=shim,
    )


@pytest.fixture
def scene_image():
    return ImageRef(id="scene", path=str(SCENE), width=100, height=70)


def test_detect_roundtrip(hub, scene_image):
    out = hub.detect(
        DetectionRequest(image=scene_image, label="cat", box_threshold=0.35, text_threshold=0.25)
    )
    assert out
    for (box, score) in out:
        assert score >= 0.35
        assert 0 <= box[0] < box[2] <= 100 and 0 <= box[1] < box[3] <= 70
    absent = hub.detect(
        DetectionRequest(image=scene_image, label="zebra", box_threshold=0.35, text_threshold=0.25)
    )
    assert absent == []


def test_depth_roundtrip(hub, scene_image):
    dm = hub.depth(scene_image)
    assert dm.values.shape == (70, 100)
    assert dm.values.min() == 0.0 and dm.values.max() == 1.0


def test_embed_roundtrip(hub):
    vecs = hub.embed(
        [
            "There is a man in the image.",
            "There is a person in the image.",
            "There is a window in the image.",
        ]
    )
    assert abs(np.linalg.norm(vecs[0]) - 1) < 1e-5
    assert vecs[0] @ vecs[1] > vecs[0] @ vecs[2]
