import json

import numpy as np
import pytest

from owsgg.core import (
    BoundingBox,
    GroundTruthGraph,
    ImageRef,
    ObjectInstance,
    VocabularyProfile,
    apply_novelty_lists,
    clamp_box,
    iou,
    load_manifest,
    load_vocabulary,
    normalize_label,
)
from owsgg.errors import DegenerateBox, UnknownLabel

IMG = ImageRef(id="x", path="/dev/null", width=100, height=100)


def box(*coords):
    return BoundingBox(*coords)


class TestIou:
    def test_identical_boxes(self):
        b = box(3, 4, 20, 30)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        # intersection 5x10 = 50, union 100 + 100 - 50 = 150
        assert iou(box(0, 0, 10, 10), box(5, 0, 15, 10)) == pytest.approx(50 / 150, abs=1e-12)

    def test_symmetry_and_range(self):
        rng = np.random.RandomState(7)
        for _ in range(300):
            x1, y1 = rng.uniform(0, 80, 2)
            a = box(x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 20))
            x1, y1 = rng.uniform(0, 80, 2)
            b = box(x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 20))
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0


class TestClampBox:
    def test_clip_to_origin(self):
        assert clamp_box((-5, -5, 10, 10), IMG).as_list() == [0, 0, 10, 10]

    def test_identity(self):
        assert clamp_box((0, 0, 50, 50), IMG).as_list() == [0, 0, 50, 50]

    def test_clip_to_extent(self):
        assert clamp_box((90, 90, 200, 200), IMG).as_list() == [90, 90, 100, 100]

    def test_degenerate_after_clamp(self):
        with pytest.raises(DegenerateBox):
            clamp_box((110, 0, 120, 10), IMG)
        with pytest.raises(DegenerateBox):
            clamp_box((10, 10, 10, 20), IMG)

    def test_idempotent(self):
        rng = np.random.RandomState(3)
        for _ in range(200):
            raw = tuple(rng.uniform(-50, 150, 4))
            try:
                once = clamp_box(raw, IMG)
            except DegenerateBox:
                continue
            assert clamp_box(once.as_list(), IMG) == once


def test_normalize_label():
    assert normalize_label("  Traffic Light. ") == "traffic light"
    assert normalize_label("chest of drawers") == "chest of drawers"
    assert normalize_label("CAT,") == "cat"


def test_bounding_box_rejects_degenerate():
    with pytest.raises(DegenerateBox):
        BoundingBox(5, 5, 5, 10)


def test_object_instance_score_range():
    with pytest.raises(ValueError):
        ObjectInstance(index=0, label="cat", box=box(0, 0, 1, 1), det_score=1.5)


def test_ground_truth_graph_validation():
    objs = (ObjectInstance(index=0, label="cat", box=box(0, 0, 5, 5)),)
    with pytest.raises(ValueError):
        GroundTruthGraph(image=IMG, objects=objs, relations=((0, 1, "on"),))
    with pytest.raises(ValueError):
        GroundTruthGraph(image=IMG, objects=objs, relations=((0, 0, "on"),))


class TestVocabulary:
    def test_train_subsets_enforced(self):
        with pytest.raises(UnknownLabel):
            VocabularyProfile(objects=("cat",), relations=("on",), train_objects=frozenset({"dog"}))
        with pytest.raises(UnknownLabel):
            VocabularyProfile(
                objects=("cat",), relations=("on",), train_triplets=frozenset({("cat", "cat", "near")})
            )

    def test_load_and_novelty(self, tmp_path):
        doc = {
            "objects": ["Cat", "dog "],
            "relations": ["On", "near"],
            "train_objects": ["cat"],
            "train_relations": ["on"],
            "train_triplets": [["cat", "dog", "on"]],
        }
        p = tmp_path / "vocab.json"
        p.write_text(json.dumps(doc))
        vocab = load_vocabulary(p)
        assert vocab.objects == ("cat", "dog")
        assert vocab.train_triplets == frozenset({("cat", "dog", "on")})

        derived = apply_novelty_lists(vocab, novel_objects=frozenset({"dog"}))
        assert derived.train_objects == frozenset({"cat"})
        with pytest.raises(UnknownLabel):
            apply_novelty_lists(vocab, novel_objects=frozenset({"horse"}))


def test_load_manifest(tmp_path):
    rec = {
        "id": "a",
        "path": "img.png",
        "width": 100,
        "height": 80,
        "objects": [
            {"label": "Cat", "box": [-2, 0, 30, 30]},
            {"label": "dog", "box": [40, 40, 90, 75]},
        ],
        "relations": [{"s": 0, "o": 1, "p": "Near"}],
    }
    mpath = tmp_path / "manifest.jsonl"
    mpath.write_text(json.dumps(rec) + "\n")
    graphs = load_manifest(mpath)
    assert len(graphs) == 1
    g = graphs[0]
    assert g.objects[0].label == "cat"
    assert g.objects[0].box.as_list() == [0, 0, 30, 30]  # clamped at ingestion
    assert g.objects[0].det_score == 1.0
    assert g.relations == ((0, 1, "near"),)
    assert g.image.path.endswith("img.png")

    mpath.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(ValueError):
        load_manifest(mpath)
