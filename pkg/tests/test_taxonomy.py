import numpy as np
import pytest

from owsgg.core import BoundingBox, GroundTruthGraph, ImageRef, ObjectInstance, VocabularyProfile
from owsgg.errors import UnknownLabel
from owsgg.taxonomy import SplitLabel, classify_triplet, is_ovdr, partition

VOCAB = VocabularyProfile(
    objects=("person", "chair", "dog", "cat"),
    relations=("on", "near"),
    train_objects=frozenset({"person", "chair"}),
    train_relations=frozenset({"on"}),
    train_triplets=frozenset({("person", "chair", "on")}),
)


class TestClassifyTriplet:
    def test_worked_examples(self):
        assert classify_triplet(("person", "chair", "on"), VOCAB) == SplitLabel.CS
        assert classify_triplet(("person", "person", "on"), VOCAB) == SplitLabel.ZS
        assert classify_triplet(("person", "chair", "near"), VOCAB) == SplitLabel.OVR
        assert classify_triplet(("dog", "cat", "on"), VOCAB) == SplitLabel.OVD
        assert classify_triplet(("dog", "cat", "near"), VOCAB) == SplitLabel.OW

    def test_single_novel_object_is_mixed(self):
        assert classify_triplet(("person", "dog", "on"), VOCAB) == SplitLabel.MIXED
        assert classify_triplet(("person", "dog", "near"), VOCAB) == SplitLabel.MIXED

    def test_unknown_label(self):
        with pytest.raises(UnknownLabel):
            classify_triplet(("horse", "chair", "on"), VOCAB)
        with pytest.raises(UnknownLabel):
            classify_triplet(("person", "chair", "flying over"), VOCAB)

    def test_object_swap_never_changes_novelty_group(self):
        # Novelty classification is symmetric in the two objects. CS vs ZS is
        # the one direction-sensitive distinction: training triplets are
        # ordered (subject, object, predicate).
        groups = {
            SplitLabel.CS: "seen",
            SplitLabel.ZS: "seen",
            SplitLabel.OVR: "ovr",
            SplitLabel.OVD: "ovd",
            SplitLabel.OW: "ow",
            SplitLabel.MIXED: "mixed",
        }
        rng = np.random.RandomState(17)
        objects = list(VOCAB.objects)
        relations = list(VOCAB.relations)
        for _ in range(500):
            a, b = rng.choice(objects, 2)
            r = rng.choice(relations)
            fwd = classify_triplet((a, b, r), VOCAB)
            rev = classify_triplet((b, a, r), VOCAB)
            assert groups[fwd] == groups[rev]


class TestIsOvdr:
    def test_membership_table(self):
        assert is_ovdr(SplitLabel.OW) is True
        assert is_ovdr(SplitLabel.OVR) is True
        assert is_ovdr(SplitLabel.OVD) is True
        assert is_ovdr(SplitLabel.CS) is False
        assert is_ovdr(SplitLabel.ZS) is False
        assert is_ovdr(SplitLabel.MIXED) is False


def make_graph(image_id, labels, relations):
    img = ImageRef(id=image_id, path="/dev/null", width=10, height=10)
    objects = tuple(
        ObjectInstance(index=i, label=l, box=BoundingBox(0, 0, 1 + i, 1 + i))
        for i, l in enumerate(labels)
    )
    return GroundTruthGraph(image=img, objects=objects, relations=tuple(relations))


class TestPartition:
    def test_closed_world_is_all_cs(self):
        graphs = [make_graph("a", ["person", "chair"], [(0, 1, "on")])]
        vocab = VocabularyProfile(
            objects=("person", "chair"),
            relations=("on",),
            train_objects=frozenset({"person", "chair"}),
            train_relations=frozenset({"on"}),
            train_triplets=frozenset({("person", "chair", "on")}),
        )
        assert partition(graphs, vocab) == {"CS": ["a#0"]}

    def test_empty_train_relations_blocks_cs_zs_ovd(self):
        graphs = [
            make_graph("a", ["person", "chair", "dog"], [(0, 1, "on"), (2, 0, "on"), (0, 2, "near")])
        ]
        vocab = VocabularyProfile(
            objects=("person", "chair", "dog"),
            relations=("on", "near"),
            train_objects=frozenset({"person", "chair"}),
            train_relations=frozenset(),
        )
        splits = partition(graphs, vocab)
        assert set(splits) <= {"OVR", "OW", "MIXED"}
        assert sum(len(v) for v in splits.values()) == 3

    def test_sizes_sum_to_total(self):
        rng = np.random.RandomState(23)
        objects = tuple(f"o{i}" for i in range(12))
        relations = tuple(f"r{i}" for i in range(6))
        vocab = VocabularyProfile(
            objects=objects,
            relations=relations,
            train_objects=frozenset(rng.choice(objects, 6, replace=False)),
            train_relations=frozenset(rng.choice(relations, 3, replace=False)),
        )
        graphs = []
        total = 0
        for g in range(20):
            labels = [str(l) for l in rng.choice(objects, 5, replace=True)]
            rels = []
            for _ in range(5):
                s, o = rng.choice(5, 2, replace=False)
                rels.append((int(s), int(o), str(rng.choice(relations))))
            total += len(rels)
            graphs.append(make_graph(f"g{g}", labels, rels))
        splits = partition(graphs, vocab)
        assert sum(len(v) for v in splits.values()) == total
        all_keys = [k for v in splits.values() for k in v]
        assert len(all_keys) == len(set(all_keys))  # mutually exclusive
