"""Open-world split taxonomy: classify ground-truth triplets by component
novelty relative to the declared training vocabulary.

Labels are mutually exclusive and jointly exhaustive. Triplets with exactly
one novel object fit none of the standard definitions (those require both
objects seen or both novel) and are filed as MIXED, reported separately.
"""

from __future__ import annotations

from enum import Enum

from .core import GroundTruthGraph, VocabularyProfile
from .errors import UnknownLabel


class SplitLabel(str, Enum):
    CS = "CS"
    ZS = "ZS"
    OVR = "OVR"
    OVD = "OVD"
    OW = "OW"
    MIXED = "MIXED"


def classify_triplet(triplet: tuple[str, str, str], vocab: VocabularyProfile) -> SplitLabel:
    """Classify one (subject label, object label, relation) triple."""
    o_i, o_j, r = triplet
    if o_i not in vocab.object_index or o_j not in vocab.object_index:
        raise UnknownLabel(f"object label outside vocabulary: {triplet}")
    if r not in vocab.relation_index:
        raise UnknownLabel(f"relation label outside vocabulary: {triplet}")
    i_seen = o_i in vocab.train_objects
    j_seen = o_j in vocab.train_objects
    r_seen = r in vocab.train_relations
    if i_seen and j_seen:
        if r_seen:
            return SplitLabel.CS if (o_i, o_j, r) in vocab.train_triplets else SplitLabel.ZS
        return SplitLabel.OVR
    if not i_seen and not j_seen:
        return SplitLabel.OVD if r_seen else SplitLabel.OW
    return SplitLabel.MIXED


def is_ovdr(label: SplitLabel) -> bool:
    """OVD+R is the union of novel-object and novel-relation settings; OW is
    its special case with both novel."""
    return label in (SplitLabel.OVD, SplitLabel.OVR, SplitLabel.OW)


def triplet_key(image_id: str, relation_index: int) -> str:
    return f"{image_id}#{relation_index}"


def partition(graphs: list[GroundTruthGraph], vocab: VocabularyProfile) -> dict[str, list[str]]:
    """Assign every GT triplet to exactly one split.

    Returns {split name: [triplet keys]}, where a key is "<image_id>#<index of
    the relation within its image>". Only non-empty splits are present.
    """
    splits: dict[str, list[str]] = {}
    for graph in graphs:
        for rel_idx, (s, o, p) in enumerate(graph.relations):
            label = classify_triplet((graph.objects[s].label, graph.objects[o].label, p), vocab)
            splits.setdefault(label.value, []).append(triplet_key(graph.image.id, rel_idx))
    return splits
