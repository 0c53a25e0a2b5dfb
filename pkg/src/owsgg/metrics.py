"""Recall@K / mean-Recall@K scoring, rank-greedy triplet matching, and the
pair-refinement precision/recall/F1 diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GroundTruthGraph, TripletPrediction
from .errors import NoGroundTruth
from .kernels import iou_matrix
from .taxonomy import triplet_key


@dataclass(frozen=True)
class MatchConfig:
    task: str = "predcls"
    iou_threshold: float = 0.5  # sgdet only; field-standard default
    ks: tuple[int, ...] = (20, 50, 100)

    def __post_init__(self):
        if list(self.ks) != sorted(set(self.ks)) or not self.ks:
            raise ValueError("ks must be strictly increasing and non-empty")
        if self.task not in ("predcls", "sgdet"):
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class ImageMatches:
    """Per-image match outcome: the rank at which each GT triplet was retrieved."""

    image_id: str
    gt_predicates: list[str]
    gt_keys: list[str]
    match_ranks: list[int | None] = field(default_factory=list)

    def matched_at(self, k: int) -> set[int]:
        return {t for t, r in enumerate(self.match_ranks) if r is not None and r <= k}

    @property
    def gt_count(self) -> int:
        return len(self.gt_predicates)


def match_triplets(
    preds: list[TripletPrediction], gt: GroundTruthGraph, cfg: MatchConfig
) -> ImageMatches:
    """Greedy rank-order matching of predictions onto ground-truth triplets.

    A prediction matches an unmatched GT triplet when predicates and endpoint
    labels agree and the boxes match per task: PredCls demands exact instance
    identity (label and box equality with the GT object), SGDet demands
    IoU >= threshold on both endpoints. Each GT is matched at most once and
    each prediction consumes at most one GT (the first unmatched, in GT order).
    """
    result = ImageMatches(
        image_id=gt.image.id,
        gt_predicates=[p for (_s, _o, p) in gt.relations],
        gt_keys=[triplet_key(gt.image.id, idx) for idx in range(len(gt.relations))],
        match_ranks=[None] * len(gt.relations),
    )
    if not gt.relations or not preds:
        return result

    gt_boxes = np.array([obj.box.as_list() for obj in gt.objects], dtype=np.float64)
    if cfg.task == "sgdet":
        subj_boxes = np.array([p.subject.box.as_list() for p in preds], dtype=np.float64)
        obj_boxes = np.array([p.object.box.as_list() for p in preds], dtype=np.float64)
        subj_iou = iou_matrix(subj_boxes, gt_boxes)
        obj_iou = iou_matrix(obj_boxes, gt_boxes)

    def endpoint_ok(rank0: int, pred: TripletPrediction, gt_obj_idx: int, end: str) -> bool:
        gt_obj = gt.objects[gt_obj_idx]
        inst = pred.subject if end == "s" else pred.object
        if inst.label != gt_obj.label:
            return False
        if cfg.task == "predcls":
            return inst.box == gt_obj.box
        m = subj_iou if end == "s" else obj_iou
        return m[rank0, gt_obj_idx] >= cfg.iou_threshold

    for rank0, pred in enumerate(preds):
        for t, (s, o, p) in enumerate(gt.relations):
            if result.match_ranks[t] is not None or pred.predicate != p:
                continue
            if endpoint_ok(rank0, pred, s, "s") and endpoint_ok(rank0, pred, o, "o"):
                result.match_ranks[t] = rank0 + 1
                break
    return result


def recall_at_k(
    matches: list[ImageMatches], ks: tuple[int, ...], keys: set[str] | None = None
) -> dict[int, float]:
    """Macro-over-images recall: per image, matched@K / |GT|, averaged across
    images with at least one GT triplet. `keys` optionally restricts counting
    to a split's triplet keys (predictions were matched against all GT)."""
    per_k = {k: [] for k in ks}
    any_gt = False
    for im in matches:
        considered = [
            t for t in range(im.gt_count) if keys is None or im.gt_keys[t] in keys
        ]
        if not considered:
            continue
        any_gt = True
        for k in ks:
            hit = sum(1 for t in considered if im.match_ranks[t] is not None and im.match_ranks[t] <= k)
            per_k[k].append(hit / len(considered))
    if not any_gt:
        raise NoGroundTruth("no ground-truth triplets to score")
    return {k: float(np.mean(vals)) for k, vals in per_k.items()}


def mean_recall_at_k(
    matches: list[ImageMatches], ks: tuple[int, ...], keys: set[str] | None = None
) -> dict[int, float]:
    """Per-predicate recall pooled dataset-wide, then unweighted mean over
    predicates with at least one GT instance."""
    totals: dict[str, int] = {}
    hits: dict[str, dict[int, int]] = {}
    for im in matches:
        for t in range(im.gt_count):
            if keys is not None and im.gt_keys[t] not in keys:
                continue
            p = im.gt_predicates[t]
            totals[p] = totals.get(p, 0) + 1
            bucket = hits.setdefault(p, {k: 0 for k in ks})
            rank = im.match_ranks[t]
            if rank is not None:
                for k in ks:
                    if rank <= k:
                        bucket[k] += 1
    if not totals:
        raise NoGroundTruth("no ground-truth triplets to score")
    out = {}
    for k in ks:
        out[k] = float(np.mean([hits[p][k] / totals[p] for p in totals]))
    return out


# ---------------------------------------------------------------------------
# Pair-refinement quality


def pair_refinement_prf(
    selected: list[tuple[int, int]], gt_pairs: list[tuple[int, int]]
) -> tuple[float, float, float]:
    """Precision/recall/F1 over unordered pair sets; F1 is 0 when P + R is 0."""
    sel = {tuple(sorted(p)) for p in selected}
    gts = {tuple(sorted(p)) for p in gt_pairs}
    hit = len(sel & gts)
    precision = hit / len(sel) if sel else 0.0
    recall = hit / len(gts) if gts else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def gt_pairs_predcls(gt: GroundTruthGraph, source_to_instance: dict[int, int]) -> list[tuple[int, int]]:
    """GT relation endpoints as unordered instance-index pairs (deduplicated)."""
    pairs = set()
    for (s, o, _p) in gt.relations:
        pairs.add(tuple(sorted((source_to_instance[s], source_to_instance[o]))))
    return sorted(pairs)


def pair_prf_counts_sgdet(
    selected: list[tuple[int, int]],
    boxes: np.ndarray,
    labels: list[str],
    gt: GroundTruthGraph,
    iou_threshold: float,
) -> tuple[int, int, int]:
    """(hits, |selected|, |gt pairs|) with greedy label+IoU pair matching.

    A selected detection pair matches an unmatched GT relation pair when the
    endpoints can be aligned (either orientation) with equal labels and
    IoU >= threshold.
    """
    gt_pairs = sorted({tuple(sorted((s, o))) for (s, o, _p) in gt.relations})
    if not gt_pairs or not selected:
        return 0, len(selected), len(gt_pairs)
    gt_boxes = np.array([obj.box.as_list() for obj in gt.objects], dtype=np.float64)
    ious = iou_matrix(boxes, gt_boxes)

    def ep_ok(inst: int, gt_idx: int) -> bool:
        return labels[inst] == gt.objects[gt_idx].label and ious[inst, gt_idx] >= iou_threshold

    taken = [False] * len(gt_pairs)
    hits = 0
    for (i, j) in selected:
        for g, (a, b) in enumerate(gt_pairs):
            if taken[g]:
                continue
            if (ep_ok(i, a) and ep_ok(j, b)) or (ep_ok(i, b) and ep_ok(j, a)):
                taken[g] = True
                hits += 1
                break
    return hits, len(selected), len(gt_pairs)


def prf_from_counts(hits: int, n_selected: int, n_gt: int) -> tuple[float, float, float]:
    precision = hits / n_selected if n_selected else 0.0
    recall = hits / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def split_filtered_report(
    matches: list[ImageMatches],
    split_index: dict[str, list[str]],
    ks: tuple[int, ...],
) -> dict[str, dict[str, dict[int, float]]]:
    """Per-split R@K and mR@K counting only the split's GT triplets.

    Predictions were already matched against the full GT, so a prediction
    consumed by another split's triplet stays consumed. Splits with zero GT
    are absent from the result rather than reported as zero.
    """
    report = {}
    for name, key_list in split_index.items():
        keys = set(key_list)
        try:
            r = recall_at_k(matches, ks, keys=keys)
            mr = mean_recall_at_k(matches, ks, keys=keys)
        except NoGroundTruth:
            continue
        report[name] = {"R": r, "mR": mr}
    return report
