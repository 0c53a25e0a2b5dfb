"""Entity localization: one detector call per mapped category, absence filtering,
and deterministic assembly of the per-image instance list."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backends import DetectionRequest
from .config import PipelineConfig
from .core import BoundingBox, GroundTruthGraph, ImageRef, ObjectInstance, clamp_box
from .errors import AllEntitiesAbsent, DegenerateBox


@dataclass(frozen=True)
class DetectionSet:
    image: ImageRef
    instances: tuple[ObjectInstance, ...]


def _ordered(image: ImageRef, drafts: list[tuple[int, str, BoundingBox, float, int | None]]) -> DetectionSet:
    # Total order: category vocabulary index, descending score, reading order
    # of box centers, then raw corners. Stable sort keeps exact duplicates in
    # input order.
    def sort_key(d):
        vocab_idx, _label, box, score, _src = d
        cx, cy = box.center
        return (vocab_idx, -score, cy, cx, box.y1, box.x1, box.y2, box.x2)

    drafts = sorted(drafts, key=sort_key)
    instances = tuple(
        ObjectInstance(index=i, label=label, box=box, det_score=score, source_index=src)
        for i, (_v, label, box, score, src) in enumerate(drafts)
    )
    return DetectionSet(image=image, instances=instances)


def detect_all(
    categories: list[str],
    image: ImageRef,
    hub,
    config: PipelineConfig,
    vocab_index: dict[str, int],
    max_workers: int | None = None,
) -> DetectionSet:
    """Detect every mapped category; silently drop categories with no boxes.

    Categories are deduplicated upstream, so each triggers exactly one
    detector call. Boxes are clamped to the image; degenerate boxes are
    discarded. Per-category instances are capped to keep the pair matrix
    tractable.
    """
    if not categories:
        raise ValueError("categories must be non-empty")
    workers = max_workers or config.concurrency.max_in_flight

    def run_one(label: str):
        req = DetectionRequest(
            image=image,
            label=label,
            box_threshold=config.detector.box_threshold,
            text_threshold=config.detector.text_threshold,
        )
        return label, hub.detect(req)

    if len(categories) == 1 or workers == 1:
        results = [run_one(c) for c in categories]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(categories))) as pool:
            results = list(pool.map(run_one, categories))

    drafts = []
    cap = config.detector.max_instances_per_category
    for label, detections in results:
        detections = sorted(detections, key=lambda d: -d[1])[:cap]
        for raw_box, score in detections:
            try:
                box = clamp_box(raw_box, image)
            except DegenerateBox:
                continue
            drafts.append((vocab_index[label], label, box, score, None))
    if not drafts:
        raise AllEntitiesAbsent(f"no mapped category detected on image {image.id!r}")
    return _ordered(image, drafts)


def ground_truth_set(gt: GroundTruthGraph, vocab_index: dict[str, int]) -> DetectionSet:
    """PredCls passthrough: ground-truth objects with det_score 1.0.

    The same ordering rule applies, so instance indices are re-assigned;
    source_index preserves the manifest object index.
    """
    if not gt.objects:
        raise AllEntitiesAbsent(f"image {gt.image.id!r} has no ground-truth objects")
    drafts = [
        (vocab_index[obj.label], obj.label, obj.box, 1.0, obj.index)
        for obj in gt.objects
    ]
    return _ordered(gt.image, drafts)
