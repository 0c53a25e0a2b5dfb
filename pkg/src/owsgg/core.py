"""Core domain types: images, boxes, objects, triplets, vocabularies, scene graphs.

All types here are immutable after construction and safe to share between
concurrent workers. Boxes are stored corner-form (x1, y1, x2, y2) in absolute
pixels; prompt-format scaling happens only at prompt-render time.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DegenerateBox, UnknownLabel

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_label(raw: str) -> str:
    """Lowercase, trim, strip punctuation, collapse internal whitespace."""
    return " ".join(raw.lower().translate(_PUNCT_TABLE).split())


@dataclass(frozen=True)
class ImageRef:
    id: str
    path: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.id!r}: non-positive dimensions")


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DegenerateBox(f"degenerate box {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class ObjectInstance:
    index: int
    label: str
    box: BoundingBox
    det_score: float = 1.0
    # Manifest object index for instances copied from ground truth; None for
    # detector output. Not serialized in prediction records.
    source_index: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.det_score <= 1.0:
            raise ValueError(f"det_score {self.det_score} outside [0,1]")


@dataclass(frozen=True)
class TripletPrediction:
    subject: ObjectInstance
    object: ObjectInstance
    predicate: str
    score: float
    pair_id: int
    direction: str  # "forward" | "reverse"
    raw_sentence: str = ""

    def __post_init__(self):
        if self.subject.index == self.object.index:
            raise ValueError("self-relation triplet")
        if self.direction not in ("forward", "reverse"):
            raise ValueError(f"bad direction {self.direction!r}")


@dataclass(frozen=True)
class VocabularyProfile:
    """Dataset object/relation sets plus the declared train-time subsets."""

    objects: tuple[str, ...]
    relations: tuple[str, ...]
    train_objects: frozenset[str] = frozenset()
    train_relations: frozenset[str] = frozenset()
    train_triplets: frozenset[tuple[str, str, str]] = frozenset()
    object_index: dict[str, int] = field(default_factory=dict, compare=False)
    relation_index: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "object_index", {o: i for i, o in enumerate(self.objects)})
        object.__setattr__(self, "relation_index", {r: i for i, r in enumerate(self.relations)})
        if not self.train_objects <= set(self.objects):
            raise UnknownLabel("train_objects not a subset of objects")
        if not self.train_relations <= set(self.relations):
            raise UnknownLabel("train_relations not a subset of relations")
        for (a, b, r) in self.train_triplets:
            if a not in self.object_index or b not in self.object_index:
                raise UnknownLabel(f"train triplet object {a!r}/{b!r} outside vocabulary")
            if r not in self.relation_index:
                raise UnknownLabel(f"train triplet relation {r!r} outside vocabulary")


@dataclass(frozen=True)
class GroundTruthGraph:
    image: ImageRef
    objects: tuple[ObjectInstance, ...]
    relations: tuple[tuple[int, int, str], ...]  # (subj_index, obj_index, predicate)

    def __post_init__(self):
        n = len(self.objects)
        for (s, o, _p) in self.relations:
            if not (0 <= s < n and 0 <= o < n):
                raise ValueError(f"relation index out of range on image {self.image.id!r}")
            if s == o:
                raise ValueError(f"self-relation on image {self.image.id!r}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two valid boxes. Symmetric, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def clamp_box(raw: tuple[float, float, float, float] | list[float], image: ImageRef) -> BoundingBox:
    """Clip raw corner coordinates to the image; raise DegenerateBox on zero area."""
    x1, y1, x2, y2 = raw
    x1 = min(max(float(x1), 0.0), float(image.width))
    x2 = min(max(float(x2), 0.0), float(image.width))
    y1 = min(max(float(y1), 0.0), float(image.height))
    y2 = min(max(float(y2), 0.0), float(image.height))
    if x1 >= x2 or y1 >= y2:
        raise DegenerateBox(f"box {list(raw)} degenerate after clamping to {image.width}x{image.height}")
    return BoundingBox(x1, y1, x2, y2)


# ---------------------------------------------------------------------------
# External file formats


def load_vocabulary(path: str | Path) -> VocabularyProfile:
    """Read a vocabulary profile JSON document.

    Expected keys: "objects", "relations", and optionally "train_objects",
    "train_relations", "train_triplets" (array of [subj, obj, rel] triples).
    All labels are normalized at ingestion.
    """
    doc = json.loads(Path(path).read_text())
    objects = tuple(normalize_label(o) for o in doc["objects"])
    relations = tuple(normalize_label(r) for r in doc["relations"])
    return VocabularyProfile(
        objects=objects,
        relations=relations,
        train_objects=frozenset(normalize_label(o) for o in doc.get("train_objects", [])),
        train_relations=frozenset(normalize_label(r) for r in doc.get("train_relations", [])),
        train_triplets=frozenset(
            (normalize_label(t[0]), normalize_label(t[1]), normalize_label(t[2]))
            for t in doc.get("train_triplets", [])
        ),
    )


def load_novelty_list(path: str | Path) -> frozenset[str]:
    """Read a plain-text one-label-per-line novelty list."""
    labels = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            labels.append(normalize_label(line))
    return frozenset(labels)


def apply_novelty_lists(
    vocab: VocabularyProfile,
    novel_objects: frozenset[str] = frozenset(),
    novel_relations: frozenset[str] = frozenset(),
) -> VocabularyProfile:
    """Derive train subsets as the complement of externally supplied novelty lists."""
    unknown = (novel_objects - set(vocab.objects)) | (novel_relations - set(vocab.relations))
    if unknown:
        raise UnknownLabel(f"novelty labels outside vocabulary: {sorted(unknown)}")
    return VocabularyProfile(
        objects=vocab.objects,
        relations=vocab.relations,
        train_objects=frozenset(vocab.objects) - novel_objects,
        train_relations=frozenset(vocab.relations) - novel_relations,
        train_triplets=vocab.train_triplets,
    )


def load_manifest(path: str | Path) -> list[GroundTruthGraph]:
    """Read a JSON-Lines dataset manifest.

    One record per image: {"id", "path", "width", "height",
    "objects": [{"label", "box": [x1,y1,x2,y2]}], "relations": [{"s","o","p"}]}.
    Image paths are resolved relative to the manifest file. Labels are
    normalized and ground-truth boxes clamped at ingestion; det_score is 1.0.
    """
    base = Path(path).parent
    graphs = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        img_path = Path(rec["path"])
        if not img_path.is_absolute():
            img_path = base / img_path
        image = ImageRef(id=str(rec["id"]), path=str(img_path), width=int(rec["width"]), height=int(rec["height"]))
        objects = tuple(
            ObjectInstance(
                index=i,
                label=normalize_label(obj["label"]),
                box=clamp_box(obj["box"], image),
                det_score=1.0,
                source_index=i,
            )
            for i, obj in enumerate(rec.get("objects", []))
        )
        relations = tuple(
            (int(rel["s"]), int(rel["o"]), normalize_label(rel["p"]))
            for rel in rec.get("relations", [])
        )
        graphs.append(GroundTruthGraph(image=image, objects=objects, relations=relations))
    ids = [g.image.id for g in graphs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids in manifest")
    return graphs
