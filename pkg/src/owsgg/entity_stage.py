"""Entity generation and vocabulary mapping.

Free-form VLM entity lists are parsed, normalized, and aligned onto the
dataset object vocabulary: exact normalized matches short-circuit at score
1.0, everything else goes through sentence-template embedding plus a
temperature-softmax near-maximum selection.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .core import VocabularyProfile, normalize_label
from .errors import EmptyEntityList, MappingEmpty, UnknownDataset

SENTENCE_TEMPLATE = "There is a {} in the image."

_OUTPUT_RULES = (
    "### Output Format Instructions\n"
    "\n"
    "- Do not repeat object names.\n"
    "- Do not describe attributes, adjectives, or relationships.\n"
    "- Return the result as a comma-separated list.\n"
    "- If unsure, include it.\n"
    "\n"
    "### Prompt\n"
    "\n"
    "List all the objects visible in the image, including foreground and background. "
    "Return the objects as a comma-separated list.\n"
)

_TASK_PARAGRAPHS = {
    "psg": (
        "You are an expert at detecting objects in images. You are given an image. "
        "Your task is to list all objects visible in the image, including both foreground "
        "and background. The objects may include natural elements, human-made structures, "
        "or any other discernible entities."
    ),
    "oiv6": (
        "You are an expert at detecting objects in images. You are given an image. "
        "Your task is to identify and list all visible objects in the image, including both "
        "foreground and background. Include a wide range of recognizable categories, whether "
        "specific or general, as long as they are visibly present in the scene."
    ),
    "vg150": (
        "You are an expert at detecting objects in images. You are given an image. "
        "Your task is to list all identifiable objects visible in the image, including those "
        "in the foreground and background. Include both whole objects and meaningful parts "
        "or components that are visually discernible."
    ),
}


def build_entity_prompt(dataset: str, template: str | None = None) -> str:
    """Dataset-specific entity enumeration prompt.

    The PSG/OI/VG variants differ only in the task paragraph; the output-format
    instructions are identical. A custom dataset must supply its own template.
    """
    if dataset == "custom":
        if not template:
            raise UnknownDataset("custom dataset requires an entity prompt template")
        return template
    if dataset not in _TASK_PARAGRAPHS:
        raise UnknownDataset(f"no entity prompt for dataset {dataset!r}")
    return f"### Task Start\n\n{_TASK_PARAGRAPHS[dataset]}\n\n{_OUTPUT_RULES}"


@dataclass(frozen=True)
class PredictedEntity:
    raw: str
    normalized: str


def parse_entity_list(raw: str) -> list[PredictedEntity]:
    """Split a comma-separated (or newline-separated) entity response.

    Items are normalized and deduplicated by normalized form, preserving first
    occurrence; empty items are dropped.
    """
    seen = set()
    entities = []
    for item in re.split(r"[,\n]", raw):
        item = item.strip()
        norm = normalize_label(item)
        if not norm or norm in seen:
            continue
        seen.add(norm)
        entities.append(PredictedEntity(raw=item, normalized=norm))
    if not entities:
        raise EmptyEntityList(f"nothing parsed from {raw!r}")
    return entities


@dataclass(frozen=True)
class MappingResult:
    entity: PredictedEntity
    matches: tuple[tuple[str, float], ...]  # (category, softmax score), descending
    method: str  # "exact" | "semantic"


def score_candidates(
    sims: list[tuple[str, float]], tau: float, delta: float, k: int
) -> list[tuple[str, float]]:
    """Temperature softmax over cosine scores, near-maximum filter, top-k.

    s_hat_i = exp(s_i/tau) / sum_j exp(s_j/tau); keep i with
    max(s_hat) - s_hat_i < delta; return the top-k of those by s_hat. Ties
    break by input position, which callers supply in vocabulary order.
    """
    if not sims:
        raise ValueError("sims must be non-empty")
    if tau <= 0 or delta < 0 or k < 1:
        raise ValueError("bad parameters: need tau > 0, delta >= 0, k >= 1")
    scores = np.array([s for (_c, s) in sims], dtype=np.float64)
    scaled = scores / tau
    scaled -= scaled.max()  # stabilized; softmax is shift-invariant
    exp = np.exp(scaled)
    soft = exp / exp.sum()
    s_max = soft.max()
    kept = [i for i in range(len(sims)) if s_max - soft[i] < delta]
    kept.sort(key=lambda i: (-soft[i], i))
    return [(sims[i][0], float(soft[i])) for i in kept[:k]]


def map_entity(entity: PredictedEntity, vocab: VocabularyProfile, embedder, *, tau: float = 0.2, delta: float = 0.05, k: int = 2) -> MappingResult:
    """Align one predicted entity onto the object vocabulary.

    Exact normalized matches never touch the embedder. Semantic matches embed
    the "There is a X in the image." sentence for the entity and every
    category, then run score_candidates over the cosines.
    """
    if not vocab.objects:
        raise ValueError("vocabulary has no objects")
    if entity.normalized in vocab.object_index:
        return MappingResult(entity=entity, matches=((entity.normalized, 1.0),), method="exact")
    texts = [SENTENCE_TEMPLATE.format(entity.normalized)] + [
        SENTENCE_TEMPLATE.format(cat) for cat in vocab.objects
    ]
    vectors = embedder.embed(texts)
    query, candidates = vectors[0], vectors[1:]
    cosines = candidates @ query  # unit-norm vectors: cosine == dot
    sims = list(zip(vocab.objects, cosines.tolist()))
    matches = score_candidates(sims, tau=tau, delta=delta, k=k)
    return MappingResult(entity=entity, matches=tuple(matches), method="semantic")


def map_all(
    entities: list[PredictedEntity], vocab: VocabularyProfile, embedder, *, tau: float = 0.2, delta: float = 0.05, k: int = 2
) -> list[str]:
    """Union of per-entity mappings, ordered by vocabulary index."""
    if not entities:
        raise ValueError("entities must be non-empty")
    mapped: set[str] = set()
    for entity in entities:
        result = map_entity(entity, vocab, embedder, tau=tau, delta=delta, k=k)
        mapped.update(cat for (cat, _s) in result.matches)
    if not mapped:
        raise MappingEmpty("no entity mapped onto the vocabulary")
    return sorted(mapped, key=lambda c: vocab.object_index[c])
