"""Relation generation: prompt selected pairs with boxes, parse the two directed
sentences per pair, extract predicate phrases, and map them into the relation
vocabulary to emit ranked triplets."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .backends import ChatRequest
from .config import PipelineConfig
from .core import BoundingBox, ImageRef, ObjectInstance, TripletPrediction, VocabularyProfile, normalize_label
from .entity_stage import score_candidates
from .errors import MissingPair, PairResponseError, UnsplittableLine
from .pair_refinement import CandidatePair

PREDICATE_TEMPLATE = "subject {} object"

_DETERMINERS = {"the", "a", "an"}
_AUXILIARIES = {"is", "are", "was", "were"}


# ---------------------------------------------------------------------------
# Prompt rendering


def _render_normalized(box: BoundingBox, image: ImageRef) -> str:
    vals = [box.x1 / image.width, box.y1 / image.height, box.x2 / image.width, box.y2 / image.height]
    return "[" + ", ".join(repr(round(v, 2)) for v in vals) + "]"


def _scale_coord(v: float, dim: float) -> int:
    scaled = math.floor(1000.0 * v / dim + 0.5)  # round half up
    return min(max(scaled, 1), 1000)


def _render_scaled(box: BoundingBox, image: ImageRef) -> str:
    vals = [
        _scale_coord(box.x1, image.width),
        _scale_coord(box.y1, image.height),
        _scale_coord(box.x2, image.width),
        _scale_coord(box.y2, image.height),
    ]
    return "[" + ", ".join(str(v) for v in vals) + "]"


_NORMALIZED_HEADER = (
    "You are a vision-language expert. Given an image with pairs of objects along with "
    "their bounding box coordinates. The bounding box coordinates are defined by "
    "(X_top_left, Y_top_left, X_bottom_right, Y_bottom_right) and are normalized between 0 and 1.\n"
    "\n"
    "### Object Pair List\n"
)

_NORMALIZED_FOOTER = (
    "\n"
    "### Output Format Instructions\n"
    "- Write two sentences describing their spatial relationship.\n"
    "- Sentence one describes how the first object is related to the second object.\n"
    "- Sentence two describes how the second object is related to the first object.\n"
    "- Use natural but concise relationships.\n"
    "- Do not describe properties of a single object.\n"
    "- Format your answer in the following manner:\n"
    "  Pair [idx]:\n"
    "  Sentence1:|Sentence2:\n"
    "\n"
    "### Begin:\n"
)

_SCALED_HEADER = (
    "You are a vision-language expert. Given an image with pairs of objects along with "
    "their bounding box coordinates. The bounding box coordinates are defined by "
    "(X_top_left, Y_top_left, X_bottom_right, Y_bottom_right) and are scaled between 1 and 1000.\n"
    "\n"
    "### Object Pair List\n"
)

_SCALED_FOOTER = (
    "\n"
    "### Output Instructions\n"
    "- For each pair, write two short sentences:\n"
    "- Sentence 1: how the first object relates to the second.\n"
    "- Sentence 2: how the second object relates to the first.\n"
    "- Focus on spatial or functional interactions.\n"
    "- Use this format:\n"
    "  Pair [index]:\n"
    "  Sentence1: | Sentence2:\n"
    "\n"
    "### Begin:\n"
)


def build_relation_prompt(
    pairs: list[CandidatePair],
    instances: tuple[ObjectInstance, ...],
    image: ImageRef,
    style: str,
) -> str:
    """Enumerated pair listing with per-instance labels and boxes rendered
    per coordinate style, plus the style's verbatim output instructions."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    lines = []
    if style == "normalized_0_1":
        for idx, pair in enumerate(pairs, start=1):
            a, b = instances[pair.i], instances[pair.j]
            lines.append(
                f"Pair {idx}: First object: '{a.label}' {_render_normalized(a.box, image)}, "
                f"Second object:'{b.label}' {_render_normalized(b.box, image)}"
            )
        return _NORMALIZED_HEADER + "\n".join(lines) + "\n" + _NORMALIZED_FOOTER
    if style == "scaled_1_1000":
        for idx, pair in enumerate(pairs, start=1):
            a, b = instances[pair.i], instances[pair.j]
            lines.append(
                f"Pair {idx}: First object: '{a.label}' {_render_scaled(a.box, image)}, "
                f"Second object: '{b.label}' {_render_scaled(b.box, image)}"
            )
        return _SCALED_HEADER + "\n".join(lines) + "\n" + _SCALED_FOOTER
    raise ValueError(f"unknown coordinate style {style!r}")


# ---------------------------------------------------------------------------
# Response parsing


@dataclass(frozen=True)
class DirectedSentencePair:
    pair_id: int
    s1: str  # first -> second
    s2: str  # second -> first


_PAIR_ANCHOR = re.compile(r"^\s*\**pair\s*(\d+)\s*\**\s*:", re.IGNORECASE | re.MULTILINE)
_SENT_PREFIX = re.compile(r"^\s*sentence\s*([12])\s*:\s*", re.IGNORECASE)


def _strip_prefix(text: str) -> str:
    return _SENT_PREFIX.sub("", text.strip(), count=1).strip()


def parse_relation_response(raw: str, expected: int) -> list[DirectedSentencePair]:
    """Split each pair's body on the '|' delimiter into two directed sentences.

    The "Sentence1:" / "Sentence2:" prefixes may be present or absent. Missing
    pair indices raise MissingPair; a body without a usable delimiter raises
    UnsplittableLine.
    """
    if expected < 1:
        raise ValueError("expected must be >= 1")
    anchors = [(m.start(), m.end(), int(m.group(1))) for m in _PAIR_ANCHOR.finditer(raw)]
    bodies: dict[int, str] = {}
    for pos, (start, end, idx) in enumerate(anchors):
        if not 1 <= idx <= expected or idx in bodies:
            continue
        stop = anchors[pos + 1][0] if pos + 1 < len(anchors) else len(raw)
        bodies[idx] = raw[end:stop]
    for idx in range(1, expected + 1):
        if idx not in bodies:
            raise MissingPair(idx)
    out = []
    for idx in range(1, expected + 1):
        body = bodies[idx].strip()
        if "|" not in body:
            raise UnsplittableLine(idx)
        left, right = body.split("|", 1)
        s1, s2 = _strip_prefix(left), _strip_prefix(right)
        if not s1 or not s2:
            raise UnsplittableLine(idx)
        out.append(DirectedSentencePair(pair_id=idx, s1=s1, s2=s2))
    return out


# ---------------------------------------------------------------------------
# Predicate extraction and mapping


def _tokens(text: str) -> list[str]:
    return re.findall(r"[\w']+", text.lower())


def _strip_possessive(tok: str) -> str:
    return tok[:-2] if tok.endswith("'s") else tok


def _match_at(tokens: list[str], pos: int, mention: list[str]) -> bool:
    if pos + len(mention) > len(tokens):
        return False
    return all(_strip_possessive(tokens[pos + i]) == mention[i] for i in range(len(mention)))


def _mention_candidates(label: str) -> list[list[str]]:
    toks = normalize_label(label).split()
    cands = [toks]
    if len(toks) > 1:
        # fall back to the longest single token of a multi-word label
        cands.extend([[t] for t in sorted(toks, key=len, reverse=True)])
    return cands


def extract_predicate(sentence: str, subj_label: str, obj_label: str) -> str:
    """Strip the leading subject mention and trailing object mention, collapse
    leading auxiliaries; if the subject mention is absent the whole sentence is
    returned as the phrase."""
    toks = _tokens(sentence)
    if not toks:
        return sentence.strip()
    start = 0
    if toks[start] in _DETERMINERS and len(toks) > 1:
        start = 1
    matched = None
    for cand in _mention_candidates(subj_label):
        if cand and _match_at(toks, start, cand):
            matched = len(cand)
            break
    if matched is None:
        return " ".join(toks)
    start += matched

    end = len(toks)
    for cand in _mention_candidates(obj_label):
        if cand and len(cand) <= end - start and _match_at(toks, end - len(cand), cand):
            end -= len(cand)
            if end - 1 >= start and toks[end - 1] in _DETERMINERS:
                end -= 1
            break
    middle = toks[start:end]
    trimmed = list(middle)
    while trimmed and trimmed[0] in _AUXILIARIES:
        trimmed.pop(0)
    if trimmed:
        return " ".join(trimmed)
    if middle:
        return " ".join(middle)
    return " ".join(toks)


@dataclass(frozen=True)
class PredicateCandidate:
    phrase: str
    mapped: str
    map_score: float


def map_predicate(
    phrase: str,
    vocab: VocabularyProfile,
    embedder,
    *,
    tau: float = 0.2,
    delta: float = 0.05,
) -> PredicateCandidate:
    """Exact normalized match wins at 1.0; otherwise embedding match with the
    entity-mapping machinery truncated to the single top relation."""
    if not vocab.relations:
        raise ValueError("vocabulary has no relations")
    norm = normalize_label(phrase)
    if norm in vocab.relation_index:
        return PredicateCandidate(phrase=phrase, mapped=norm, map_score=1.0)
    texts = [PREDICATE_TEMPLATE.format(norm or phrase)] + [
        PREDICATE_TEMPLATE.format(r) for r in vocab.relations
    ]
    vectors = embedder.embed(texts)
    cosines = vectors[1:] @ vectors[0]
    sims = list(zip(vocab.relations, cosines.tolist()))
    top = score_candidates(sims, tau=tau, delta=delta, k=1)[0]
    return PredicateCandidate(phrase=phrase, mapped=top[0], map_score=top[1])


# ---------------------------------------------------------------------------
# Triplet assembly


_DIRECTION_RANK = {"forward": 0, "reverse": 1}


def assemble_triplets(
    instances: tuple[ObjectInstance, ...],
    entries: list[tuple[int, CandidatePair, str, PredicateCandidate, str]],
) -> list[TripletPrediction]:
    """Build directed triplets and rank them.

    entries: (pair_id, pair, direction, predicate, raw_sentence). Confidence
    composes the fused pair score with the predicate map score and both
    detection scores; ties order by (pair_id, direction).
    """
    triplets = []
    for pair_id, pair, direction, pred, sentence in entries:
        if direction == "forward":
            subj, obj = instances[pair.i], instances[pair.j]
        else:
            subj, obj = instances[pair.j], instances[pair.i]
        score = math.exp(pair.fused_score) * pred.map_score * subj.det_score * obj.det_score
        triplets.append(
            TripletPrediction(
                subject=subj,
                object=obj,
                predicate=pred.mapped,
                score=score,
                pair_id=pair_id,
                direction=direction,
                raw_sentence=sentence,
            )
        )
    triplets.sort(key=lambda t: (-t.score, t.pair_id, _DIRECTION_RANK[t.direction]))
    return triplets


def relate_image(
    instances: tuple[ObjectInstance, ...],
    selected: list[CandidatePair],
    image: ImageRef,
    hub,
    vocab: VocabularyProfile,
    config: PipelineConfig,
) -> list[TripletPrediction]:
    """Full stage-5 pass for one image.

    Pairs are prompted in chunks with chunk-local indices; a malformed chunk is
    retried once and pairs still unparseable after the retry are dropped.
    """
    entries: list[tuple[int, CandidatePair, str, PredicateCandidate, str]] = []
    chunk_size = config.pair_chunk_size
    for start in range(0, len(selected), chunk_size):
        chunk = selected[start : start + chunk_size]
        prompt = build_relation_prompt(chunk, instances, image, config.coordinate_style)
        raw = hub.chat(ChatRequest(prompt=prompt, image=image, sampling=config.sampling))
        try:
            parsed = parse_relation_response(raw, expected=len(chunk))
        except PairResponseError:
            raw = hub.chat(ChatRequest(prompt=prompt, image=image, sampling=config.sampling, attempt=1))
            try:
                parsed = parse_relation_response(raw, expected=len(chunk))
            except PairResponseError:
                parsed = _parse_leniently(raw, expected=len(chunk))
        for sp in parsed:
            pair_id = start + sp.pair_id  # global, 1-based
            pair = chunk[sp.pair_id - 1]
            subj, obj = instances[pair.i], instances[pair.j]
            for direction, sentence, s_label, o_label in (
                ("forward", sp.s1, subj.label, obj.label),
                ("reverse", sp.s2, obj.label, subj.label),
            ):
                phrase = extract_predicate(sentence, s_label, o_label)
                pred = map_predicate(
                    phrase, vocab, hub, tau=config.mapping.tau_softmax, delta=config.mapping.delta
                )
                entries.append((pair_id, pair, direction, pred, sentence))
    return assemble_triplets(instances, entries)


def _parse_leniently(raw: str, expected: int) -> list[DirectedSentencePair]:
    """Salvage whatever pairs parse after a failed retry; the rest are dropped."""
    anchors = [(m.start(), m.end(), int(m.group(1))) for m in _PAIR_ANCHOR.finditer(raw)]
    out: dict[int, DirectedSentencePair] = {}
    for pos, (start, end, idx) in enumerate(anchors):
        if not 1 <= idx <= expected or idx in out:
            continue
        stop = anchors[pos + 1][0] if pos + 1 < len(anchors) else len(raw)
        body = raw[end:stop].strip()
        if "|" not in body:
            continue
        left, right = body.split("|", 1)
        s1, s2 = _strip_prefix(left), _strip_prefix(right)
        if s1 and s2:
            out[idx] = DirectedSentencePair(pair_id=idx, s1=s1, s2=s2)
    return [out[idx] for idx in sorted(out)]
