"""Pair refinement: semantic VLM scoring, geometric (2D + depth) gating,
log-linear fusion, and top-k candidate pair selection."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass

import numpy as np

from .backends import ChatRequest, DepthMap
from .config import PipelineConfig
from .core import BoundingBox, ImageRef, ObjectInstance
from .errors import (
    DuplicatePair,
    MissingPair,
    NonPositiveScore,
    PairResponseError,
    ScoreOutOfRange,
)
from .kernels import box_median_depth, pair_distance_matrix, sigmoid_gate_matrix

SCORE_SCALE = 5  # VLM confidence scale; P^S = score / 5 keeps ln finite

_PROMPT_HEADER = (
    "You are a world-class vision-language analyst, highly specialized in understanding "
    "spatial and functional relationships between objects in visual scenes. Your role is "
    "to evaluate how likely it is that specific object pairs are engaged in meaningful "
    "physical interactions in the given image.\n"
    "\n"
    "### Object Pair List:\n"
    "\n"
)

_PROMPT_FOOTER = (
    "\n"
    "### Task:\n"
    "\n"
    "Carefully assess each object pair listed above and determine the likelihood that they "
    "participate in a meaningful interaction within the scene. Base your assessment on how "
    "objects of those categories typically relate in physical or functional terms within "
    "real-world images.\n"
    "\n"
    "Provide a single integer confidence score from 1 to 5 for each pair, where:\n"
    "- 1 = Very Unlikely\n"
    "- 2 = Unlikely\n"
    "- 3 = Uncertain\n"
    "- 4 = Likely\n"
    "- 5 = Very Likely\n"
    "\n"
    "### Output Format:\n"
    "- Do not include any object names, explanations, or extra text.\n"
    "- Stop after the final pair.\n"
    "- You must return exactly one line per pair listed above.\n"
    "- Use the format: Pair [index]: [score]\n"
    "\n"
    "### Begin:\n"
)


def build_semantic_prompt(label_pairs: list[tuple[str, str]]) -> str:
    """Enumerated pair list plus the verbatim 1-5 scoring instructions."""
    if not label_pairs:
        raise ValueError("label_pairs must be non-empty")
    lines = "".join(f"Pair {i}: {a} and {b}\n" for i, (a, b) in enumerate(label_pairs, start=1))
    return _PROMPT_HEADER + lines + _PROMPT_FOOTER


_SCORE_LINE = re.compile(r"^\s*pair\s*(\d+)\s*[:.]\s*\[?\s*(-?\d+)\s*\]?\s*\.?\s*$", re.IGNORECASE)


def parse_pair_scores(raw: str, expected: int) -> list[int]:
    """Parse one "Pair [index]: [score]" line per expected pair.

    Lines that are not score lines are ignored; indices beyond `expected` are
    ignored. Duplicate or out-of-scale entries and missing indices raise,
    signalling a malformed response to retry.
    """
    if expected < 1:
        raise ValueError("expected must be >= 1")
    scores: dict[int, int] = {}
    for line in raw.splitlines():
        m = _SCORE_LINE.match(line)
        if not m:
            continue
        idx, score = int(m.group(1)), int(m.group(2))
        if not 1 <= idx <= expected:
            continue
        if idx in scores:
            raise DuplicatePair(idx)
        if not 1 <= score <= SCORE_SCALE:
            raise ScoreOutOfRange(idx)
        scores[idx] = score
    for idx in range(1, expected + 1):
        if idx not in scores:
            raise MissingPair(idx)
    return [scores[idx] for idx in range(1, expected + 1)]


def salvage_pair_scores(raw: str, expected: int, default: int = 3) -> list[int]:
    """Best-effort extraction after a failed retry; gaps get the neutral score."""
    scores: dict[int, int] = {}
    for line in raw.splitlines():
        m = _SCORE_LINE.match(line)
        if not m:
            continue
        idx, score = int(m.group(1)), int(m.group(2))
        if 1 <= idx <= expected and idx not in scores and 1 <= score <= SCORE_SCALE:
            scores[idx] = score
    return [scores.get(idx, default) for idx in range(1, expected + 1)]


def enumerate_label_pairs(instances: tuple[ObjectInstance, ...]) -> list[tuple[str, str]]:
    """Unordered label pairs realized by at least one instance pair,
    lexicographically enumerated (same-label pairs need two instances)."""
    counts: dict[str, int] = {}
    for obj in instances:
        counts[obj.label] = counts.get(obj.label, 0) + 1
    labels = sorted(counts)
    pairs = []
    for a, b in itertools.combinations_with_replacement(labels, 2):
        if a == b and counts[a] < 2:
            continue
        pairs.append((a, b))
    return pairs


def score_label_pairs(
    label_pairs: list[tuple[str, str]],
    image: ImageRef | None,
    hub,
    config: PipelineConfig,
) -> dict[tuple[str, str], int]:
    """Chat-score every label pair, chunked with chunk-local indices.

    A malformed chunk response is retried once (a distinct request); if the
    retry is also malformed the unparseable entries default to 3 (the scale's
    "Uncertain")."""
    scores: dict[tuple[str, str], int] = {}
    chunk_size = config.pair_chunk_size
    for start in range(0, len(label_pairs), chunk_size):
        chunk = label_pairs[start : start + chunk_size]
        prompt = build_semantic_prompt(chunk)
        raw = hub.chat(ChatRequest(prompt=prompt, image=image, sampling=config.sampling))
        try:
            values = parse_pair_scores(raw, expected=len(chunk))
        except PairResponseError:
            raw = hub.chat(ChatRequest(prompt=prompt, image=image, sampling=config.sampling, attempt=1))
            try:
                values = parse_pair_scores(raw, expected=len(chunk))
            except PairResponseError:
                values = salvage_pair_scores(raw, expected=len(chunk))
        for pair, value in zip(chunk, values):
            scores[pair] = value
    return scores


# ---------------------------------------------------------------------------
# Matrices


@dataclass(frozen=True)
class PairMatrixBundle:
    n: int
    semantic: np.ndarray  # (n,n), values in (0,1], same for all instances of a label pair
    geometric: np.ndarray  # (n,n), values in (0,1)
    fused: np.ndarray  # (n,n), values in (-inf, 0]; diagonal sentinel -inf


@dataclass(frozen=True)
class CandidatePair:
    i: int
    j: int
    fused_score: float
    semantic_score: float = 0.0
    geometric_score: float = 0.0

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("candidate pair must join distinct instances")


def semantic_matrix(
    scores: dict[tuple[str, str], int], instances: tuple[ObjectInstance, ...]
) -> np.ndarray:
    """Broadcast per-label-pair scores to all instance pairs; symmetric by
    construction, diagonal fixed at 1.0 (unused)."""
    n = len(instances)
    out = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            key = tuple(sorted((instances[i].label, instances[j].label)))
            if key not in scores:
                raise KeyError(f"label pair {key} was never scored")
            value = scores[key] / SCORE_SCALE
            out[i, j] = out[j, i] = value
    return out


def pair_distance(
    bi: BoundingBox,
    bj: BoundingBox,
    di: float,
    dj: float,
    image: ImageRef,
    lam1: float,
    lam2: float,
) -> float:
    """Weighted sum of diagonal-normalized 2D center distance and |depth gap|."""
    ci, cj = bi.center, bj.center
    planar = math.hypot(ci[0] - cj[0], ci[1] - cj[1])
    diag = math.hypot(image.width, image.height)
    return lam1 * (planar / diag) + lam2 * abs(di - dj)


def geometric_gate(d: float, tau: float, beta: float) -> float:
    """Soft spatial-plausibility gate: sigmoid(-beta * (d - tau)), in (0,1)."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    return 1.0 / (1.0 + math.exp(beta * (d - tau)))


def fuse(ps: float, pg: float, alpha: float) -> float:
    """Log-linear fusion alpha*ln(Ps) + (1-alpha)*ln(Pg); at most 0."""
    if ps <= 0.0 or pg <= 0.0:
        raise NonPositiveScore(f"fusion inputs must be positive, got Ps={ps}, Pg={pg}")
    return alpha * math.log(ps) + (1.0 - alpha) * math.log(pg)


def instance_depths(instances: tuple[ObjectInstance, ...], depth: DepthMap) -> np.ndarray:
    """Median normalized depth over each instance's clamped box."""
    boxes = np.array([inst.box.as_list() for inst in instances], dtype=np.float64)
    return box_median_depth(depth.values, boxes)


def build_matrices(
    instances: tuple[ObjectInstance, ...],
    label_scores: dict[tuple[str, str], int],
    depth: DepthMap,
    image: ImageRef,
    config: PipelineConfig,
) -> PairMatrixBundle:
    n = len(instances)
    sem = semantic_matrix(label_scores, instances)
    centers = np.array([inst.box.center for inst in instances], dtype=np.float64)
    depths = instance_depths(instances, depth)
    diag = math.hypot(image.width, image.height)
    g = config.geometry
    dist = pair_distance_matrix(centers, depths, diag, g.lambda1, g.lambda2)
    geo = sigmoid_gate_matrix(dist, g.tau_dist, g.beta)
    alpha = config.fusion.alpha
    fused = alpha * np.log(sem) + (1.0 - alpha) * np.log(geo)
    np.fill_diagonal(fused, -np.inf)
    return PairMatrixBundle(n=n, semantic=sem, geometric=geo, fused=fused)


def select_top_k(
    fused: np.ndarray,
    k: int,
    semantic: np.ndarray | None = None,
    geometric: np.ndarray | None = None,
) -> list[CandidatePair]:
    """Top min(k, n(n-1)/2) unordered pairs by fused score, ties by (i, j)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = fused.shape[0]
    entries = []
    for i in range(n):
        for j in range(i + 1, n):
            entries.append((-fused[i, j], i, j))
    entries.sort()
    out = []
    for neg, i, j in entries[:k]:
        out.append(
            CandidatePair(
                i=i,
                j=j,
                fused_score=-neg,
                semantic_score=float(semantic[i, j]) if semantic is not None else 0.0,
                geometric_score=float(geometric[i, j]) if geometric is not None else 0.0,
            )
        )
    return out


def refine_image(
    instances: tuple[ObjectInstance, ...],
    image: ImageRef,
    hub,
    config: PipelineConfig,
) -> tuple[PairMatrixBundle, list[CandidatePair]]:
    """Full stage-4 pass for one image: score, gate, fuse, select."""
    label_pairs = enumerate_label_pairs(instances)
    if not label_pairs:
        return PairMatrixBundle(
            n=len(instances),
            semantic=np.ones((len(instances),) * 2),
            geometric=np.zeros((len(instances),) * 2),
            fused=np.full((len(instances),) * 2, -np.inf),
        ), []
    label_scores = score_label_pairs(label_pairs, image, hub, config)
    depth = hub.depth(image)
    bundle = build_matrices(instances, label_scores, depth, image, config)
    selected = select_top_k(
        bundle.fused, config.fusion.top_k_pairs, semantic=bundle.semantic, geometric=bundle.geometric
    )
    return bundle, selected
