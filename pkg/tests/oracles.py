"""Independent brute-force oracles. Plain Python on purpose: these must not
share code paths with the implementations they check."""

from __future__ import annotations

import math


def oracle_score_candidates(sims, tau, delta, k):
    """Reference softmax / near-max / top-k selection.

    Exponentials are computed on max-shifted scores (softmax is shift
    invariant), so tiny temperatures cannot overflow.
    """
    raw = [s for (_c, s) in sims]
    m = max(raw)
    exps = [math.exp((s - m) / tau) for s in raw]
    total = sum(exps)
    soft = [e / total for e in exps]
    s_max = max(soft)
    kept = [i for i in range(len(sims)) if s_max - soft[i] < delta]
    kept.sort(key=lambda i: (-soft[i], i))
    return [(sims[i][0], soft[i]) for i in kept[:k]]


def oracle_top_k(matrix, k):
    """All unordered pairs of a symmetric score matrix, best k by (score, i, j)."""
    n = len(matrix)
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            pairs.append((i, j, matrix[i][j]))
    pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
    return [(i, j) for (i, j, _v) in pairs[:k]]


def oracle_iou(a, b):
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def oracle_match_ranks(preds, gts, task, iou_threshold):
    """Rank-greedy matching.

    preds: ranked list of (s_label, s_box, o_label, o_box, predicate)
    gts:   list of (s_label, s_box, o_label, o_box, predicate)
    Returns per-GT match rank (1-based) or None.
    """

    def endpoint(p_label, p_box, g_label, g_box):
        if p_label != g_label:
            return False
        if task == "predcls":
            return tuple(p_box) == tuple(g_box)
        return oracle_iou(p_box, g_box) >= iou_threshold

    ranks = [None] * len(gts)
    for pos, (sl, sb, ol, ob, pp) in enumerate(preds):
        for t, (gsl, gsb, gol, gob, gp) in enumerate(gts):
            if ranks[t] is not None or pp != gp:
                continue
            if endpoint(sl, sb, gsl, gsb) and endpoint(ol, ob, gol, gob):
                ranks[t] = pos + 1
                break
    return ranks


def oracle_recall(per_image_ranks, ks):
    """per_image_ranks: list of lists of per-GT match ranks (None = unmatched)."""
    out = {}
    for k in ks:
        vals = []
        for ranks in per_image_ranks:
            if not ranks:
                continue
            vals.append(sum(1 for r in ranks if r is not None and r <= k) / len(ranks))
        out[k] = sum(vals) / len(vals) if vals else None
    return out


def oracle_mean_recall(per_image, ks):
    """per_image: list of lists of (predicate, rank-or-None)."""
    totals = {}
    hits = {k: {} for k in ks}
    for entries in per_image:
        for (pred, rank) in entries:
            totals[pred] = totals.get(pred, 0) + 1
            for k in ks:
                if rank is not None and rank <= k:
                    hits[k][pred] = hits[k].get(pred, 0) + 1
    out = {}
    for k in ks:
        vals = [hits[k].get(p, 0) / totals[p] for p in totals]
        out[k] = sum(vals) / len(vals) if vals else None
    return out
