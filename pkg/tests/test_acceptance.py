"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run `pytest -s tests/test_acceptance.py` to see the per-criterion lines.
"""

import itertools
import math
import shutil
import time

import numpy as np
import pytest

from fakes import CountingProvider
from oracles import (
    oracle_match_ranks,
    oracle_mean_recall,
    oracle_recall,
    oracle_score_candidates,
    oracle_top_k,
)
from owsgg.backends import BackendHub, StageCache
from owsgg.config import PipelineConfig
from owsgg.core import BoundingBox, GroundTruthGraph, ImageRef, ObjectInstance, TripletPrediction, VocabularyProfile
from owsgg.entity_stage import score_candidates
from owsgg.errors import (
    DuplicatePair,
    MissingPair,
    ScoreOutOfRange,
    UnsplittableLine,
)
from owsgg.metrics import MatchConfig, match_triplets, mean_recall_at_k, pair_refinement_prf, recall_at_k
from owsgg.pair_refinement import (
    build_semantic_prompt,
    fuse,
    geometric_gate,
    pair_distance,
    parse_pair_scores,
    select_top_k,
)
from owsgg.relation_stage import parse_relation_response
from owsgg.runner import Runner
from owsgg.taxonomy import SplitLabel, classify_triplet, is_ovdr, partition


def criterion(name, body):
    try:
        body()
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


# ---------------------------------------------------------------------------


def test_entity_mapping_oracle_equivalence():
    def body():
        start = time.monotonic()
        rng = np.random.RandomState(1234)
        for _ in range(1000):
            n = rng.randint(2, 201)
            sims = [(f"c{i}", float(s)) for i, s in enumerate(rng.uniform(-1.0, 1.0, n))]
            got = score_candidates(sims, tau=0.2, delta=0.05, k=2)
            want = oracle_score_candidates(sims, tau=0.2, delta=0.05, k=2)
            assert [c for c, _ in got] == [c for c, _ in want]
            for (_, gs), (_, ws) in zip(got, want):
                assert gs == pytest.approx(ws, abs=1e-9)

        near = score_candidates([("a", 0.90), ("b", 0.89), ("c", 0.10)], 0.2, 0.05, 2)
        assert [c for c, _ in near] == ["a", "b"]
        assert near[0][1] - near[1][1] == pytest.approx(0.024762, abs=1e-6)

        wide = score_candidates([("a", 0.90), ("b", 0.70), ("c", 0.10)], 0.2, 0.05, 2)
        assert [c for c, _ in wide] == ["a"]
        assert wide[0][1] == pytest.approx(0.721399, abs=1e-6)
        # gap to the runner-up, recomputed on the unfiltered softmax
        full = oracle_score_candidates([("a", 0.90), ("b", 0.70), ("c", 0.10)], 0.2, delta=1.1, k=3)
        assert full[0][1] - full[1][1] == pytest.approx(0.456011, abs=1e-6)

        elapsed = time.monotonic() - start
        assert elapsed < 5.0, f"took {elapsed:.2f}s"

    criterion("entity-mapping oracle equivalence (1000 random vectors + worked examples, <5s)", body)


def test_geometric_kernel_checks():
    def body():
        img = ImageRef(id="g", path="/dev/null", width=800, height=600)
        bi = BoundingBox(50, 50, 150, 150)  # center (100, 100)
        bj = BoundingBox(350, 450, 450, 550)  # center (400, 500)
        assert pair_distance(bi, bj, 0.2, 0.4, img, 1.0, 1.5) == pytest.approx(0.8, abs=1e-12)

        assert geometric_gate(0.5, tau=0.5, beta=16.0) == 0.5
        assert geometric_gate(0.8, 0.5, 16.0) == pytest.approx(0.00816, abs=1e-5)

        rng = np.random.RandomState(99)
        d = rng.uniform(0.0, 1.5, 10_000)
        tau, beta = 0.5, 16.0
        g = np.array([geometric_gate(x, tau, beta) for x in d])
        order = np.argsort(d)
        diffs = np.diff(g[order])
        assert np.all(diffs <= 0)  # monotone: larger distance, smaller gate
        sharp = np.array([geometric_gate(x, tau, beta * 2) for x in d])
        at_tau = np.isclose(d, tau)
        assert np.all(np.abs(sharp[~at_tau] - 0.5) > np.abs(g[~at_tau] - 0.5))
        assert np.all((g > 0) & (g < 1))

    criterion("geometric kernels (worked distances, gate values, monotonicity on 10k)", body)


def test_fusion_endpoints_and_invariance():
    def body():
        rng = np.random.RandomState(7)
        for _ in range(100):
            ps = float(rng.uniform(0.05, 1.0))
            pg = float(rng.uniform(0.05, 1.0))
            assert fuse(ps, pg, 1.0) == math.log(ps)  # bit-exact single cue
            assert fuse(ps, pg, 0.0) == math.log(pg)
        assert fuse(0.8, 0.5, 0.25) == pytest.approx(-0.57565, abs=1e-5)

        alpha = 0.25
        for trial in range(500):
            n = rng.randint(3, 9)
            ps = rng.uniform(0.2, 1.0, (n, n))
            ps = (ps + ps.T) / 2
            pg = rng.uniform(0.01, 0.999, (n, n))
            pg = (pg + pg.T) / 2
            fused = alpha * np.log(ps) + (1 - alpha) * np.log(pg)
            np.fill_diagonal(fused, -np.inf)
            chosen = [(p.i, p.j) for p in select_top_k(fused, 5)]
            c = float(rng.uniform(0.05, 1.0))
            for scaled_ps, scaled_pg in ((ps * c, pg), (ps, pg * c)):
                f2 = alpha * np.log(scaled_ps) + (1 - alpha) * np.log(scaled_pg)
                np.fill_diagonal(f2, -np.inf)
                assert [(p.i, p.j) for p in select_top_k(f2, 5)] == chosen

    criterion("fusion endpoints bit-exact + argmax invariance on 500 matrices", body)


def test_top_k_equals_enumeration():
    def body():
        rng = np.random.RandomState(55)
        for trial in range(1000):
            n = rng.randint(2, 9)
            m = rng.uniform(-5, 0, (n, n))
            m = (m + m.T) / 2
            np.fill_diagonal(m, -np.inf)
            k = int(rng.randint(1, 30))
            got = [(p.i, p.j) for p in select_top_k(m, k)]
            assert got == oracle_top_k(m.tolist(), k)

    criterion("top-k selection equals exhaustive enumeration (n<=8, 1000 matrices)", body)


def test_taxonomy_partition():
    def body():
        start = time.monotonic()
        vocab = VocabularyProfile(
            objects=("person", "chair", "dog", "cat"),
            relations=("on", "near"),
            train_objects=frozenset({"person", "chair"}),
            train_relations=frozenset({"on"}),
            train_triplets=frozenset({("person", "chair", "on")}),
        )
        # the five hand-worked examples
        assert classify_triplet(("person", "chair", "on"), vocab) == SplitLabel.CS
        assert classify_triplet(("person", "person", "on"), vocab) == SplitLabel.ZS
        assert classify_triplet(("person", "chair", "near"), vocab) == SplitLabel.OVR
        assert classify_triplet(("dog", "cat", "on"), vocab) == SplitLabel.OVD
        assert classify_triplet(("dog", "cat", "near"), vocab) == SplitLabel.OW

        rng = np.random.RandomState(2024)
        objects = tuple(f"o{i}" for i in range(40))
        relations = tuple(f"r{i}" for i in range(12))
        for _ in range(5):
            train_o = frozenset(rng.choice(objects, rng.randint(0, 41), replace=False))
            train_r = frozenset(rng.choice(relations, rng.randint(0, 13), replace=False))
            pool = [
                (str(rng.choice(objects)), str(rng.choice(objects)), str(rng.choice(relations)))
                for _ in range(2000)
            ]
            train_t = frozenset(t for t in pool[:100] if t[0] in train_o and t[1] in train_o and t[2] in train_r)
            profile = VocabularyProfile(
                objects=objects, relations=relations,
                train_objects=train_o, train_relations=train_r, train_triplets=train_t,
            )
            for (a, b, r) in pool:
                label = classify_triplet((a, b, r), profile)
                # jointly exhaustive: always exactly one of the six
                assert label in SplitLabel
                # independent re-derivation
                sa, sb, sr = a in train_o, b in train_o, r in train_r
                if sa and sb and sr:
                    expected = SplitLabel.CS if (a, b, r) in train_t else SplitLabel.ZS
                elif sa and sb:
                    expected = SplitLabel.OVR
                elif not sa and not sb:
                    expected = SplitLabel.OVD if sr else SplitLabel.OW
                else:
                    expected = SplitLabel.MIXED
                assert label == expected
                if label == SplitLabel.OW:
                    assert is_ovdr(label)
        elapsed = time.monotonic() - start
        assert elapsed < 2.0, f"took {elapsed:.2f}s"

    criterion("taxonomy partition (10k random triplets, five worked examples, <2s)", body)


def _random_metrics_fixture(rng, task):
    n_obj = rng.randint(2, 6)
    objects = []
    for _ in range(n_obj):
        x1, y1 = rng.uniform(0, 60, 2)
        objects.append((f"l{rng.randint(0, 3)}", (float(x1), float(y1), float(x1) + float(rng.uniform(5, 30)), float(y1) + float(rng.uniform(5, 30)))))
    img = ImageRef(id=f"r{rng.randint(1e9)}", path="/dev/null", width=100, height=100)
    objs = tuple(ObjectInstance(index=i, label=l, box=BoundingBox(*b)) for i, (l, b) in enumerate(objects))
    rels = []
    for _ in range(rng.randint(1, 7)):
        s, o = rng.choice(n_obj, 2, replace=False)
        rels.append((int(s), int(o), f"p{rng.randint(0, 3)}"))
    gt = GroundTruthGraph(image=img, objects=objs, relations=tuple(rels))

    preds = []
    for rank in range(rng.randint(0, 31)):
        if rng.rand() < 0.7:
            s, o, p = gt.relations[rng.randint(0, len(gt.relations))]
            jitter = float(rng.choice([0.0, 0.0, 2.0, 9.0]))
            subj, obj = gt.objects[s], gt.objects[o]
            box_j = lambda b: BoundingBox(b.x1 + jitter, b.y1 + jitter, b.x2 + jitter, b.y2 + jitter)
            preds.append(
                TripletPrediction(
                    subject=ObjectInstance(index=50 + s, label=subj.label, box=box_j(subj.box)),
                    object=ObjectInstance(index=60 + o, label=obj.label, box=box_j(obj.box)),
                    predicate=p if rng.rand() < 0.8 else f"p{rng.randint(0, 3)}",
                    score=1.0 - 0.001 * rank,
                    pair_id=rank,
                    direction="forward",
                )
            )
        else:
            a, b = gt.objects[0], gt.objects[-1]
            preds.append(
                TripletPrediction(
                    subject=ObjectInstance(index=70, label="zz", box=a.box),
                    object=ObjectInstance(index=71, label="ww", box=b.box),
                    predicate="p0",
                    score=1.0 - 0.001 * rank,
                    pair_id=rank,
                    direction="forward",
                )
            )
    return gt, preds


def test_metrics_oracle_equivalence():
    def body():
        rng = np.random.RandomState(404)
        ks = (5, 10, 20)
        for trial in range(200):
            task = "predcls" if trial % 2 == 0 else "sgdet"
            images = []
            for _ in range(rng.randint(1, 4)):
                images.append(_random_metrics_fixture(rng, task))
            cfg = MatchConfig(task=task, ks=ks)
            matches, oracle_ranks, oracle_preds = [], [], []
            for gt, preds in images:
                m = match_triplets(preds, gt, cfg)
                matches.append(m)
                o_preds = [
                    (p.subject.label, tuple(p.subject.box.as_list()), p.object.label, tuple(p.object.box.as_list()), p.predicate)
                    for p in preds
                ]
                o_gts = [
                    (gt.objects[s].label, tuple(gt.objects[s].box.as_list()), gt.objects[o].label, tuple(gt.objects[o].box.as_list()), p)
                    for (s, o, p) in gt.relations
                ]
                ranks = oracle_match_ranks(o_preds, o_gts, task, 0.5)
                assert m.match_ranks == ranks
                oracle_ranks.append(ranks)
                oracle_preds.append(list(zip([p for (_s, _o, p) in gt.relations], ranks)))

            got_r = recall_at_k(matches, ks)
            want_r = oracle_recall(oracle_ranks, ks)
            got_mr = mean_recall_at_k(matches, ks)
            want_mr = oracle_mean_recall(oracle_preds, ks)
            for k in ks:
                assert got_r[k] == want_r[k]
                assert got_mr[k] == want_mr[k]
            assert [got_r[k] for k in ks] == sorted(got_r[k] for k in ks)
            assert [got_mr[k] for k in ks] == sorted(got_mr[k] for k in ks)

        selected = [(0, i + 1) for i in range(25)]
        gt_pairs = [(0, i + 1) for i in range(5)] + [(90, 91 + i) for i in range(5)]
        p, r, f1 = pair_refinement_prf(selected, gt_pairs)
        assert p == pytest.approx(0.2, abs=1e-4)
        assert r == pytest.approx(0.5, abs=1e-4)
        assert f1 == pytest.approx(0.2857, abs=1e-4)

    criterion("metrics oracle equivalence (200 fixtures) + P/R/F1 worked example", body)


def test_parser_fidelity(fixtures_dir):
    def body():
        appendix = fixtures_dir / "appendix"
        labels = [
            "book", "bookcase", "bottle", "cat", "chair", "chest of drawers", "computer monitor",
            "desk", "drawer", "lamp", "laptop", "mouse", "musical keyboard", "poster", "window",
        ]
        pairs = list(itertools.combinations(labels, 2))[:50]
        prompt = build_semantic_prompt(pairs)
        assert prompt == (appendix / "pair_scoring_prompt_50.txt").read_text()
        assert prompt.splitlines()[4] == "Pair 1: book and bookcase"
        assert "Pair 50: cat and window" in prompt

        scores = parse_pair_scores((appendix / "pair_scores_response_50.txt").read_text(), expected=50)
        assert len(scores) == 50 and all(1 <= s <= 5 for s in scores)

        sentences = parse_relation_response((appendix / "relation_response_6pairs.txt").read_text(), expected=6)
        assert [sp.pair_id for sp in sentences] == [1, 2, 3, 4, 5, 6]
        assert sentences[0].s1 == "The woman is sitting on the chair."
        assert sentences[4].s2 == "The table is on the chair."

        with pytest.raises(ScoreOutOfRange):
            parse_pair_scores("Pair 1: 7", expected=1)
        with pytest.raises(MissingPair):
            parse_pair_scores("Pair 2: 4", expected=2)
        with pytest.raises(DuplicatePair):
            parse_pair_scores("Pair 1: 4\nPair 1: 4", expected=1)
        with pytest.raises(MissingPair):
            parse_relation_response("Pair 2:\nSentence1: a | Sentence2: b", expected=2)
        with pytest.raises(UnsplittableLine):
            parse_relation_response("Pair 1: no delimiter here.", expected=1)

    criterion("parser fidelity (verbatim 50-pair prompt, score response, 6-pair relation block)", body)


def _counting_replay_runner(fixture_dir, cache_dir):
    cache_dir.mkdir(parents=True, exist_ok=True)
    shutil.copy(fixture_dir / "backend_cache.jsonl", cache_dir / "backend_cache.jsonl")
    config = PipelineConfig.load(fixture_dir / "config.json")
    counter = CountingProvider()
    hub = BackendHub(
        StageCache(cache_dir / "backend_cache.jsonl"),
        config.models,
        mode="replay",
        chat_backend=counter,
        embed_backend=counter,
        detect_backend=counter,
        depth_backend=counter,
    )
    runner = Runner(
        manifest_path=fixture_dir / "manifest.jsonl",
        vocab_path=fixture_dir / "vocab.json",
        config=config,
        cache_dir=cache_dir,
        mode="replay",
        hub=hub,
    )
    return runner, counter


def test_end_to_end_replay_determinism(fixtures_dir, tmp_path):
    def body():
        start = time.monotonic()
        fixture = fixtures_dir / "replay5"
        artifacts = []
        counters = []
        for run_idx in (1, 2):
            runner, counter = _counting_replay_runner(fixture, tmp_path / f"run{run_idx}")
            outcomes = runner.run_all()
            assert all(not o.failed for o in outcomes), [o.failed for o in outcomes]
            report = runner.evaluate()
            runner.write_report(report)
            cache_dir = tmp_path / f"run{run_idx}"
            artifacts.append(
                (
                    (cache_dir / "predictions.jsonl").read_bytes(),
                    (cache_dir / "report.json").read_bytes(),
                    (cache_dir / "report.csv").read_bytes(),
                )
            )
            counters.append(counter.calls)
        assert artifacts[0] == artifacts[1]
        assert counters == [0, 0]
        elapsed = time.monotonic() - start
        assert elapsed < 30.0, f"took {elapsed:.2f}s"

    criterion("end-to-end replay determinism (5-image fixture, byte-identical, 0 live calls, <30s)", body)


def test_predcls_fidelity_smoke(fixtures_dir, tmp_path):
    def body():
        fixture = fixtures_dir / "predcls3"
        runner, counter = _counting_replay_runner(fixture, tmp_path / "smoke")
        outcomes = runner.run_all()
        assert all(not o.failed for o in outcomes)
        splits = partition(runner.graphs, runner.vocab)
        assert set(splits) == {"CS"}
        report = runner.evaluate(split_index=splits)
        assert report["splits"]["CS"]["R"][20] == 1.0
        assert counter.calls == 0

    criterion("PredCls fidelity smoke (recorded relations match GT, R@20 = 1.0 on CS)", body)
