#!/usr/bin/env python3
"""Regenerate the bundled test fixtures.

Builds two small datasets (synthetic images, manifests, vocabularies) and
records warmed backend caches for them by running the pipeline live against
the deterministic fake backends from tests/fakes.py:

  tests/fixtures/replay5/   5-image SGDet run
  tests/fixtures/predcls3/  3-image PredCls run whose recorded relation
                            responses exactly describe the GT relations

Rerunning is deterministic up to cache record timestamps.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from fakes import FakeChat, FakeDepth, FakeDetector, FakeEmbedder  # noqa: E402

from owsgg.backends import BackendHub, StageCache  # noqa: E402
from owsgg.config import PipelineConfig  # noqa: E402
from owsgg.runner import Runner  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"

W, H = 80, 60


def make_image(path: Path, rects: list[tuple[tuple[int, int, int, int], tuple[int, int, int]]]):
    img = Image.new("RGB", (W, H), (200, 200, 200))
    draw = ImageDraw.Draw(img)
    for (box, color) in rects:
        draw.rectangle(box, fill=color)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def write_jsonl(path: Path, records: list[dict]):
    path.write_text("\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n")


def relation_table(gt_relations, labels) -> dict[tuple[str, str], tuple[str, str]]:
    """Directed sentence pairs that describe the GT relations exactly,
    with 'beside' fillers for the unmentioned direction."""
    directed = {}
    for (s, o, p) in gt_relations:
        directed[(labels[s], labels[o])] = f"The {labels[s]} is {p} the {labels[o]}."
    table = {}
    for (a, b) in list(directed):
        s1 = directed[(a, b)]
        s2 = directed.get((b, a), f"The {b} is beside the {a}.")
        table[(a, b)] = (s1, s2)
    return table


def record_run(fixture_dir: Path, config: PipelineConfig, hub_providers: dict):
    cache_path = fixture_dir / "backend_cache.jsonl"
    if cache_path.exists():
        cache_path.unlink()
    cache = StageCache(cache_path)
    hub = BackendHub(cache, config.models, mode="live", **hub_providers)
    with tempfile.TemporaryDirectory() as tmp:
        runner = Runner(
            manifest_path=fixture_dir / "manifest.jsonl",
            vocab_path=fixture_dir / "vocab.json",
            config=config,
            cache_dir=tmp,
            hub=hub,
        )
        outcomes = runner.run_all()
        for o in outcomes:
            if o.failed:
                raise SystemExit(f"fixture run failed at {o.stage}: {o.failed}")
        report = runner.evaluate()
        return report


def build_replay5():
    d = FIXTURES / "replay5"
    d.mkdir(parents=True, exist_ok=True)

    vocab = {
        "objects": [
            "cat", "car", "windshield", "vehicle", "light", "building", "street", "bag",
            "ski", "tree", "skier", "number", "snow", "roof", "person", "dog", "chair", "table",
        ],
        "relations": ["on", "near", "under", "behind", "beside", "holding", "sitting on", "standing on", "riding"],
    }
    gt = {
        "img1": {
            "objects": [("cat", [41, 31, 54, 49]), ("car", [5, 6, 59, 39])],
            "relations": [(0, 1, "on")],
        },
        "img2": {
            "objects": [("skier", [18, 20, 42, 50]), ("ski", [20, 45, 40, 52]), ("snow", [0, 40, 80, 60])],
            "relations": [(0, 1, "standing on"), (1, 2, "on")],
        },
        "img3": {
            "objects": [("person", [10, 5, 30, 55]), ("person", [35, 8, 55, 58]), ("dog", [55, 35, 75, 55])],
            "relations": [(0, 2, "holding"), (1, 2, "near")],
        },
        "img4": {
            "objects": [("cat", [5, 10, 30, 40]), ("dog", [45, 15, 75, 50])],
            "relations": [(0, 1, "near")],
        },
        "img5": {
            "objects": [("chair", [5, 25, 25, 55]), ("table", [30, 20, 70, 45]), ("person", [40, 5, 60, 40])],
            "relations": [(2, 0, "sitting on"), (0, 1, "near")],
        },
    }
    vocab["train_objects"] = vocab["objects"]
    vocab["train_relations"] = vocab["relations"]
    vocab["train_triplets"] = sorted(
        {
            (spec["objects"][s][0], spec["objects"][o][0], p)
            for spec in gt.values()
            for (s, o, p) in spec["relations"]
        }
    )
    (d / "vocab.json").write_text(json.dumps(vocab, indent=1, sort_keys=True) + "\n")

    palette = [(180, 40, 40), (40, 140, 60), (50, 70, 190), (200, 170, 40), (140, 60, 170)]
    manifest = []
    for n, (iid, spec) in enumerate(gt.items()):
        rects = [
            (tuple(box), palette[(n + k) % len(palette)])
            for k, (_label, box) in enumerate(spec["objects"])
        ]
        make_image(d / "images" / f"{iid}.png", rects)
        manifest.append(
            {
                "id": iid,
                "path": f"images/{iid}.png",
                "width": W,
                "height": H,
                "objects": [{"label": label, "box": box} for (label, box) in spec["objects"]],
                "relations": [{"s": s, "o": o, "p": p} for (s, o, p) in spec["relations"]],
            }
        )
    write_jsonl(d / "manifest.jsonl", manifest)

    config = PipelineConfig.from_dict({"task": "sgdet", "dataset": "vg150"})
    config.save(d / "config.json")

    entity_responses = {
        "img1": "windshield, vehicle, light, building, car, street, cat, bag",
        "img2": "ski, light, tree, skier, number, snow, roof",
        "img3": "man, puppy",
        "img4": "Cat, dog,  cat.",
        "img5": "chair, table, person",
    }
    detector_table = {
        ("img1", "windshield"): [([10, 10, 30, 25], 0.9)],
        ("img1", "vehicle"): [([5, 5, 60, 40], 0.8)],
        ("img1", "car"): [([5, 6, 59, 39], 0.85)],
        ("img1", "cat"): [([40, 30, 55, 50], 0.7)],
        ("img2", "ski"): [([20, 45, 40, 52], 0.8)],
        ("img2", "tree"): [([60, 5, 75, 40], 0.75)],
        ("img2", "skier"): [([18, 20, 42, 50], 0.9)],
        ("img2", "snow"): [([0, 40, 80, 60], 0.95)],
        ("img3", "person"): [([10, 5, 30, 55], 0.92), ([35, 8, 55, 58], 0.88)],
        ("img3", "dog"): [([55, 35, 75, 55], 0.8)],
        ("img4", "cat"): [([5, 10, 30, 40], 0.9)],
        ("img4", "dog"): [([45, 15, 75, 50], 0.85)],
        ("img5", "chair"): [([5, 25, 25, 55], 0.8)],
        ("img5", "table"): [([30, 20, 70, 45], 0.9)],
        ("img5", "person"): [([40, 5, 60, 40], 0.7)],
    }
    relation_sentences = {
        iid: relation_table(spec["relations"], [label for (label, _b) in spec["objects"]])
        for iid, spec in gt.items()
    }
    chat = FakeChat(entity_responses=entity_responses, relation_sentences=relation_sentences)
    providers = {
        "chat_backend": chat,
        "embed_backend": FakeEmbedder(),
        "detect_backend": FakeDetector(detector_table),
        "depth_backend": FakeDepth(),
    }
    report = record_run(d, config, providers)
    print("replay5 report:", json.dumps(report["splits"]["ALL"], sort_keys=True))


def build_predcls3():
    d = FIXTURES / "predcls3"
    d.mkdir(parents=True, exist_ok=True)

    vocab = {
        "objects": ["woman", "chair", "table", "man", "dog", "person"],
        "relations": ["on", "near", "under", "beside", "holding", "sitting on", "behind"],
    }
    gt = {
        "imgA": {
            "objects": [("woman", [5, 5, 30, 50]), ("chair", [10, 30, 35, 58]), ("table", [40, 25, 75, 50])],
            "relations": [(0, 1, "sitting on"), (0, 2, "near")],
        },
        "imgB": {
            "objects": [("man", [5, 5, 35, 55]), ("dog", [45, 25, 75, 55])],
            "relations": [(0, 1, "holding")],
        },
        "imgC": {
            "objects": [("person", [8, 5, 32, 52]), ("chair", [12, 32, 38, 58]), ("table", [42, 22, 78, 48])],
            "relations": [(0, 1, "sitting on"), (2, 1, "near")],
        },
    }
    vocab["train_objects"] = vocab["objects"]
    vocab["train_relations"] = vocab["relations"]
    vocab["train_triplets"] = sorted(
        {
            (spec["objects"][s][0], spec["objects"][o][0], p)
            for spec in gt.values()
            for (s, o, p) in spec["relations"]
        }
    )
    (d / "vocab.json").write_text(json.dumps(vocab, indent=1, sort_keys=True) + "\n")

    palette = [(30, 90, 170), (170, 90, 30), (90, 170, 30)]
    manifest = []
    for n, (iid, spec) in enumerate(gt.items()):
        rects = [
            (tuple(box), palette[(n + k) % len(palette)])
            for k, (_label, box) in enumerate(spec["objects"])
        ]
        make_image(d / "images" / f"{iid}.png", rects)
        manifest.append(
            {
                "id": iid,
                "path": f"images/{iid}.png",
                "width": W,
                "height": H,
                "objects": [{"label": label, "box": box} for (label, box) in spec["objects"]],
                "relations": [{"s": s, "o": o, "p": p} for (s, o, p) in spec["relations"]],
            }
        )
    write_jsonl(d / "manifest.jsonl", manifest)

    config = PipelineConfig.from_dict({"task": "predcls", "dataset": "vg150"})
    config.save(d / "config.json")

    relation_sentences = {
        iid: relation_table(spec["relations"], [label for (label, _b) in spec["objects"]])
        for iid, spec in gt.items()
    }
    chat = FakeChat(relation_sentences=relation_sentences)
    providers = {
        "chat_backend": chat,
        "embed_backend": FakeEmbedder(),
        "detect_backend": FakeDetector({}),
        "depth_backend": FakeDepth(),
    }
    report = record_run(d, config, providers)
    r20 = report["splits"]["ALL"]["R"][20]
    print("predcls3 R@20:", r20)
    if r20 != 1.0:
        raise SystemExit("predcls3 fixture must achieve perfect R@20")


def main():
    build_replay5()
    build_predcls3()
    print("fixtures written under", FIXTURES)


if __name__ == "__main__":
    main()
