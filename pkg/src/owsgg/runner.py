"""Stage-oriented pipeline runner: per-image resumable execution over a
manifest, stage output records in the cache directory, and report emission."""

from __future__ import annotations

import csv
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import BackendHub, ChatRequest, StageCache, hub_from_env
from .config import PipelineConfig
from .core import (
    BoundingBox,
    GroundTruthGraph,
    ImageRef,
    ObjectInstance,
    TripletPrediction,
    clamp_box,
    load_manifest,
    load_vocabulary,
    normalize_label,
)
from .detection_stage import detect_all, ground_truth_set
from .entity_stage import PredictedEntity, build_entity_prompt, map_all, parse_entity_list
from .errors import DegenerateBox, NoGroundTruth, OwsggError, StageOrderError
from .metrics import (
    ImageMatches,
    MatchConfig,
    gt_pairs_predcls,
    match_triplets,
    pair_prf_counts_sgdet,
    prf_from_counts,
    recall_at_k,
    mean_recall_at_k,
    split_filtered_report,
)
from .pair_refinement import CandidatePair, refine_image
from .relation_stage import relate_image

PIPELINE_STAGES = ("entities", "map", "detect", "refine", "relate")
ALL_STAGES = PIPELINE_STAGES + ("eval",)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


class StageStore:
    """JSONL-per-stage record store under <cache>/stages.

    Appends are serialized; reads index by image id keeping the last record
    whose config_hash matches the current configuration.
    """

    def __init__(self, cache_dir: str | Path):
        self.dir = Path(cache_dir) / "stages"
        self._lock = threading.Lock()

    def _path(self, stage: str) -> Path:
        return self.dir / f"{stage}.jsonl"

    def load(self, stage: str, config_hash: str) -> dict[str, dict]:
        path = self._path(stage)
        records: dict[str, dict] = {}
        if not path.exists():
            return records
        for line in path.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue
            if rec.get("config_hash") == config_hash:
                records[rec["image_id"]] = rec
        return records

    def append(self, stage: str, record: dict) -> None:
        line = _dumps(record)
        with self._lock:
            self.dir.mkdir(parents=True, exist_ok=True)
            with self._path(stage).open("a") as fh:
                fh.write(line + "\n")
                fh.flush()


@dataclass
class StageOutcome:
    stage: str
    processed: int
    cached: int
    failed: dict[str, str]  # image_id -> error message


def _instances_from_record(rec: dict) -> tuple[ObjectInstance, ...]:
    return tuple(
        ObjectInstance(
            index=i,
            label=entry["label"],
            box=BoundingBox(*entry["box"]),
            det_score=entry["score"],
        )
        for i, entry in enumerate(rec["instances"])
    )


def _pairs_from_record(rec: dict) -> list[CandidatePair]:
    by_ij = {(p["i"], p["j"]): p for p in rec["pairs"]}
    selected = []
    for i, j in rec["selected"]:
        p = by_ij[(i, j)]
        selected.append(
            CandidatePair(
                i=i, j=j, fused_score=p["fused"], semantic_score=p["ps"], geometric_score=p["pg"]
            )
        )
    return selected


def _triplet_record(t: TripletPrediction) -> dict:
    return {
        "s_idx": t.subject.index,
        "o_idx": t.object.index,
        "s_label": t.subject.label,
        "o_label": t.object.label,
        "s_box": t.subject.box.as_list(),
        "o_box": t.object.box.as_list(),
        "predicate": t.predicate,
        "score": t.score,
        "pair_id": t.pair_id,
        "direction": t.direction,
        "sentence": t.raw_sentence,
    }


def _prediction_from_record(entry: dict) -> TripletPrediction:
    return TripletPrediction(
        subject=ObjectInstance(index=entry["s_idx"], label=entry["s_label"], box=BoundingBox(*entry["s_box"])),
        object=ObjectInstance(index=entry["o_idx"], label=entry["o_label"], box=BoundingBox(*entry["o_box"])),
        predicate=entry["predicate"],
        score=entry["score"],
        pair_id=entry.get("pair_id", 0),
        direction=entry.get("direction", "forward"),
        raw_sentence=entry.get("sentence", ""),
    )


class Runner:
    def __init__(
        self,
        manifest_path: str | Path,
        vocab_path: str | Path,
        config: PipelineConfig,
        cache_dir: str | Path,
        mode: str = "replay",
        hub: BackendHub | None = None,
    ):
        self.graphs = load_manifest(manifest_path)
        self.vocab = load_vocabulary(vocab_path)
        self.config = config
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.store = StageStore(self.cache_dir)
        self.cache = StageCache(self.cache_dir / "backend_cache.jsonl")
        self.hub = hub if hub is not None else hub_from_env(self.cache, config.models, mode)
        self._write_meta(manifest_path, vocab_path)

    def _write_meta(self, manifest_path, vocab_path) -> None:
        meta = {
            "manifest": str(Path(manifest_path).resolve()),
            "vocab": str(Path(vocab_path).resolve()),
            "task": self.config.task,
            "config": self.config.to_dict(),
        }
        (self.cache_dir / "run_meta.json").write_text(_dumps(meta) + "\n")

    # -- stage bodies (one image each) --------------------------------------

    def _stage_entities(self, graph: GroundTruthGraph, _prereq: dict | None) -> dict:
        prompt = build_entity_prompt(self.config.dataset, self.config.custom_entity_prompt)
        raw = self.hub.chat(ChatRequest(prompt=prompt, image=graph.image, sampling=self.config.sampling))
        entities = parse_entity_list(raw)
        return {"image_id": graph.image.id, "entities": [e.raw for e in entities]}

    def _stage_map(self, graph: GroundTruthGraph, prereq: dict) -> dict:
        entities = [PredictedEntity(raw=r, normalized=n) for r in prereq["entities"] if (n := normalize_label(r))]
        m = self.config.mapping
        mapped = map_all(
            entities, self.vocab, self.hub, tau=m.tau_softmax, delta=m.delta, k=m.top_k_map
        )
        return {"image_id": graph.image.id, "entities": prereq["entities"], "mapped": mapped}

    def _stage_detect(self, graph: GroundTruthGraph, prereq: dict | None) -> dict:
        if self.config.task == "predcls":
            detection = ground_truth_set(graph, self.vocab.object_index)
        else:
            detection = detect_all(
                prereq["mapped"], graph.image, self.hub, self.config, self.vocab.object_index
            )
        return {
            "image_id": graph.image.id,
            "instances": [
                {"label": inst.label, "box": inst.box.as_list(), "score": inst.det_score}
                for inst in detection.instances
            ],
        }

    def _stage_refine(self, graph: GroundTruthGraph, prereq: dict) -> dict:
        instances = _instances_from_record(prereq)
        bundle, selected = refine_image(instances, graph.image, self.hub, self.config)
        pairs = []
        for i in range(bundle.n):
            for j in range(i + 1, bundle.n):
                pairs.append(
                    {
                        "i": i,
                        "j": j,
                        "ps": float(bundle.semantic[i, j]),
                        "pg": float(bundle.geometric[i, j]),
                        "fused": float(bundle.fused[i, j]),
                    }
                )
        return {
            "image_id": graph.image.id,
            "pairs": pairs,
            "selected": [[p.i, p.j] for p in selected],
        }

    def _stage_relate(self, graph: GroundTruthGraph, prereq: dict) -> dict:
        instances = _instances_from_record(prereq["detect"])
        selected = _pairs_from_record(prereq["refine"])
        triplets = relate_image(instances, selected, graph.image, self.hub, self.vocab, self.config)
        return {"image_id": graph.image.id, "triplets": [_triplet_record(t) for t in triplets]}

    # -- orchestration -------------------------------------------------------

    # Stages a record must exist for (current config hash) before this one runs.
    _PREREQ = {"entities": (), "map": ("entities",), "detect": ("map",), "refine": ("detect",), "relate": ("refine", "detect")}

    def _records(self, stage: str) -> dict[str, dict]:
        return self.store.load(stage, self.config.stage_hash(stage))

    def stages_for_task(self) -> tuple[str, ...]:
        if self.config.task == "predcls":
            return ("detect", "refine", "relate")
        return PIPELINE_STAGES

    def run_stage(self, stage: str, skip_images: set[str] = frozenset()) -> StageOutcome:
        if stage not in PIPELINE_STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        if self.config.task == "predcls" and stage in ("entities", "map"):
            return StageOutcome(stage=stage, processed=0, cached=0, failed={})
        body = getattr(self, f"_stage_{stage}")
        config_hash = self.config.stage_hash(stage)
        done = self._records(stage)
        prereq_stages = self._PREREQ[stage]
        if self.config.task == "predcls" and stage == "detect":
            prereq_stages = ()
        prereqs = {ps: self._records(ps) for ps in prereq_stages}

        todo = []
        failed: dict[str, str] = {}
        missing_prereq = 0
        for graph in self.graphs:
            iid = graph.image.id
            if iid in done or iid in skip_images:
                continue
            if any(iid not in prereqs[ps] for ps in prereq_stages):
                missing_prereq += 1
                failed[iid] = f"StageOrderError: prerequisites of {stage!r} not cached for image {iid!r}"
                continue
            if len(prereq_stages) == 0:
                todo.append((graph, None))
            elif len(prereq_stages) == 1:
                todo.append((graph, prereqs[prereq_stages[0]][iid]))
            else:
                todo.append((graph, {ps: prereqs[ps][iid] for ps in prereq_stages}))

        if missing_prereq and not done and not todo:
            raise StageOrderError(
                f"stage {stage!r} has no runnable images; run {list(prereq_stages)} first"
            )

        lock = threading.Lock()
        outcomes: dict[str, str] = {}

        def work(item):
            graph, prereq = item
            try:
                rec = body(graph, prereq)
            except OwsggError as exc:
                with lock:
                    outcomes[graph.image.id] = f"{type(exc).__name__}: {exc}"
                return
            rec["config_hash"] = config_hash
            self.store.append(stage, rec)

        workers = self.config.concurrency.max_in_flight
        if len(todo) <= 1 or workers == 1:
            for item in todo:
                work(item)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(work, todo))

        failed.update(outcomes)
        processed = len(todo) - len(outcomes)
        if stage == "relate":
            self.write_predictions()
        return StageOutcome(stage=stage, processed=processed, cached=len(done), failed=failed)

    def run_all(self) -> list[StageOutcome]:
        outcomes = []
        failed_images: set[str] = set()
        for stage in self.stages_for_task():
            outcome = self.run_stage(stage, skip_images=failed_images)
            failed_images.update(outcome.failed)
            outcomes.append(outcome)
        return outcomes

    # -- artifacts -----------------------------------------------------------

    def write_predictions(self) -> Path:
        """Materialize the final prediction file in manifest order."""
        records = self._records("relate")
        out = self.cache_dir / "predictions.jsonl"
        lines = []
        keep = ("s_idx", "o_idx", "s_label", "o_label", "s_box", "o_box", "predicate", "score")
        for graph in self.graphs:
            rec = records.get(graph.image.id)
            if rec is None:
                continue
            triplets = [{k: t[k] for k in keep} for t in rec["triplets"]]
            lines.append(_dumps({"image_id": graph.image.id, "triplets": triplets}))
        out.write_text("\n".join(lines) + ("\n" if lines else ""))
        return out

    def evaluate(self, split_index: dict[str, list[str]] | None = None, ks: tuple[int, ...] = (20, 50, 100)) -> dict:
        relate_records = self._records("relate")
        if not relate_records:
            raise StageOrderError("eval requires cached relate records; run the pipeline first")
        cfg = MatchConfig(task=self.config.task, ks=tuple(ks))
        matches: list[ImageMatches] = []
        for graph in self.graphs:
            rec = relate_records.get(graph.image.id)
            preds = [_prediction_from_record(e) for e in rec["triplets"]] if rec else []
            matches.append(match_triplets(preds, graph, cfg))

        report: dict = {"task": self.config.task, "splits": {}}
        try:
            report["splits"]["ALL"] = {
                "R": recall_at_k(matches, cfg.ks),
                "mR": mean_recall_at_k(matches, cfg.ks),
            }
        except NoGroundTruth:
            raise
        if split_index:
            report["splits"].update(split_filtered_report(matches, split_index, cfg.ks))
        report["pair_refinement"] = self._pair_refinement_report()
        return report

    def _pair_refinement_report(self) -> dict:
        refine_records = self._records("refine")
        detect_records = self._records("detect")
        hits = n_sel = n_gt = 0
        for graph in self.graphs:
            rec = refine_records.get(graph.image.id)
            if rec is None:
                continue
            selected = [tuple(p) for p in rec["selected"]]
            if self.config.task == "predcls":
                detection = ground_truth_set(graph, self.vocab.object_index)
                src_map = {inst.source_index: inst.index for inst in detection.instances}
                gt_pairs = gt_pairs_predcls(graph, src_map)
                hits += len(set(selected) & set(gt_pairs))
                n_sel += len(selected)
                n_gt += len(gt_pairs)
            else:
                detect_rec = detect_records.get(graph.image.id)
                if detect_rec is None:
                    continue
                boxes = np.array([e["box"] for e in detect_rec["instances"]], dtype=np.float64)
                labels = [e["label"] for e in detect_rec["instances"]]
                h, s, g = pair_prf_counts_sgdet(
                    selected, boxes, labels, graph, MatchConfig(task="sgdet").iou_threshold
                )
                hits += h
                n_sel += s
                n_gt += g
        p, r, f1 = prf_from_counts(hits, n_sel, n_gt)
        return {"P": p, "R": r, "F1": f1}

    def write_report(self, report: dict) -> tuple[Path, Path]:
        json_path = self.cache_dir / "report.json"
        json_path.write_text(_dumps(report) + "\n")
        csv_path = self.cache_dir / "report.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "split", "metric", "k", "value"])
            for split in sorted(report["splits"]):
                for metric in ("R", "mR"):
                    for k in sorted(report["splits"][split][metric]):
                        writer.writerow(
                            [report["task"], split, metric, k, report["splits"][split][metric][k]]
                        )
            for key in ("P", "R", "F1"):
                writer.writerow([report["task"], "pair_refinement", key, "", report["pair_refinement"][key]])
        return json_path, csv_path




# ---------------------------------------------------------------------------
# Manifest validation


def validate_manifest(manifest_path: str | Path, vocab_path: str | Path) -> list[dict]:
    """Structural diagnostics; an empty list means the manifest is admissible."""
    diagnostics: list[dict] = []
    vocab = load_vocabulary(vocab_path)
    base = Path(manifest_path).parent
    seen_ids = set()
    for line_no, line in enumerate(Path(manifest_path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            diagnostics.append({"line": line_no, "kind": "BadJson", "detail": str(exc)})
            continue
        iid = str(rec.get("id", f"line{line_no}"))
        if iid in seen_ids:
            diagnostics.append({"image_id": iid, "kind": "DuplicateImageId", "detail": iid})
        seen_ids.add(iid)
        width, height = rec.get("width", 0), rec.get("height", 0)
        if width <= 0 or height <= 0:
            diagnostics.append({"image_id": iid, "kind": "BadDimensions", "detail": f"{width}x{height}"})
            continue
        image = ImageRef(id=iid, path=str(base / rec.get("path", "")), width=width, height=height)
        objects = rec.get("objects", [])
        for obj_idx, obj in enumerate(objects):
            label = normalize_label(obj.get("label", ""))
            if label not in vocab.object_index:
                diagnostics.append(
                    {"image_id": iid, "kind": "UnknownLabel", "detail": f"object {obj_idx}: {obj.get('label')!r}"}
                )
            try:
                clamp_box(obj.get("box", [0, 0, 0, 0]), image)
            except DegenerateBox:
                diagnostics.append(
                    {"image_id": iid, "kind": "DegenerateBox", "detail": f"object {obj_idx}: {obj.get('box')}"}
                )
        n = len(objects)
        for rel_idx, rel in enumerate(rec.get("relations", [])):
            s, o = rel.get("s", -1), rel.get("o", -1)
            if not (0 <= s < n and 0 <= o < n):
                diagnostics.append(
                    {"image_id": iid, "kind": "IndexOutOfRange", "detail": f"relation {rel_idx}: s={s} o={o} of {n}"}
                )
            elif s == o:
                diagnostics.append(
                    {"image_id": iid, "kind": "SelfRelation", "detail": f"relation {rel_idx}"}
                )
            p = normalize_label(rel.get("p", ""))
            if p not in vocab.relation_index:
                diagnostics.append(
                    {"image_id": iid, "kind": "UnknownLabel", "detail": f"relation {rel_idx}: {rel.get('p')!r}"}
                )
    return diagnostics
