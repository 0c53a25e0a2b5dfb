"""Command-line front end.

    owsgg run <stage> --manifest M --vocab V --config C --cache DIR
              [--task predcls|sgdet] [--backend live|replay] [--splits S]
    owsgg validate --manifest M --vocab V
    owsgg split --manifest M --vocab V --out S.json
              [--novel-objects FILE] [--novel-relations FILE]
    owsgg report --cache DIR [--splits S] [--ks 20,50,100]

Live endpoints come from environment variables: OWSGG_CHAT_URL,
OWSGG_CHAT_API_KEY, OWSGG_EMBED_URL, OWSGG_SHIM_URL, OWSGG_HTTP_TIMEOUT.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import PipelineConfig
from .core import apply_novelty_lists, load_manifest, load_novelty_list, load_vocabulary
from .errors import OwsggError
from .runner import ALL_STAGES, Runner, validate_manifest
from .taxonomy import partition


def _load_config(path: str | None, task: str | None) -> PipelineConfig:
    config = PipelineConfig.load(path) if path else PipelineConfig()
    if task and task != config.task:
        config = dataclasses.replace(config, task=task)
    return config


def _load_splits(path: str | None) -> dict | None:
    if not path:
        return None
    doc = json.loads(Path(path).read_text())
    return doc["split"] if "split" in doc else doc


def _emit_error(record: dict, cache_dir: str | None = None) -> None:
    line = json.dumps(record, sort_keys=True)
    print(line, file=sys.stderr)
    if cache_dir:
        with (Path(cache_dir) / "errors.jsonl").open("a") as fh:
            fh.write(line + "\n")


def cmd_run(args) -> int:
    config = _load_config(args.config, args.task)
    try:
        runner = Runner(
            manifest_path=args.manifest,
            vocab_path=args.vocab,
            config=config,
            cache_dir=args.cache,
            mode=args.backend,
        )
    except OwsggError as exc:
        _emit_error({"stage": "setup", "error": type(exc).__name__, "message": str(exc)})
        return 2

    status = 0
    try:
        if args.stage == "all":
            outcomes = runner.run_all()
        elif args.stage == "eval":
            outcomes = []
        else:
            outcomes = [runner.run_stage(args.stage)]
    except OwsggError as exc:
        _emit_error({"stage": args.stage, "error": type(exc).__name__, "message": str(exc)}, args.cache)
        return 2

    for outcome in outcomes:
        print(f"{outcome.stage}: {outcome.processed} processed, {outcome.cached} cached, {len(outcome.failed)} failed")
        for image_id, message in sorted(outcome.failed.items()):
            _emit_error({"stage": outcome.stage, "image_id": image_id, "message": message}, args.cache)
            status = 1

    if args.stage in ("all", "eval"):
        try:
            report = runner.evaluate(split_index=_load_splits(args.splits), ks=_parse_ks(args.ks))
            json_path, csv_path = runner.write_report(report)
            print(f"report: {json_path} {csv_path}")
        except OwsggError as exc:
            _emit_error({"stage": "eval", "error": type(exc).__name__, "message": str(exc)}, args.cache)
            return 2
    return status


def cmd_validate(args) -> int:
    diagnostics = validate_manifest(args.manifest, args.vocab)
    for diag in diagnostics:
        print(json.dumps(diag, sort_keys=True))
    print(f"{len(diagnostics)} diagnostics")
    return 0 if not diagnostics else 1


def cmd_split(args) -> int:
    vocab = load_vocabulary(args.vocab)
    if args.novel_objects or args.novel_relations:
        vocab = apply_novelty_lists(
            vocab,
            novel_objects=load_novelty_list(args.novel_objects) if args.novel_objects else frozenset(),
            novel_relations=load_novelty_list(args.novel_relations) if args.novel_relations else frozenset(),
        )
    graphs = load_manifest(args.manifest)
    splits = partition(graphs, vocab)
    Path(args.out).write_text(json.dumps({"split": splits}, sort_keys=True) + "\n")
    sizes = {name: len(keys) for name, keys in sorted(splits.items())}
    print(f"wrote {args.out}: {sizes}")
    return 0


def cmd_report(args) -> int:
    meta_path = Path(args.cache) / "run_meta.json"
    if not meta_path.exists():
        _emit_error({"stage": "report", "error": "MissingRunMeta", "message": str(meta_path)})
        return 2
    meta = json.loads(meta_path.read_text())
    config = PipelineConfig.from_dict(meta["config"])
    try:
        runner = Runner(
            manifest_path=meta["manifest"],
            vocab_path=meta["vocab"],
            config=config,
            cache_dir=args.cache,
            mode="replay",
        )
        report = runner.evaluate(split_index=_load_splits(args.splits), ks=_parse_ks(args.ks))
        json_path, csv_path = runner.write_report(report)
    except OwsggError as exc:
        _emit_error({"stage": "report", "error": type(exc).__name__, "message": str(exc)}, args.cache)
        return 2
    print(f"report: {json_path} {csv_path}")
    return 0


def _parse_ks(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owsgg", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a pipeline stage (or 'all') over a manifest")
    run.add_argument("stage", choices=ALL_STAGES + ("all",))
    run.add_argument("--manifest", required=True)
    run.add_argument("--vocab", required=True)
    run.add_argument("--config", default=None)
    run.add_argument("--cache", required=True)
    run.add_argument("--task", choices=("predcls", "sgdet"), default=None)
    run.add_argument("--backend", choices=("live", "replay"), default="replay")
    run.add_argument("--splits", default=None)
    run.add_argument("--ks", default="20,50,100")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="structural manifest diagnostics")
    val.add_argument("--manifest", required=True)
    val.add_argument("--vocab", required=True)
    val.set_defaults(func=cmd_validate)

    spl = sub.add_parser("split", help="classify GT triplets into open-world splits")
    spl.add_argument("--manifest", required=True)
    spl.add_argument("--vocab", required=True)
    spl.add_argument("--out", required=True)
    spl.add_argument("--novel-objects", default=None)
    spl.add_argument("--novel-relations", default=None)
    spl.set_defaults(func=cmd_split)

    rep = sub.add_parser("report", help="emit evaluation report from a warm cache")
    rep.add_argument("--cache", required=True)
    rep.add_argument("--splits", default=None)
    rep.add_argument("--ks", default="20,50,100")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
