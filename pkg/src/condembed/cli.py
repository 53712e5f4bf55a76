"""Command-line entry point.

One subcommand per pipeline stage (vocab, cooc, train, export, eval, synth,
pipeline) plus the query tools (query nn | stable | traj), a service launcher
(serve), and thin-client query mode against a running service (--server).
Stages communicate through files so expensive intermediates can be reused.

Exit status: 0 on success, 2 for bad flags (argparse), 1 with a one-line
``error: ...`` on stderr for I/O and validation failures.  The only
environment variable honored is CONDEMBED_LOG_LEVEL.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .cooc import (DEFAULT_WINDOW, count_cooccurrences, export_tsv,
                   load_shards, save_shard, scale_counts)
from .corpus import (ConditionManifest, Vocabulary, build_vocabulary,
                     read_condition_corpus)
from .evaluation import evaluate, load_eval_set
from .exceptions import CondembedError
from .model import EmbeddingModel, export_text
from .pipeline import PipelineConfig, resolve_preset, run_pipeline
from .query import QueryEngine
from .synth import DriftSpec, generate, write_corpus
from .trainer import TrainConfig, train

logger = logging.getLogger(__name__)

_TRAIN_FLAGS = ("alpha", "beta", "epochs", "dim", "initial_lr", "seed",
                "workers", "topology_override")


def _manifest_path(args) -> Path:
    if args.manifest is not None:
        return Path(args.manifest)
    return Path(args.corpus) / "manifest.json"


def _cmd_vocab(args) -> int:
    manifest = ConditionManifest.load_json(_manifest_path(args))
    streams = read_condition_corpus(args.corpus, manifest)
    vocab = build_vocabulary(streams, args.min_count)
    vocab.save_tsv(args.out)
    logger.info("wrote %d words to %s", len(vocab), args.out)
    return 0


def _cmd_cooc(args) -> int:
    manifest = ConditionManifest.load_json(_manifest_path(args))
    vocab = Vocabulary.load_tsv(args.vocab)
    streams = read_condition_corpus(args.corpus, manifest)
    tensor = count_cooccurrences(streams, vocab, args.window)
    save_shard(tensor, args.out)
    if args.tsv is not None:
        export_tsv(tensor, args.tsv)
    logger.info("wrote %d entries to %s", tensor.nnz, args.out)
    return 0


def _train_config(args) -> TrainConfig:
    """Start from --config if given, then apply explicitly set flags."""
    if args.config is not None:
        base = TrainConfig.from_json(args.config)
    else:
        base = TrainConfig()
    overrides = {name: getattr(args, name) for name in _TRAIN_FLAGS
                 if getattr(args, name) is not None}
    if not overrides:
        return base
    merged = {name: getattr(base, name) for name in _TRAIN_FLAGS}
    merged.update(overrides)
    merged["scale_deviation_reg"] = base.scale_deviation_reg
    return TrainConfig(**merged)


def _cmd_train(args) -> int:
    config = _train_config(args)
    manifest = ConditionManifest.load_json(args.manifest)
    vocab = Vocabulary.load_tsv(args.vocab)
    tensor = scale_counts(load_shards(args.cooc))
    result = train(tensor, vocab, manifest, config)
    if config.topology_override is not None:
        manifest = manifest.with_topology(config.topology_override)
    model = EmbeddingModel(result.params, vocab, manifest)
    model.save(args.out)
    logger.info("wrote model to %s (final loss %.6f)",
                args.out, result.epoch_losses[-1] if result.epoch_losses else float("nan"))
    return 0


def _cmd_export(args) -> int:
    model = EmbeddingModel.load(args.model)
    export_text(model, args.out, side=args.side)
    return 0


def _post(server: str, path: str, payload: dict) -> dict:
    import httpx

    url = server.rstrip("/") + path
    try:
        response = httpx.post(url, json=payload, timeout=60.0)
    except httpx.HTTPError as e:
        raise CondembedError(f"request to {url} failed: {e}") from e
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise CondembedError(f"server returned {response.status_code}: {detail}")
    return response.json()


def _print_ranked(rows) -> None:
    for rank, (word, score) in enumerate(rows, start=1):
        print(f"{rank}\t{word}\t{score:.6f}")


def _local_engine(args) -> QueryEngine:
    if args.model is None:
        raise ValueError("either --model or --server is required")
    return QueryEngine(EmbeddingModel.load(args.model), side=args.side)


def _cmd_query_nn(args) -> int:
    if args.server is not None:
        payload = {"word": args.word, "src_condition": args.src,
                   "tgt_condition": args.tgt, "k": args.k,
                   "include_self": not args.exclude_self, "side": args.side}
        body = _post(args.server, "/neighbors", payload)
        rows = [(n["word"], n["score"]) for n in body["neighbors"]]
    else:
        result = _local_engine(args).nearest_neighbors(
            args.word, args.src, args.tgt, args.k, not args.exclude_self)
        rows = result.neighbors
    _print_ranked(rows)
    return 0


def _cmd_query_stable(args) -> int:
    if args.server is not None:
        payload = {"top_n": args.top, "side": args.side}
        body = _post(args.server, "/stability", payload)
        rows = [(r["word"], r["score"]) for r in body["ranked"]]
        skipped = body["skipped"]
    else:
        ranking = _local_engine(args).stability_ranking(args.top)
        rows, skipped = ranking.ranked, ranking.skipped
    _print_ranked(rows)
    if skipped:
        print(f"skipped {len(skipped)} zero-norm words: "
              f"{', '.join(skipped)}", file=sys.stderr)
    return 0


def _cmd_query_traj(args) -> int:
    conditions = args.conditions.split(",") if args.conditions else None
    if args.server is not None:
        payload = {"word": args.word, "conditions": conditions,
                   "neighbors_per_condition": args.neighbors, "side": args.side}
        export = _post(args.server, "/trajectory", payload)
    else:
        export = _local_engine(args).trajectory(args.word, conditions,
                                                args.neighbors)
    text = json.dumps(export, indent=2)
    if args.out is not None:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _cmd_eval(args) -> int:
    source = args.model if args.model is not None else args.embeddings
    if args.model is not None:
        source = EmbeddingModel.load(args.model)
    eval_set = load_eval_set(args.set)
    report = evaluate(source, eval_set, oov_policy=args.oov_policy,
                      include_self=not args.exclude_self)
    if args.out is not None:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    if args.table:
        print(report.format_table())
    else:
        print(report.to_json())
    return 0


def _cmd_synth(args) -> int:
    spec = DriftSpec.from_json(args.spec)
    corpus = generate(spec)
    write_corpus(corpus, args.out)
    logger.info("wrote %d conditions to %s", len(corpus.streams), args.out)
    return 0


def _cmd_pipeline(args) -> int:
    if args.config is not None:
        config = PipelineConfig.from_json(args.config, preset=args.preset)
    else:
        merged = dict(resolve_preset(args.preset)) if args.preset else {}
        for name in ("min_count", "window", *_TRAIN_FLAGS):
            value = getattr(args, name)
            if value is not None:
                merged[name] = value
        config = PipelineConfig(corpus_dir=args.corpus, out_dir=args.out,
                                manifest_path=args.manifest,
                                eval_sets=args.eval_set, **merged)
    result = run_pipeline(config)
    for report in result.reports:
        print(report.format_table())
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    app = create_app(model_path=args.model)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", type=int, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None, dest="initial_lr")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None,
                        help="1 = deterministic; >1 = lossy-parallel")
    parser.add_argument("--topology", choices=["chain", "complete"],
                        default=None, dest="topology_override",
                        help="override the manifest's topology")


def _add_query_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", help="model file (omit with --server)")
    parser.add_argument("--side", choices=["word", "context", "both"],
                        default="word")
    parser.add_argument("--server", default=None,
                        help="query a running service at this base URL")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condembed",
        description="Condition-specific word embeddings: train and query "
                    "per-condition vectors from condition-stamped corpora.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", help="build the vocabulary from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", default=None,
                   help="default: <corpus>/manifest.json")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("cooc", help="count co-occurrences into a shard file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--vocab", required=True)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--out", required=True)
    p.add_argument("--tsv", default=None, help="also write a TSV debug export")
    p.set_defaults(func=_cmd_cooc)

    p = sub.add_parser("train", help="train a model from counted shards")
    p.add_argument("--cooc", required=True,
                   help="shard file, or a directory of *.bin shards to merge")
    p.add_argument("--vocab", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON training config")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("export", help="write embeddings in the text format")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--side", choices=["word", "context", "both"], default="word")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("query", help="query a trained model")
    qsub = p.add_subparsers(dest="query_command", required=True)

    q = qsub.add_parser("nn", help="nearest neighbors across conditions")
    _add_query_common(q)
    q.add_argument("--word", required=True)
    q.add_argument("--src", required=True, help="source condition id")
    q.add_argument("--tgt", required=True, help="target condition id")
    q.add_argument("--k", type=int, default=10)
    q.add_argument("--exclude-self", action="store_true")
    q.set_defaults(func=_cmd_query_nn)

    q = qsub.add_parser("stable", help="rank words by cross-condition stability")
    _add_query_common(q)
    q.add_argument("--top", type=int, default=None)
    q.set_defaults(func=_cmd_query_stable)

    q = qsub.add_parser("traj", help="export a word's trajectory as JSON")
    _add_query_common(q)
    q.add_argument("--word", required=True)
    q.add_argument("--neighbors", type=int, default=8)
    q.add_argument("--conditions", default=None,
                   help="comma-separated subset, in order")
    q.add_argument("--out", default=None, help="default: stdout")
    q.set_defaults(func=_cmd_query_traj)

    p = sub.add_parser("eval", help="score a model on an equivalence test set")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--embeddings", help="text-export embedding file")
    p.add_argument("--set", required=True, help="test-set TSV")
    p.add_argument("--oov-policy", choices=["skip", "zero"], default="skip")
    p.add_argument("--exclude-self", action="store_true")
    p.add_argument("--table", action="store_true",
                   help="print the table instead of JSON")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a planted-drift corpus")
    p.add_argument("--spec", required=True, help="drift-spec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="run corpus -> model -> report end to end")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=["news", "regional"], default=None)
    p.add_argument("--config", default=None, help="JSON pipeline config")
    p.add_argument("--eval-set", action="append", default=[],
                   help="test-set TSV; repeatable")
    p.add_argument("--min-count", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("serve", help="serve query endpoints over HTTP")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("CONDEMBED_LOG_LEVEL", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CondembedError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
