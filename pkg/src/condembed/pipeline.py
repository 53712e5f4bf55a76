"""End-to-end pipeline: corpus to vocabulary, counts, model, and reports.

Stages are written to disk as they complete (vocabulary TSV, co-occurrence
shard, binary model with sidecars, text-export embeddings, one JSON report
per test set) so any stage's output can be reused across hyperparameter
sweeps.  Two presets bundle the published settings: "news" for yearly-binned
temporal corpora (frequency threshold 200, chain topology defaults) and
"regional" for region-stamped corpora (threshold 5, complete topology
defaults).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .cooc import DEFAULT_WINDOW, count_cooccurrences, save_shard, scale_counts
from .corpus import ConditionManifest, build_vocabulary, read_condition_corpus
from .evaluation import EvalReport, evaluate, load_eval_set
from .exceptions import FormatError
from .model import EmbeddingModel, export_text
from .trainer import (DEFAULT_BETA, DEFAULT_DIM, DEFAULT_EPOCHS, DEFAULT_LR,
                      TrainConfig, train)

logger = logging.getLogger(__name__)

PRESETS: dict[str, dict] = {
    # Yearly-binned news text: aggressive frequency threshold.
    "news": {"min_count": 200, "window": DEFAULT_WINDOW, "dim": DEFAULT_DIM,
             "beta": DEFAULT_BETA, "epochs": DEFAULT_EPOCHS},
    # Region-stamped corpora are much smaller: permissive threshold.
    "regional": {"min_count": 5, "window": DEFAULT_WINDOW, "dim": DEFAULT_DIM,
                 "beta": DEFAULT_BETA, "epochs": DEFAULT_EPOCHS},
}


@dataclass
class PipelineConfig:
    """Union of all stage settings plus input/output paths.

    ``alpha=None`` defers to the per-topology default, so a preset needs to
    pin only the frequency threshold; the manifest's topology selects the
    matching consistency weight.
    """

    corpus_dir: str
    out_dir: str
    manifest_path: str | None = None
    eval_sets: list[str] = field(default_factory=list)
    min_count: int = 1
    window: int = DEFAULT_WINDOW
    dim: int = DEFAULT_DIM
    alpha: float | None = None
    beta: float = DEFAULT_BETA
    epochs: int = DEFAULT_EPOCHS
    initial_lr: float = DEFAULT_LR
    seed: int = 0
    workers: int = 1
    topology_override: str | None = None
    oov_policy: str = "skip"
    include_self: bool = True

    @classmethod
    def from_json(cls, path: str | Path, preset: str | None = None) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"pipeline config {path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise FormatError(f"pipeline config {path}: expected a JSON object")
        preset = raw.pop("preset", preset)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise FormatError(
                f"pipeline config {path}: unknown keys {sorted(unknown)}")
        merged = dict(resolve_preset(preset)) if preset else {}
        merged.update(raw)
        try:
            return cls(**merged)
        except (TypeError, ValueError) as e:
            raise FormatError(f"pipeline config {path}: {e}") from e

    def apply_preset(self, preset: str) -> "PipelineConfig":
        """Settings from the preset, keeping this config's paths and seed."""
        return replace(self, **resolve_preset(preset))


def resolve_preset(preset: str) -> dict:
    if preset not in PRESETS:
        raise ValueError(
            f"unknown preset {preset!r} (have: {', '.join(sorted(PRESETS))})")
    return PRESETS[preset]


@dataclass
class PipelineResult:
    """Artifact paths and in-memory handles from one pipeline run."""

    vocab_path: Path
    cooc_path: Path
    model_path: Path
    embeddings_path: Path
    report_paths: list[Path]
    reports: list[EvalReport]
    epoch_losses: list[float]
    model: EmbeddingModel


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run vocabulary, counting, scaling, training, export, and evaluation.

    Deterministic for ``workers=1``: identical inputs and seed give
    byte-identical artifacts.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = (Path(config.manifest_path) if config.manifest_path
                     else Path(config.corpus_dir) / "manifest.json")
    manifest = ConditionManifest.load_json(manifest_path)
    if config.topology_override is not None:
        manifest = manifest.with_topology(config.topology_override)

    logger.info("building vocabulary (min_count=%d)", config.min_count)
    streams = read_condition_corpus(config.corpus_dir, manifest)
    vocab = build_vocabulary(streams, config.min_count)
    vocab_path = out / "vocab.tsv"
    vocab.save_tsv(vocab_path)
    logger.info("vocabulary: %d words", len(vocab))

    logger.info("counting co-occurrences (window=%d)", config.window)
    streams = read_condition_corpus(config.corpus_dir, manifest)
    raw = count_cooccurrences(streams, vocab, config.window)
    cooc_path = out / "cooc.bin"
    save_shard(raw, cooc_path)
    scaled = scale_counts(raw)
    logger.info("co-occurrence tensor: %d nonzero entries", scaled.nnz)

    train_config = TrainConfig(
        alpha=config.alpha, beta=config.beta, epochs=config.epochs,
        dim=config.dim, initial_lr=config.initial_lr, seed=config.seed,
        workers=config.workers)
    result = train(scaled, vocab, manifest, train_config)
    (out / "epochs.tsv").write_text(
        "".join(f"{e + 1}\t{loss!r}\t{sec:.3f}\n"
                for e, (loss, sec) in enumerate(
                    zip(result.epoch_losses, result.epoch_seconds))),
        encoding="utf-8")

    model = EmbeddingModel(result.params, vocab, manifest)
    model_path = out / "model.bin"
    model.save(model_path)
    embeddings_path = out / "embeddings.tsv"
    export_text(model, embeddings_path)

    report_paths: list[Path] = []
    reports: list[EvalReport] = []
    for set_path in config.eval_sets:
        eval_set = load_eval_set(set_path)
        report = evaluate(model, eval_set, oov_policy=config.oov_policy,
                          include_self=config.include_self)
        report_path = out / f"report_{eval_set.name}.json"
        report_path.write_text(report.to_json() + "\n", encoding="utf-8")
        logger.info("scored %s:\n%s", eval_set.name, report.format_table())
        report_paths.append(report_path)
        reports.append(report)

    return PipelineResult(
        vocab_path=vocab_path,
        cooc_path=cooc_path,
        model_path=model_path,
        embeddings_path=embeddings_path,
        report_paths=report_paths,
        reports=reports,
        epoch_losses=result.epoch_losses,
        model=model,
    )
