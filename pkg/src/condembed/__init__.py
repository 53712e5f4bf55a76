"""Condition-specific word embeddings.

Learns one vector per word per condition (time bin or region) by factorizing
per-condition co-occurrence counts, where each conditioned vector is the
word's basic embedding modulated elementwise by a condition vector plus a
per-word deviation.  The package covers the full pipeline: corpus reading,
co-occurrence counting and scaling, training, nearest-neighbor and stability
queries, and evaluation on cross-condition equivalence test sets.
"""

from .cooc import CoocTensor, count_cooccurrences, load_shard, save_shard, scale_counts
from .corpus import ConditionManifest, Vocabulary, build_vocabulary, read_condition_corpus
from .evaluation import (EvalReport, EvalSet, evaluate, load_eval_set,
                         precision_at_k, reciprocal_rank)
from .exceptions import (CondembedError, CorpusError, FormatError, OovError,
                         TrainingDivergedError)
from .model import EmbeddingModel, ModelParams, compose_embedding, export_text, init_params
from .pipeline import PipelineConfig, run_pipeline
from .query import (NeighborResult, QueryEngine, StabilityRanking,
                    nearest_neighbors, stability_ranking, trajectory_export)
from .synth import DriftSpec, GoldFacts, generate
from .trainer import TrainConfig, TrainResult, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "CondembedError", "CorpusError", "FormatError", "OovError",
    "TrainingDivergedError",
    "ConditionManifest", "Vocabulary", "build_vocabulary", "read_condition_corpus",
    "CoocTensor", "count_cooccurrences", "scale_counts", "save_shard", "load_shard",
    "ModelParams", "EmbeddingModel", "init_params", "compose_embedding", "export_text",
    "TrainConfig", "TrainResult", "train", "total_loss",
    "QueryEngine", "NeighborResult", "StabilityRanking",
    "nearest_neighbors", "stability_ranking", "trajectory_export",
    "EvalSet", "EvalReport", "evaluate", "load_eval_set",
    "reciprocal_rank", "precision_at_k",
    "DriftSpec", "GoldFacts", "generate",
    "PipelineConfig", "run_pipeline",
    "__version__",
]
