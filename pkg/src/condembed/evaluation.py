"""Scoring on cross-condition semantic-equivalence test sets.

A test set is a list of records (query_word, query_condition,
target_condition, gold_word): the query word's centered embedding in the
query condition is matched against every vocabulary word's centered embedding
in the target condition, and the gold word's rank determines the score.
Reported metrics are mean reciprocal rank (with a top-10 cutoff: gold ranked
below 10 contributes 0) and mean precision at K for K in {1, 3, 5, 10}.

The same harness scores either a trained model or a text-export embedding
file, so external baselines can be evaluated under the identical protocol.
Text-file vectors are centered per condition before use; centering already
centered vectors is a no-op, so exporting a model and re-scoring the file
reproduces the model's own report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import FormatError, OovError
from .model import EmbeddingModel
from .query import QueryEngine, rank_by_cosine

MRR_CUTOFF = 10
DEFAULT_KS = (1, 3, 5, 10)
EVAL_SET_HEADER = ("query_word", "query_condition", "target_condition", "gold_word")
OOV_POLICIES = ("skip", "zero")


@dataclass(frozen=True)
class EvalRecord:
    """One equivalence judgment: query in one condition, gold in another."""

    query_word: str
    query_condition: str
    target_condition: str
    gold_word: str


@dataclass
class EvalSet:
    """A named list of equivalence records."""

    records: list[EvalRecord]
    name: str = "eval"

    def __len__(self) -> int:
        return len(self.records)


def load_eval_set(path: str | Path, name: str | None = None) -> EvalSet:
    """Read a test set from TSV.

    The first non-comment line must be the exact header
    ``query_word<TAB>query_condition<TAB>target_condition<TAB>gold_word``.
    Lines starting with ``#`` and blank lines are ignored.
    """
    path = Path(path)
    records: list[EvalRecord] = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if not header_seen:
                if tuple(fields) != EVAL_SET_HEADER:
                    raise FormatError(
                        f"{path}:{lineno}: expected header "
                        f"{chr(9).join(EVAL_SET_HEADER)!r}, got {line!r}")
                header_seen = True
                continue
            if len(fields) != 4:
                raise FormatError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, "
                    f"got {len(fields)}")
            records.append(EvalRecord(*fields))
    if not header_seen:
        raise FormatError(f"{path}: missing header line")
    return EvalSet(records, name if name is not None else path.stem)


def reciprocal_rank(rank: int | None, cutoff: int = MRR_CUTOFF) -> float:
    """1/rank if the gold word ranked within the cutoff, else 0."""
    if rank is None:
        return 0.0
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    return 1.0 / rank if rank <= cutoff else 0.0


def precision_at_k(rank: int | None, k: int) -> int:
    """1 if the gold word ranked within the top k, else 0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if rank is None:
        return 0
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    return 1 if rank <= k else 0


class TextEmbeddings:
    """Per-condition embeddings parsed from the text interop format.

    Each line is ``word<TAB>condition<TAB>x1 x2 ... xm``.  Words and
    conditions keep first-appearance order.  Pairs absent from the file stay
    zero-norm and are excluded from candidate rankings.
    """

    def __init__(self, words: list[str], conditions: list[str],
                 matrices: np.ndarray, present: np.ndarray):
        self.words = words
        self.conditions = conditions
        self.id_of = {w: i for i, w in enumerate(words)}
        self._cond_index = {c: i for i, c in enumerate(conditions)}
        # matrices: (C, n, m) centered per condition over present rows only.
        self._matrices = matrices
        self._present = present
        self._norms = np.linalg.norm(matrices, axis=2)

    @property
    def dim(self) -> int:
        return self._matrices.shape[2]

    def word_id(self, word: str) -> int:
        wid = self.id_of.get(word)
        if wid is None:
            raise OovError(word)
        return wid

    def condition_index(self, condition: str) -> int:
        idx = self._cond_index.get(condition)
        if idx is None:
            raise ValueError(
                f"unknown condition {condition!r} (have: "
                f"{', '.join(self.conditions)})")
        return idx

    def centered(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        return self._matrices[c], self._norms[c]


def load_text_embeddings(path: str | Path) -> TextEmbeddings:
    """Parse the text interop format and center each condition's vectors."""
    path = Path(path)
    words: list[str] = []
    conditions: list[str] = []
    word_ids: dict[str, int] = {}
    cond_ids: dict[str, int] = {}
    rows: dict[tuple[int, int], np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(
                    f"{path}:{lineno}: expected word<TAB>condition<TAB>values")
            word, cond, values = fields
            try:
                vec = np.array([float(v) for v in values.split()], dtype=np.float64)
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: bad vector value ({e})") from e
            if dim is None:
                if vec.size == 0:
                    raise FormatError(f"{path}:{lineno}: empty vector")
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(
                    f"{path}:{lineno}: vector has {vec.size} values, "
                    f"expected {dim}")
            wid = word_ids.setdefault(word, len(words))
            if wid == len(words):
                words.append(word)
            cid = cond_ids.setdefault(cond, len(conditions))
            if cid == len(conditions):
                conditions.append(cond)
            if (wid, cid) in rows:
                raise FormatError(
                    f"{path}:{lineno}: duplicate entry for "
                    f"({word!r}, {cond!r})")
            rows[(wid, cid)] = vec
    if not rows:
        raise FormatError(f"{path}: no embedding rows")
    n, C = len(words), len(conditions)
    matrices = np.zeros((C, n, dim))
    present = np.zeros((n, C), dtype=bool)
    for (wid, cid), vec in rows.items():
        matrices[cid, wid] = vec
        present[wid, cid] = True
    # Center over the rows actually present; absent rows stay exactly zero.
    for cid in range(C):
        mask = present[:, cid]
        if mask.any():
            mean = matrices[cid, mask].mean(axis=0)
            matrices[cid, mask] -= mean
    return TextEmbeddings(words, conditions, matrices, present)


@dataclass
class EvalReport:
    """Aggregated metrics over the scored records of one test set."""

    name: str
    mrr: float
    mp_at: dict[int, float]
    n_scored: int
    n_skipped: int
    include_self: bool = True

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "mrr": self.mrr,
            "mp_at": {str(k): v for k, v in sorted(self.mp_at.items())},
            "n_scored": self.n_scored,
            "n_skipped": self.n_skipped,
            "include_self": self.include_self,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def format_table(self) -> str:
        ks = sorted(self.mp_at)
        header = ["set", "n", "MRR"] + [f"MP@{k}" for k in ks]
        row = [self.name, str(self.n_scored), f"{self.mrr:.4f}"]
        row += [f"{self.mp_at[k]:.4f}" for k in ks]
        widths = [max(len(h), len(r)) for h, r in zip(header, row)]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(header, widths)),
            "  ".join(r.ljust(w) for r, w in zip(row, widths)),
        ]
        return "\n".join(lines)


def _as_source(source):
    if isinstance(source, EmbeddingModel):
        return QueryEngine(source)
    if isinstance(source, (str, Path)):
        return load_text_embeddings(source)
    return source


def gold_rank(source, record: EvalRecord, include_self: bool = True) -> int | None:
    """Rank of the gold word in the target-condition candidate list.

    None when the gold word carries no rankable vector in the target
    condition.  Raises OovError for out-of-vocabulary words, ValueError for
    unknown conditions or a zero-norm query vector.
    """
    src = source.condition_index(record.query_condition)
    tgt = source.condition_index(record.target_condition)
    qid = source.word_id(record.query_word)
    gid = source.word_id(record.gold_word)
    matrix, norms = source.centered(src)
    query_vec = matrix[qid]
    tgt_matrix, tgt_norms = source.centered(tgt)
    order, _ = rank_by_cosine(tgt_matrix, tgt_norms, query_vec)
    if not include_self:
        order = order[order != qid]
    hits = np.nonzero(order == gid)[0]
    if hits.size == 0:
        return None
    return int(hits[0]) + 1


def evaluate(source, eval_set: EvalSet, ks: tuple[int, ...] = DEFAULT_KS,
             oov_policy: str = "skip", include_self: bool = True) -> EvalReport:
    """Score every record and average the metrics.

    ``source`` is a trained model, a query engine, a TextEmbeddings instance,
    or a path to a text-export file.  ``oov_policy`` controls records whose
    query or gold word is missing (or whose query vector is zero-norm):
    "skip" drops and counts them, "zero" scores them as complete misses.
    """
    if oov_policy not in OOV_POLICIES:
        raise ValueError(f"oov_policy must be one of {OOV_POLICIES}, "
                         f"got {oov_policy!r}")
    if not eval_set.records:
        raise ValueError(f"test set {eval_set.name!r} has no records")
    src = _as_source(source)
    rr_sum = 0.0
    hit_sums = {k: 0 for k in ks}
    n_scored = 0
    n_skipped = 0
    for record in eval_set.records:
        try:
            rank = gold_rank(src, record, include_self)
        except OovError:
            rank = None
            unrankable = True
        except ValueError as e:
            if "zero norm" not in str(e):
                raise
            rank = None
            unrankable = True
        else:
            unrankable = False
        if unrankable:
            if oov_policy == "skip":
                n_skipped += 1
                continue
            rank = None
        rr_sum += reciprocal_rank(rank)
        for k in ks:
            hit_sums[k] += precision_at_k(rank, k)
        n_scored += 1
    if n_scored == 0:
        raise ValueError(
            f"test set {eval_set.name!r} has no scorable records "
            f"({n_skipped} skipped)")
    return EvalReport(
        name=eval_set.name,
        mrr=rr_sum / n_scored,
        mp_at={k: hit_sums[k] / n_scored for k in ks},
        n_scored=n_scored,
        n_skipped=n_skipped,
        include_self=include_self,
    )
