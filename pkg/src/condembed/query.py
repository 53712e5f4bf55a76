"""Nearest-neighbor search, stability ranking, and trajectory export.

All queries operate on centered embeddings: within each condition the mean
embedding vector is subtracted before any cosine is taken, which removes the
shared offset that would otherwise dominate cross-condition similarities.
Search is brute force over the vocabulary; per-condition centered matrices
are computed once and cached, after which the engine is read-only and safe
for concurrent use.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import OovError
from .model import EmbeddingModel, center_embeddings

DEFAULT_K = 10


def rank_by_cosine(matrix: np.ndarray, norms: np.ndarray,
                   query_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rank candidate rows by cosine against a query vector.

    Returns (row indices, scores) sorted by descending score with ties broken
    by ascending row index.  Zero-norm rows cannot carry a cosine and are
    omitted.  Raises ValueError for a zero-norm query.
    """
    qn = float(np.linalg.norm(query_vec))
    if qn == 0.0:
        raise ValueError("query vector has zero norm")
    valid = norms > 0.0
    scores = np.full(matrix.shape[0], -np.inf)
    scores[valid] = (matrix[valid] @ query_vec) / (norms[valid] * qn)
    order = np.argsort(-scores, kind="stable")
    order = order[valid[order]]
    return order, np.clip(scores[order], -1.0, 1.0)


@dataclass
class NeighborResult:
    """Top-k neighbors of one word's embedding in a target condition."""

    word: str
    src_condition: str
    tgt_condition: str
    neighbors: list[tuple[str, float]]
    include_self: bool = True

    def words(self) -> list[str]:
        return [w for w, _ in self.neighbors]


@dataclass
class StabilityRanking:
    """Words ranked by mean cross-condition self-similarity."""

    ranked: list[tuple[str, float]]
    skipped: list[str] = field(default_factory=list)
    n_pairs: int = 0

    def words(self) -> list[str]:
        return [w for w, _ in self.ranked]


class QueryEngine:
    """Cached query surface over a frozen model.

    Centered matrices and their row norms are built lazily per condition and
    never mutated afterwards.
    """

    def __init__(self, model: EmbeddingModel, side: str = "word"):
        self.model = model
        self.side = side
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def vocab(self):
        return self.model.vocab

    @property
    def manifest(self):
        return self.model.manifest

    def condition_index(self, condition: str) -> int:
        try:
            return self.manifest.index_of(condition)
        except KeyError:
            raise ValueError(
                f"unknown condition {condition!r} (have: "
                f"{', '.join(self.manifest.conditions)})") from None

    def word_id(self, word: str) -> int:
        wid = self.vocab.id_of.get(word)
        if wid is None:
            raise OovError(word, self.vocab.suggest(word))
        return wid

    def centered(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        """Centered embedding matrix and row norms for one condition index."""
        cached = self._cache.get(c)
        if cached is None:
            matrix = center_embeddings(self.model.params, c, self.side)
            cached = (matrix, np.linalg.norm(matrix, axis=1))
            self._cache[c] = cached
        return cached

    def vector(self, word: str, condition: str) -> np.ndarray:
        """Centered embedding of one word in one condition."""
        return self.centered(self.condition_index(condition))[0][self.word_id(word)]

    def nearest_neighbors(self, word: str, src_condition: str, tgt_condition: str,
                          k: int = DEFAULT_K, include_self: bool = True) -> NeighborResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        wid = self.word_id(word)
        src = self.condition_index(src_condition)
        tgt = self.condition_index(tgt_condition)
        query_vec = self.centered(src)[0][wid]
        if not np.any(query_vec):
            raise ValueError(
                f"word {word!r} has a zero-norm centered embedding in "
                f"condition {src_condition!r}")
        matrix, norms = self.centered(tgt)
        order, scores = rank_by_cosine(matrix, norms, query_vec)
        if not include_self:
            keep = order != wid
            order, scores = order[keep], scores[keep]
        words = self.vocab.words
        top = [(words[int(wid_)], float(s)) for wid_, s in zip(order[:k], scores[:k])]
        return NeighborResult(word, src_condition, tgt_condition, top, include_self)

    def stability_ranking(self, top_n: int | None = None) -> StabilityRanking:
        """Rank words by mean cosine between their centered embeddings across
        all unordered condition pairs.  Words with a zero-norm vector in any
        condition are skipped and reported."""
        C = len(self.manifest)
        if C < 2:
            raise ValueError("stability ranking needs at least 2 conditions")
        if top_n is not None and top_n < 1:
            raise ValueError("top_n must be >= 1")
        mats = [self.centered(c) for c in range(C)]
        n = len(self.vocab)
        valid = np.ones(n, dtype=bool)
        for _, norms in mats:
            valid &= norms > 0.0
        pairs = list(itertools.combinations(range(C), 2))
        total = np.zeros(n)
        for a, b in pairs:
            ma, na = mats[a]
            mb, nb = mats[b]
            denom = np.where(valid, na * nb, 1.0)
            total += np.einsum("nm,nm->n", ma, mb) / denom
        mean = np.clip(total / len(pairs), -1.0, 1.0)
        valid_ids = np.flatnonzero(valid)
        order = valid_ids[np.argsort(-mean[valid_ids], kind="stable")]
        if top_n is not None:
            order = order[:top_n]
        words = self.vocab.words
        ranked = [(words[int(w)], float(mean[w])) for w in order]
        skipped = [words[int(w)] for w in np.flatnonzero(~valid)]
        return StabilityRanking(ranked, skipped, len(pairs))

    def trajectory(self, word: str, conditions: list[str] | None = None,
                   neighbors_per_condition: int = 8) -> dict:
        """Per-condition centered vectors and top neighbors for one word.

        The query word itself is excluded from its neighbor lists.  Returns a
        JSON-ready dict; intended as raw material for external projection or
        plotting.
        """
        if neighbors_per_condition < 0:
            raise ValueError("neighbors_per_condition must be >= 0")
        wid = self.word_id(word)
        if conditions is None:
            conditions = list(self.manifest.conditions)
        blocks = []
        for cid in conditions:
            c = self.condition_index(cid)
            matrix, norms = self.centered(c)
            vec = matrix[wid]
            neighbors: list[dict] = []
            if neighbors_per_condition > 0 and np.any(vec):
                order, scores = rank_by_cosine(matrix, norms, vec)
                keep = order != wid
                order, scores = order[keep], scores[keep]
                for wid_, s in zip(order[:neighbors_per_condition],
                                   scores[:neighbors_per_condition]):
                    neighbors.append({
                        "word": self.vocab.words[int(wid_)],
                        "score": float(s),
                        "vector": [float(v) for v in matrix[int(wid_)]],
                    })
            blocks.append({
                "condition": cid,
                "vector": [float(v) for v in vec],
                "neighbors": neighbors,
            })
        return {"word": word, "dim": self.model.params.dim, "conditions": blocks}


def nearest_neighbors(model: EmbeddingModel, word: str, src_condition: str,
                      tgt_condition: str, k: int = DEFAULT_K,
                      include_self: bool = True, side: str = "word") -> NeighborResult:
    """One-shot neighbor query; builds a throwaway engine."""
    return QueryEngine(model, side).nearest_neighbors(
        word, src_condition, tgt_condition, k, include_self)


def stability_ranking(model: EmbeddingModel, top_n: int | None = None,
                      side: str = "word") -> StabilityRanking:
    """One-shot stability ranking; builds a throwaway engine."""
    return QueryEngine(model, side).stability_ranking(top_n)


def trajectory_export(model: EmbeddingModel, word: str,
                      conditions: list[str] | None = None,
                      neighbors_per_condition: int = 8, side: str = "word") -> dict:
    """One-shot trajectory export; builds a throwaway engine."""
    return QueryEngine(model, side).trajectory(word, conditions, neighbors_per_condition)
