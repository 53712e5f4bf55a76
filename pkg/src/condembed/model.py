"""Trainable parameters and embedding composition.

A word ``w`` in condition ``c`` is represented as ``v_w * q_c + d_{w,c}``
(elementwise product): a condition-independent basic vector, modulated by a
learned per-condition vector, plus a per-word-per-condition deviation that
absorbs genuine meaning change.  Word side and context side each have their
own basic and deviation tensors, plus per-(word, condition) bias scalars used
only during training.

Queries operate on *centered* embeddings: within a condition, the mean vector
over the vocabulary is subtracted before any cosine comparison.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ConditionManifest, Vocabulary
from .exceptions import FormatError

MODEL_MAGIC = b"CWEV"
MODEL_VERSION = 1
_TOPOLOGY_CODES = {"chain": 0, "complete": 1}
_TOPOLOGY_NAMES = {v: k for k, v in _TOPOLOGY_CODES.items()}

SIDES = ("word", "context", "both")


@dataclass
class ModelParams:
    """All trainable tensors.

    Shapes (n = vocabulary size, C = conditions, m = dimension):
        V, U:   (n, m)     basic word / context vectors
        Q:      (C, m)     condition vectors
        D, Dp:  (n, C, m)  word-side / context-side deviations
        B, Bp:  (n, C)     word-side / context-side biases
    """

    V: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    D: np.ndarray
    Dp: np.ndarray
    B: np.ndarray
    Bp: np.ndarray

    @property
    def n_words(self) -> int:
        return self.V.shape[0]

    @property
    def n_conditions(self) -> int:
        return self.Q.shape[0]

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"V": self.V, "U": self.U, "Q": self.Q, "D": self.D,
                "Dp": self.Dp, "B": self.B, "Bp": self.Bp}

    def validate_finite(self) -> None:
        for name, arr in self.tensors().items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite values in parameter tensor {name}")

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.tensors().items()})


def init_params(n_words: int, n_conditions: int, dim: int, seed: int) -> ModelParams:
    """Seeded initialization.

    Basic vectors start small and uniform; condition vectors start at the
    all-ones vector plus tiny noise, so initial conditioned embeddings equal
    the basic embeddings and the all-zero condition-vector dead zone is
    avoided.  Deviations and biases start at zero.
    """
    if n_words < 1 or n_conditions < 1 or dim < 1:
        raise ValueError("n_words, n_conditions and dim must all be >= 1, got "
                         f"({n_words}, {n_conditions}, {dim})")
    rng = np.random.default_rng(seed % 2**63)
    bound = 0.5 / dim
    V = rng.uniform(-bound, bound, size=(n_words, dim))
    U = rng.uniform(-bound, bound, size=(n_words, dim))
    Q = 1.0 + rng.uniform(-0.01, 0.01, size=(n_conditions, dim))
    D = np.zeros((n_words, n_conditions, dim))
    Dp = np.zeros((n_words, n_conditions, dim))
    B = np.zeros((n_words, n_conditions))
    Bp = np.zeros((n_words, n_conditions))
    return ModelParams(V, U, Q, D, Dp, B, Bp)


def compose_embedding(params: ModelParams, w: int, c: int, side: str = "word") -> np.ndarray:
    """Conditioned embedding of word ``w`` in condition ``c``."""
    if not 0 <= w < params.n_words:
        raise IndexError(f"word id {w} out of range [0, {params.n_words})")
    if not 0 <= c < params.n_conditions:
        raise IndexError(f"condition index {c} out of range [0, {params.n_conditions})")
    if side == "word":
        return params.V[w] * params.Q[c] + params.D[w, c]
    if side == "context":
        return params.U[w] * params.Q[c] + params.Dp[w, c]
    if side == "both":
        return ((params.V[w] + params.U[w]) * params.Q[c]
                + params.D[w, c] + params.Dp[w, c])
    raise ValueError(f"side must be one of {SIDES}, got {side!r}")


def conditioned_matrix(params: ModelParams, c: int, side: str = "word") -> np.ndarray:
    """Conditioned embeddings of the whole vocabulary, shape (n_words, dim)."""
    if not 0 <= c < params.n_conditions:
        raise IndexError(f"condition index {c} out of range [0, {params.n_conditions})")
    if side == "word":
        return params.V * params.Q[c] + params.D[:, c]
    if side == "context":
        return params.U * params.Q[c] + params.Dp[:, c]
    if side == "both":
        return ((params.V + params.U) * params.Q[c]
                + params.D[:, c] + params.Dp[:, c])
    raise ValueError(f"side must be one of {SIDES}, got {side!r}")


def center_embeddings(params: ModelParams, c: int, side: str = "word") -> np.ndarray:
    """Conditioned embeddings for condition ``c`` with the per-condition mean removed."""
    mat = conditioned_matrix(params, c, side)
    return mat - mat.mean(axis=0)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clipped to [-1, 1]; zero-norm input is an error.

    Equal vectors score exactly 1.0: the identity is enforced rather than
    left to rounding in sqrt(s) * sqrt(s).
    """
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero-norm vector")
    if a is b or np.array_equal(a, b):
        return 1.0
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))


@dataclass
class EmbeddingModel:
    """Trained parameters bundled with their vocabulary and manifest."""

    params: ModelParams
    vocab: Vocabulary
    manifest: ConditionManifest

    def __post_init__(self):
        if self.params.n_words != len(self.vocab):
            raise ValueError(f"params have {self.params.n_words} words but "
                             f"vocabulary has {len(self.vocab)}")
        if self.params.n_conditions != len(self.manifest):
            raise ValueError(f"params have {self.params.n_conditions} conditions "
                             f"but manifest has {len(self.manifest)}")

    def save(self, path: str | Path) -> None:
        """Write the binary model plus vocabulary/manifest sidecar files.

        Tensors are stored as little-endian float32.  Sidecars land next to
        the model file as ``<stem>.vocab.tsv`` and ``<stem>.manifest.json``.
        """
        path = Path(path)
        p = self.params
        header = struct.pack("<4sIIIIB", MODEL_MAGIC, MODEL_VERSION,
                             p.n_words, p.n_conditions, p.dim,
                             _TOPOLOGY_CODES[self.manifest.topology])
        with open(path, "wb") as fh:
            fh.write(header)
            for name in ("V", "U", "Q", "D", "Dp", "B", "Bp"):
                fh.write(np.ascontiguousarray(p.tensors()[name], dtype="<f4").tobytes())
        self.vocab.save_tsv(path.with_suffix(".vocab.tsv"))
        self.manifest.save_json(path.with_suffix(".manifest.json"))

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingModel":
        path = Path(path)
        data = path.read_bytes()
        head = struct.calcsize("<4sIIIIB")
        if len(data) < head:
            raise FormatError(f"{path}: truncated model header")
        magic, version, n_words, n_cond, dim, topo = struct.unpack_from("<4sIIIIB", data)
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported model version {version}")
        if topo not in _TOPOLOGY_NAMES:
            raise FormatError(f"{path}: unknown topology code {topo}")
        shapes = [("V", (n_words, dim)), ("U", (n_words, dim)), ("Q", (n_cond, dim)),
                  ("D", (n_words, n_cond, dim)), ("Dp", (n_words, n_cond, dim)),
                  ("B", (n_words, n_cond)), ("Bp", (n_words, n_cond))]
        expected = head + sum(int(np.prod(s)) for _, s in shapes) * 4
        if len(data) != expected:
            raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
        offset = head
        arrays = {}
        for name, shape in shapes:
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            arrays[name] = arr.reshape(shape).astype(np.float64)
            offset += count * 4
        params = ModelParams(**arrays)
        vocab = Vocabulary.load_tsv(path.with_suffix(".vocab.tsv"))
        manifest = ConditionManifest.load_json(path.with_suffix(".manifest.json"))
        if manifest.topology != _TOPOLOGY_NAMES[topo]:
            raise FormatError(f"{path}: manifest topology {manifest.topology!r} "
                              f"disagrees with model header")
        return cls(params, vocab, manifest)


def export_text(model: EmbeddingModel, path: str | Path, side: str = "word") -> None:
    """Write centered embeddings as ``word<TAB>condition<TAB>x1 x2 ... xm`` lines.

    This is the interop format the evaluation module also accepts for
    externally produced embeddings.  Values use shortest round-trip float
    formatting so a re-import reproduces the vectors exactly.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for cidx, cid in enumerate(model.manifest.conditions):
            mat = center_embeddings(model.params, cidx, side)
            for wid, word in enumerate(model.vocab.words):
                vals = " ".join(repr(float(v)) for v in mat[wid])
                fh.write(f"{word}\t{cid}\t{vals}\n")
