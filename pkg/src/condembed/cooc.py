"""Sparse per-condition co-occurrence counting, scaling and shard I/O.

Counts are gathered with a symmetric window: every ordered pair of in-vocab
words within distance ``window`` contributes one count, in both directions.
Out-of-vocab tokens still occupy positions (they keep their neighbors apart)
but generate no counts.  Because sub-corpora differ in size, per-condition
counts are rescaled so every condition has the same total count mass.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Vocabulary
from .exceptions import CondembedError, FormatError

SHARD_MAGIC = b"CO0C"
SHARD_VERSION = 1
DEFAULT_WINDOW = 5
# Little-endian packed record: word id, context id, condition, scaled count.
RECORD_DTYPE = np.dtype([("i", "<u4"), ("j", "<u4"), ("c", "<u2"), ("x", "<f8")])
assert RECORD_DTYPE.itemsize == 18


@dataclass
class CoocTensor:
    """Sparse (word, context, condition) -> count tensor as parallel arrays.

    Entries are stored sorted by (condition, word, context), which makes
    serialization deterministic.  ``x`` holds raw integer counts right after
    counting and positive reals after scaling.
    """

    i: np.ndarray          # uint32, word ids
    j: np.ndarray          # uint32, context ids
    c: np.ndarray          # uint16, condition indices
    x: np.ndarray          # float64, counts
    n_words: int
    n_conditions: int
    window: int

    @property
    def nnz(self) -> int:
        return len(self.x)

    def totals(self) -> np.ndarray:
        """Per-condition sum of counts, shape (n_conditions,)."""
        out = np.zeros(self.n_conditions)
        np.add.at(out, self.c.astype(np.int64), self.x)
        return out

    def nnz_by_condition(self) -> np.ndarray:
        return np.bincount(self.c.astype(np.int64), minlength=self.n_conditions)

    def as_dict(self) -> dict[tuple[int, int, int], float]:
        """Entry map keyed (i, j, c); convenient for small tensors and tests."""
        return {(int(a), int(b), int(cc)): float(v)
                for a, b, cc, v in zip(self.i, self.j, self.c, self.x)}


def count_cooccurrences(streams: Mapping[str, Iterable[str]], vocab: Vocabulary,
                        window: int) -> CoocTensor:
    """Count symmetric windowed co-occurrences per condition.

    ``streams`` maps condition id to a token iterable; iteration order fixes
    the condition indices, so pass conditions in manifest order.  Each stream
    is treated as one contiguous token sequence.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n = len(vocab)
    id_of = vocab.id_of
    chunks_i, chunks_j, chunks_c, chunks_x = [], [], [], []
    for cidx, (cid, stream) in enumerate(streams.items()):
        ids = np.fromiter((id_of.get(t, -1) for t in stream), dtype=np.int64)
        keys = []
        for d in range(1, window + 1):
            if len(ids) <= d:
                break
            a, b = ids[:-d], ids[d:]
            mask = (a >= 0) & (b >= 0)
            if not mask.any():
                continue
            aa, bb = a[mask], b[mask]
            keys.append(aa * n + bb)
            keys.append(bb * n + aa)
        if not keys:
            continue
        uniq, counts = np.unique(np.concatenate(keys), return_counts=True)
        chunks_i.append((uniq // n).astype(np.uint32))
        chunks_j.append((uniq % n).astype(np.uint32))
        chunks_c.append(np.full(len(uniq), cidx, dtype=np.uint16))
        chunks_x.append(counts.astype(np.float64))
    if chunks_i:
        i = np.concatenate(chunks_i)
        j = np.concatenate(chunks_j)
        c = np.concatenate(chunks_c)
        x = np.concatenate(chunks_x)
    else:
        i = np.empty(0, dtype=np.uint32)
        j = np.empty(0, dtype=np.uint32)
        c = np.empty(0, dtype=np.uint16)
        x = np.empty(0, dtype=np.float64)
    return CoocTensor(i, j, c, x, n_words=n, n_conditions=len(streams), window=window)


def scale_counts(raw: CoocTensor) -> CoocTensor:
    """Rescale each condition so all conditions carry the same total count.

    The common target is the arithmetic mean of the raw per-condition totals,
    which keeps magnitudes near their raw scale.  A condition with no counts
    cannot be scaled and is an error.
    """
    totals = raw.totals()
    zero = np.flatnonzero(totals == 0)
    if len(zero):
        raise CondembedError("cannot scale: condition(s) with zero co-occurrence "
                             f"total: {', '.join(str(z) for z in zero)}")
    target = totals.mean()
    factors = target / totals
    x = raw.x * factors[raw.c.astype(np.int64)]
    return CoocTensor(raw.i, raw.j, raw.c, x, raw.n_words, raw.n_conditions, raw.window)


def save_shard(tensor: CoocTensor, path: str | Path) -> None:
    """Write the binary shard format (header + packed records)."""
    header = struct.pack("<4sIIII", SHARD_MAGIC, SHARD_VERSION,
                         tensor.n_words, tensor.n_conditions, tensor.window)
    records = np.empty(tensor.nnz, dtype=RECORD_DTYPE)
    records["i"] = tensor.i
    records["j"] = tensor.j
    records["c"] = tensor.c
    records["x"] = tensor.x
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def load_shard(path: str | Path) -> CoocTensor:
    data = Path(path).read_bytes()
    head_size = struct.calcsize("<4sIIII")
    if len(data) < head_size:
        raise FormatError(f"{path}: truncated shard header")
    magic, version, n_words, n_conditions, window = struct.unpack_from("<4sIIII", data)
    if magic != SHARD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SHARD_VERSION:
        raise FormatError(f"{path}: unsupported shard version {version}")
    body = data[head_size:]
    if len(body) % RECORD_DTYPE.itemsize:
        raise FormatError(f"{path}: record section size {len(body)} is not a "
                          f"multiple of {RECORD_DTYPE.itemsize}")
    records = np.frombuffer(body, dtype=RECORD_DTYPE)
    return CoocTensor(
        i=records["i"].copy(), j=records["j"].copy(), c=records["c"].copy(),
        x=records["x"].copy(), n_words=n_words, n_conditions=n_conditions,
        window=window,
    )


def export_tsv(tensor: CoocTensor, path: str | Path) -> None:
    """Debug export: one ``i<TAB>j<TAB>c<TAB>x`` line per entry."""
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, cc, v in zip(tensor.i, tensor.j, tensor.c, tensor.x):
            fh.write(f"{a}\t{b}\t{cc}\t{float(v)!r}\n")


def merge_tensors(tensors: list[CoocTensor]) -> CoocTensor:
    """Sum entries across shards, combining duplicates.

    Shards must agree on vocabulary size, condition count, and window.
    Merging is commutative: the result is re-sorted into the canonical
    (condition, i, j) order regardless of shard order.
    """
    if not tensors:
        raise ValueError("no tensors to merge")
    first = tensors[0]
    for t in tensors[1:]:
        shape = (t.n_words, t.n_conditions, t.window)
        if shape != (first.n_words, first.n_conditions, first.window):
            raise ValueError(
                "shards disagree on vocabulary size, condition count, "
                f"or window: {shape} vs "
                f"{(first.n_words, first.n_conditions, first.window)}")
    if len(tensors) == 1:
        return first
    n = np.int64(first.n_words)
    i = np.concatenate([t.i.astype(np.int64) for t in tensors])
    j = np.concatenate([t.j.astype(np.int64) for t in tensors])
    c = np.concatenate([t.c.astype(np.int64) for t in tensors])
    x = np.concatenate([t.x for t in tensors])
    keys = (c * n + i) * n + j
    uniq, inverse = np.unique(keys, return_inverse=True)
    summed = np.zeros(len(uniq))
    np.add.at(summed, inverse, x)
    cc, rem = np.divmod(uniq, n * n)
    ii, jj = np.divmod(rem, n)
    return CoocTensor(ii.astype(np.uint32), jj.astype(np.uint32),
                      cc.astype(np.uint16), summed,
                      first.n_words, first.n_conditions, first.window)


def load_shards(path: str | Path) -> CoocTensor:
    """Load one shard file, or merge every ``*.bin`` shard in a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.bin"))
        if not files:
            raise FormatError(f"no *.bin shards in {path}")
        return merge_tensors([load_shard(f) for f in files])
    return load_shard(path)
