"""Corpus ingestion: condition manifests, tokenization and the shared vocabulary.

A corpus is partitioned by *condition* (a time bin or a location).  On disk it
lives under one root directory with either ``<root>/<condition>.txt`` or
``<root>/<condition>/*.txt`` per condition, plus a ``manifest.json`` naming the
conditions and the consistency topology ("chain" for ordered time bins,
"complete" for location sets).

Tokenization policy: lowercase, split on Unicode whitespace, strip leading and
trailing punctuation from each token, drop tokens that become empty.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .exceptions import CorpusError, FormatError

TOPOLOGIES = ("chain", "complete")


@dataclass(frozen=True)
class ConditionManifest:
    """Ordered list of condition ids plus the consistency topology.

    Order is significant for "chain" topology: consecutive entries are the
    conditions linked by consistency constraints.
    """

    conditions: tuple[str, ...]
    topology: str = "chain"

    def __post_init__(self):
        if not self.conditions:
            raise ValueError("manifest needs at least one condition")
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("condition ids must be unique")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        object.__setattr__(self, "conditions", tuple(self.conditions))

    def __len__(self) -> int:
        return len(self.conditions)

    def index_of(self, condition_id: str) -> int:
        try:
            return self.conditions.index(condition_id)
        except ValueError:
            raise KeyError(f"unknown condition {condition_id!r}; "
                           f"known: {', '.join(self.conditions)}") from None

    def pairs(self) -> list[tuple[int, int]]:
        """Condition-index pairs linked by the consistency constraint."""
        n = len(self.conditions)
        if self.topology == "chain":
            return [(c, c + 1) for c in range(n - 1)]
        return [(a, b) for a in range(n - 1) for b in range(a + 1, n)]

    def neighbors(self, c: int) -> list[int]:
        """Condition indices linked to condition ``c``."""
        out = []
        for a, b in self.pairs():
            if a == c:
                out.append(b)
            elif b == c:
                out.append(a)
        return out

    def with_topology(self, topology: str) -> "ConditionManifest":
        return ConditionManifest(self.conditions, topology)

    @classmethod
    def load_json(cls, path: str | Path) -> "ConditionManifest":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"manifest {path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise FormatError(f"manifest {path}: expected a JSON object")
        unknown = set(raw) - {"conditions", "topology"}
        if unknown:
            raise FormatError(f"manifest {path}: unknown keys {sorted(unknown)}")
        try:
            return cls(tuple(raw["conditions"]), raw.get("topology", "chain"))
        except (KeyError, ValueError) as e:
            raise FormatError(f"manifest {path}: {e}") from e

    def save_json(self, path: str | Path) -> None:
        payload = {"conditions": list(self.conditions), "topology": self.topology}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    out = []
    for raw in text.lower().split():
        tok = _strip_punct(raw)
        if tok:
            out.append(tok)
    return out


def _condition_files(root: Path, condition_id: str) -> list[Path]:
    single = root / f"{condition_id}.txt"
    if single.is_file():
        return [single]
    subdir = root / condition_id
    if subdir.is_dir():
        files = sorted(subdir.glob("*.txt"))
        if files:
            return files
    raise CorpusError(f"no corpus file for condition {condition_id!r} under {root} "
                      f"(expected {condition_id}.txt or {condition_id}/*.txt)")


def _tokens_from_files(files: list[Path], condition_id: str) -> Iterator[str]:
    for f in files:
        data = f.read_bytes()
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorpusError(f"condition {condition_id!r}: {f} is not valid UTF-8 "
                              f"at byte offset {e.start}") from e
        yield from tokenize(text)


def read_condition_corpus(root: str | Path,
                          manifest: ConditionManifest) -> dict[str, Iterator[str]]:
    """Open one lazy token stream per condition, in manifest order.

    All condition files are located up front so a missing condition fails
    before any tokens are consumed.  Documents within a condition directory
    are read in sorted filename order and concatenated into one stream.
    """
    root = Path(root)
    files = {cid: _condition_files(root, cid) for cid in manifest.conditions}
    return {cid: _tokens_from_files(fs, cid) for cid, fs in files.items()}


class Vocabulary:
    """Word/id map with global and per-condition frequency counts.

    Ids are dense ``0..n-1``, assigned by descending global frequency with
    lexicographic tie-break, so frequent-word subranges can be sliced cheaply.
    Instances are immutable after construction and safe to share.

    Attributes:
        words: token strings, indexed by id.
        id_of: token -> id.
        count_global: int64 array, shape (n_words,).
        count_by_condition: int64 array, shape (n_words, n_conditions); columns
            follow the condition order of the streams the vocabulary was built
            from (i.e. manifest order).
        min_count: the frequency threshold used at build time.
    """

    def __init__(self, words: list[str], count_global: np.ndarray,
                 count_by_condition: np.ndarray, min_count: int):
        self.words = list(words)
        self.id_of = {w: i for i, w in enumerate(self.words)}
        self.count_global = np.asarray(count_global, dtype=np.int64)
        self.count_by_condition = np.asarray(count_by_condition, dtype=np.int64)
        self.min_count = int(min_count)
        if len(self.words) != len(self.id_of):
            raise ValueError("duplicate words in vocabulary")
        if self.count_global.shape != (len(self.words),):
            raise ValueError("count_global shape mismatch")
        if self.count_by_condition.shape[0] != len(self.words):
            raise ValueError("count_by_condition shape mismatch")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.id_of

    def id(self, word: str) -> int:
        return self.id_of[word]

    @property
    def n_conditions(self) -> int:
        return self.count_by_condition.shape[1]

    def suggest(self, word: str, n: int = 5) -> list[str]:
        """Closest vocabulary entries by edit distance (diagnostic aid)."""
        scored = sorted(
            ((_edit_distance(word, w), w) for w in self.words),
            key=lambda t: (t[0], t[1]),
        )
        return [w for _, w in scored[:n]]

    def save_tsv(self, path: str | Path) -> None:
        """Write ``word<TAB>global_count<TAB>count_c1,count_c2,...`` lines."""
        with open(path, "w", encoding="utf-8") as fh:
            for i, w in enumerate(self.words):
                per_cond = ",".join(str(c) for c in self.count_by_condition[i])
                fh.write(f"{w}\t{self.count_global[i]}\t{per_cond}\n")

    @classmethod
    def load_tsv(cls, path: str | Path, min_count: int = 1) -> "Vocabulary":
        """Load the TSV format written by :meth:`save_tsv`.

        The file does not record the build threshold; pass ``min_count`` if a
        specific value should be carried along.
        """
        words: list[str] = []
        globals_: list[int] = []
        rows: list[list[int]] = []
        n_cond = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
                word, total, per_cond = parts
                counts = [int(c) for c in per_cond.split(",")]
                if n_cond is None:
                    n_cond = len(counts)
                elif len(counts) != n_cond:
                    raise FormatError(f"{path}:{lineno}: inconsistent condition count")
                words.append(word)
                globals_.append(int(total))
                rows.append(counts)
        if not words:
            raise FormatError(f"{path}: empty vocabulary file")
        return cls(words, np.array(globals_), np.array(rows), min_count)


def _edit_distance(a: str, b: str) -> int:
    # Standard Levenshtein; vocabulary words are short so O(len(a)*len(b)) is fine.
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def build_vocabulary(streams: Mapping[str, Iterable[str]], min_count: int) -> Vocabulary:
    """Count tokens per condition and keep words with total count >= min_count.

    ``streams`` maps condition id to a token iterable; its iteration order
    fixes the column order of the per-condition counts, so pass conditions in
    manifest order.  Raises if no word survives the threshold.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    condition_ids = list(streams)
    per_cond: list[dict[str, int]] = []
    totals: dict[str, int] = {}
    for cid in condition_ids:
        counts: dict[str, int] = {}
        for tok in streams[cid]:
            counts[tok] = counts.get(tok, 0) + 1
        per_cond.append(counts)
        for tok, n in counts.items():
            totals[tok] = totals.get(tok, 0) + n

    kept = sorted(
        ((w, n) for w, n in totals.items() if n >= min_count),
        key=lambda t: (-t[1], t[0]),
    )
    if not kept:
        raise CorpusError("empty vocabulary: no word reaches "
                          f"min_count={min_count}")
    words = [w for w, _ in kept]
    count_global = np.array([n for _, n in kept], dtype=np.int64)
    count_by_condition = np.zeros((len(words), len(condition_ids)), dtype=np.int64)
    for ci, counts in enumerate(per_cond):
        for wi, w in enumerate(words):
            count_by_condition[wi, ci] = counts.get(w, 0)
    return Vocabulary(words, count_global, count_by_condition, min_count)
