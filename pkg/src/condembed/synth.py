"""Synthetic condition-stamped corpora with planted semantic drift.

The generator emits one token stream per condition, built from three kinds
of material:

* filler words, drawn uniformly at random everywhere;
* cluster runs -- a shuffle of all of cluster A's words back to back, and
  separately of cluster B's.  Both runs appear once per cycle in *every*
  condition, so each cluster is a coherent, always-present topic whose words
  co-occur with each other identically across conditions;
* the planted word, spliced once per cycle *inside* the active cluster's
  run: cluster A's before the drift point, cluster B's from it on.  The
  interior splice makes the planted word adjacent to cluster words on both
  sides, so the signal survives any co-occurrence window of at least 1 and
  dominates the planted word's context at small windows.

Only the planted word's attachment changes at the drift point; cluster and
filler frequencies and the clusters' internal co-occurrences stay flat.
That is deliberate.  A cluster that vanished outside its regime would leave
no contradicting cells for the factorization (absent cells carry no loss),
and frequency changes alone can be absorbed by the per-condition bias
scalars, while the clusters' own always-on co-occurrence anchors their
parameters against absorbing the switch.  What remains is a pure
association change, which only the planted word's condition-specific
parameters can fit -- exactly the drift signal the corpus is meant to plant.

One further detail of the schedule carries the recoverability of the
signal and is deliberate: every thirteenth splice lands in the inactive
cluster's run instead of the active one.  Without that leak the planted
word never touches the inactive cluster, those co-occurrence cells are
absent, and a condition-independent embedding that keeps predicting the
in-regime level is never contradicted (absent cells carry no loss).  The
leak keeps the off-regime cells present but an order of magnitude lower,
so the regime switch shows up as a count-level swing the loss can see,
while the planted word's in-window cluster mass stays above nine tenths
with its active cluster (twelve thirteenths of splices by construction).

Alongside the streams the generator returns the gold facts the construction
implies: expected early/late neighbor sets, the stable filler words, and
cross-condition equivalence pairs for the evaluation harness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ConditionManifest
from .exceptions import FormatError

MIN_TOKENS_PER_CONDITION = 50
# Filler-run length between cluster runs.  Filler runs at least as long as
# the co-occurrence window keep the two clusters out of each other's windows
# (and the planted word out of the inactive cluster's).
DEFAULT_INSERT_EVERY = 5
# Every thirteenth splice goes to the inactive cluster's run, keeping
# off-regime cells nonzero (so a static fit is contradicted) while leaving
# 12/13 > 90% of the planted word's cluster mass with the active cluster.
OFF_REGIME_EVERY = 13
TOKENS_PER_LINE = 20

_SPEC_KEYS = {"n_conditions", "filler_words", "cluster_a", "cluster_b",
              "planted_word", "drift_point", "tokens_per_condition",
              "insert_every", "seed", "topology"}


@dataclass
class DriftSpec:
    """Recipe for one synthetic corpus.

    ``planted_word=None`` produces the all-stable variant: pure filler
    streams with no drift, in which case the cluster lists and drift point
    are unused.
    """

    n_conditions: int
    filler_words: list[str]
    cluster_a: list[str] = field(default_factory=list)
    cluster_b: list[str] = field(default_factory=list)
    planted_word: str | None = None
    drift_point: int | None = None
    tokens_per_condition: int = 10_000
    insert_every: int = DEFAULT_INSERT_EVERY
    seed: int = 0
    topology: str = "chain"

    def __post_init__(self):
        if self.n_conditions < 1:
            raise ValueError("n_conditions must be >= 1")
        if not self.filler_words:
            raise ValueError("filler_words must be non-empty")
        if len(set(self.filler_words)) != len(self.filler_words):
            raise ValueError("filler_words contains duplicates")
        if self.tokens_per_condition < MIN_TOKENS_PER_CONDITION:
            raise ValueError(
                f"token budget too small: need at least "
                f"{MIN_TOKENS_PER_CONDITION} tokens per condition, "
                f"got {self.tokens_per_condition}")
        if self.insert_every < 1:
            raise ValueError("insert_every must be >= 1")
        if self.planted_word is not None:
            if not self.cluster_a or not self.cluster_b:
                raise ValueError("both clusters must be non-empty when a "
                                 "planted word is set")
            if set(self.cluster_a) & set(self.cluster_b):
                raise ValueError("clusters must be disjoint")
            reserved = set(self.cluster_a) | set(self.cluster_b) | {self.planted_word}
            if reserved & set(self.filler_words):
                raise ValueError("filler words must not overlap the planted "
                                 "word or clusters")
            if self.planted_word in self.cluster_a or self.planted_word in self.cluster_b:
                raise ValueError("planted word must not belong to a cluster")
            if self.drift_point is None:
                raise ValueError("drift_point is required when a planted "
                                 "word is set")
            if not 1 <= self.drift_point <= self.n_conditions - 1:
                raise ValueError(
                    f"drift_point must be in [1, {self.n_conditions - 1}], "
                    f"got {self.drift_point}")

    @property
    def condition_ids(self) -> list[str]:
        return [f"c{i + 1}" for i in range(self.n_conditions)]

    @classmethod
    def from_json(cls, path: str | Path) -> "DriftSpec":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"drift spec {path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise FormatError(f"drift spec {path}: expected a JSON object")
        unknown = set(raw) - _SPEC_KEYS
        if unknown:
            raise FormatError(f"drift spec {path}: unknown keys {sorted(unknown)}")
        try:
            return cls(**raw)
        except (TypeError, ValueError) as e:
            raise FormatError(f"drift spec {path}: {e}") from e


@dataclass
class GoldFacts:
    """What the construction guarantees, for use by tests and reports."""

    conditions: list[str]
    stable_words: list[str]
    planted_word: str | None = None
    early_neighbors: list[str] = field(default_factory=list)
    late_neighbors: list[str] = field(default_factory=list)
    drift_point: int | None = None
    # Equivalence records (query_word, query_condition, target_condition,
    # gold_word) that a good model should score highly.
    stable_pairs: list[tuple[str, str, str, str]] = field(default_factory=list)
    planted_pairs: list[tuple[str, str, str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "conditions": self.conditions,
            "stable_words": self.stable_words,
            "planted_word": self.planted_word,
            "early_neighbors": self.early_neighbors,
            "late_neighbors": self.late_neighbors,
            "drift_point": self.drift_point,
            "stable_pairs": [list(p) for p in self.stable_pairs],
            "planted_pairs": [list(p) for p in self.planted_pairs],
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")


@dataclass
class SynthCorpus:
    """Generated streams plus their manifest and gold facts."""

    streams: dict[str, list[str]]
    manifest: ConditionManifest
    gold: GoldFacts


def _cluster_run(rng: np.random.Generator, cluster: list[str],
                 insert: str | None) -> tuple[str, ...]:
    """A shuffle of the whole cluster, optionally with ``insert`` spliced in
    at an interior position (cluster words on both sides when the cluster
    has at least two)."""
    run = [cluster[int(i)] for i in rng.permutation(len(cluster))]
    if insert is not None:
        run.insert(int(rng.integers(1, max(len(run), 2))), insert)
    return tuple(run)


def _condition_stream(spec: DriftSpec, c: int) -> list[str]:
    """Tokens for one condition index; seeded independently per condition."""
    rng = np.random.default_rng([spec.seed % 2**63, c])
    planted = spec.planted_word
    if planted is not None:
        before = c < spec.drift_point
        active = spec.cluster_a if before else spec.cluster_b
        inactive = spec.cluster_b if before else spec.cluster_a
    budget = spec.tokens_per_condition
    # Units are single filler tokens or intact cluster runs, so truncation
    # never splits a run.
    units: list[tuple[str, ...]] = []
    total = 0

    def emit_filler():
        nonlocal total
        units.append(
            (spec.filler_words[int(rng.integers(len(spec.filler_words)))],))
        total += 1

    def emit(unit: tuple[str, ...]):
        nonlocal total
        units.append(unit)
        total += len(unit)

    if planted is None:
        while total < budget:
            emit_filler()
    else:
        splices = 0
        while total < budget:
            # One cycle: filler run, active-cluster run, filler run,
            # inactive-cluster run, with the planted word spliced into the
            # active run except for the occasional off-regime leak.  The
            # filler runs keep the two clusters outside each other's
            # windows for any window <= insert_every.
            leak = splices % OFF_REGIME_EVERY == OFF_REGIME_EVERY - 1
            splices += 1
            for _ in range(spec.insert_every):
                emit_filler()
            emit(_cluster_run(rng, active, None if leak else planted))
            for _ in range(spec.insert_every):
                emit_filler()
            emit(_cluster_run(rng, inactive, planted if leak else None))
    while total > budget:
        total -= len(units.pop())
    tokens: list[str] = []
    for unit in units:
        tokens.extend(unit)
    return tokens


def _gold_facts(spec: DriftSpec) -> GoldFacts:
    conditions = spec.condition_ids
    stable_pairs = []
    if spec.n_conditions >= 2:
        first, last = conditions[0], conditions[-1]
        stable_pairs = [(w, first, last, w) for w in spec.filler_words]
    if spec.planted_word is None:
        return GoldFacts(conditions=conditions, stable_words=list(spec.filler_words),
                         stable_pairs=stable_pairs)
    planted_pairs = []
    for i in range(spec.n_conditions - 1):
        crosses_drift = i < spec.drift_point <= i + 1
        if not crosses_drift:
            planted_pairs.append(
                (spec.planted_word, conditions[i], conditions[i + 1],
                 spec.planted_word))
    return GoldFacts(
        conditions=conditions,
        stable_words=list(spec.filler_words),
        planted_word=spec.planted_word,
        early_neighbors=list(spec.cluster_a),
        late_neighbors=list(spec.cluster_b),
        drift_point=spec.drift_point,
        stable_pairs=stable_pairs,
        planted_pairs=planted_pairs,
    )


def generate(spec: DriftSpec) -> SynthCorpus:
    """Build the per-condition streams and gold facts for one spec.

    Deterministic given the seed; conditions are generated independently.
    """
    streams = {cid: _condition_stream(spec, c)
               for c, cid in enumerate(spec.condition_ids)}
    manifest = ConditionManifest(tuple(spec.condition_ids), spec.topology)
    return SynthCorpus(streams, manifest, _gold_facts(spec))


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> None:
    """Write the standard corpus layout: one text file per condition plus
    manifest, gold facts, and an equivalence-pair test set."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for cid, tokens in corpus.streams.items():
        lines = [" ".join(tokens[s:s + TOKENS_PER_LINE])
                 for s in range(0, len(tokens), TOKENS_PER_LINE)]
        (out / f"{cid}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    corpus.manifest.save_json(out / "manifest.json")
    corpus.gold.save_json(out / "gold_facts.json")
    pairs = corpus.gold.stable_pairs + corpus.gold.planted_pairs
    lines = ["query_word\tquery_condition\ttarget_condition\tgold_word"]
    lines += ["\t".join(p) for p in pairs]
    (out / "pairs.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
