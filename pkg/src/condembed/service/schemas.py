"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

Side = Literal["word", "context", "both"]


class HealthResponse(BaseModel):
    status: str = "ok"


class ModelInfo(BaseModel):
    n_words: int
    n_conditions: int
    dim: int
    conditions: list[str]
    topology: str


class NeighborEntry(BaseModel):
    word: str
    score: float


class NeighborsRequest(BaseModel):
    word: str
    src_condition: str
    tgt_condition: str
    k: int = Field(default=10, ge=1)
    include_self: bool = True
    side: Side = "word"


class NeighborsResponse(BaseModel):
    word: str
    src_condition: str
    tgt_condition: str
    include_self: bool
    neighbors: list[NeighborEntry]


class StabilityRequest(BaseModel):
    top_n: int | None = Field(default=None, ge=1)
    side: Side = "word"


class StabilityResponse(BaseModel):
    ranked: list[NeighborEntry]
    skipped: list[str]
    n_pairs: int


class TrajectoryRequest(BaseModel):
    word: str
    conditions: list[str] | None = None
    neighbors_per_condition: int = Field(default=8, ge=0)
    side: Side = "word"


class TrajectoryNeighbor(BaseModel):
    word: str
    score: float
    vector: list[float]


class TrajectoryCondition(BaseModel):
    condition: str
    vector: list[float]
    neighbors: list[TrajectoryNeighbor]


class TrajectoryResponse(BaseModel):
    word: str
    dim: int
    conditions: list[TrajectoryCondition]


class EvalRecordIn(BaseModel):
    query_word: str
    query_condition: str
    target_condition: str
    gold_word: str


class EvaluateRequest(BaseModel):
    records: list[EvalRecordIn] = Field(min_length=1)
    name: str = "eval"
    oov_policy: Literal["skip", "zero"] = "skip"
    include_self: bool = True
    side: Side = "word"


class EvaluateResponse(BaseModel):
    name: str
    mrr: float
    mp_at: dict[str, float]
    n_scored: int
    n_skipped: int
    include_self: bool
