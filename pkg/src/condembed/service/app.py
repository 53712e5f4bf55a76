"""FastAPI application over a frozen embedding model.

The model is loaded once at startup and never mutated; per-side query
engines are created lazily and cached, after which every endpoint is a pure
read.  Out-of-vocabulary words map to 404 with suggestions, other validation
failures to 400.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..evaluation import EvalRecord, EvalSet, evaluate
from ..exceptions import CondembedError, OovError
from ..model import EmbeddingModel
from ..query import QueryEngine
from . import schemas


def create_app(model: EmbeddingModel | None = None,
               model_path: str | Path | None = None) -> FastAPI:
    """Build the service around an in-memory model or a model file."""
    if model is None:
        if model_path is None:
            raise ValueError("either model or model_path is required")
        model = EmbeddingModel.load(model_path)

    app = FastAPI(title="condembed",
                  description="Query service for condition-specific word "
                              "embeddings.")
    engines: dict[str, QueryEngine] = {}

    def engine(side: str) -> QueryEngine:
        cached = engines.get(side)
        if cached is None:
            cached = engines[side] = QueryEngine(model, side)
        return cached

    @app.exception_handler(OovError)
    async def _oov_handler(request, exc: OovError):
        return JSONResponse(
            status_code=404,
            content={"detail": {"message": str(exc),
                                "suggestions": exc.suggestions}})

    @app.exception_handler(CondembedError)
    async def _package_error_handler(request, exc: CondembedError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error_handler(request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse()

    @app.get("/model", response_model=schemas.ModelInfo)
    def model_info():
        params = model.params
        return schemas.ModelInfo(
            n_words=params.n_words,
            n_conditions=params.n_conditions,
            dim=params.dim,
            conditions=list(model.manifest.conditions),
            topology=model.manifest.topology,
        )

    @app.post("/neighbors", response_model=schemas.NeighborsResponse)
    def neighbors(request: schemas.NeighborsRequest):
        result = engine(request.side).nearest_neighbors(
            request.word, request.src_condition, request.tgt_condition,
            request.k, request.include_self)
        return schemas.NeighborsResponse(
            word=result.word,
            src_condition=result.src_condition,
            tgt_condition=result.tgt_condition,
            include_self=result.include_self,
            neighbors=[schemas.NeighborEntry(word=w, score=s)
                       for w, s in result.neighbors],
        )

    @app.post("/stability", response_model=schemas.StabilityResponse)
    def stability(request: schemas.StabilityRequest):
        ranking = engine(request.side).stability_ranking(request.top_n)
        return schemas.StabilityResponse(
            ranked=[schemas.NeighborEntry(word=w, score=s)
                    for w, s in ranking.ranked],
            skipped=ranking.skipped,
            n_pairs=ranking.n_pairs,
        )

    @app.post("/trajectory", response_model=schemas.TrajectoryResponse)
    def trajectory(request: schemas.TrajectoryRequest):
        export = engine(request.side).trajectory(
            request.word, request.conditions, request.neighbors_per_condition)
        return schemas.TrajectoryResponse(**export)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_records(request: schemas.EvaluateRequest):
        eval_set = EvalSet(
            records=[EvalRecord(r.query_word, r.query_condition,
                                r.target_condition, r.gold_word)
                     for r in request.records],
            name=request.name)
        report = evaluate(engine(request.side), eval_set,
                          oov_policy=request.oov_policy,
                          include_self=request.include_self)
        return schemas.EvaluateResponse(
            name=report.name,
            mrr=report.mrr,
            mp_at={str(k): v for k, v in report.mp_at.items()},
            n_scored=report.n_scored,
            n_skipped=report.n_skipped,
            include_self=report.include_self,
        )

    return app
