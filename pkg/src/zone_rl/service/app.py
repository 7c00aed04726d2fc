"""FastAPI wrapper around the experiment harness.

Endpoints mirror the CLI verbs one-to-one and return complete experiment
payloads (report rows, per-seed summaries, episode logs); writing files is
the client's concern. Configs arrive as raw JSON objects and are validated
by the shared config layer, so the service and the CLI reject exactly the
same documents.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ExperimentConfig, TheoryConfig, config_from_dict
from ..experiments import (
    run_ablation,
    run_budget_sweep,
    run_glucose_experiment,
    run_validate_theory,
)
from .schemas import (
    ExperimentRequest,
    ExperimentResponse,
    HealthResponse,
    SweepRequest,
    TheoryRequest,
    TheoryResponse,
)


def _experiment_config(raw: dict[str, Any]) -> ExperimentConfig:
    try:
        return config_from_dict(ExperimentConfig, raw)
    except (TypeError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def _theory_config(raw: dict[str, Any]) -> TheoryConfig:
    try:
        return config_from_dict(TheoryConfig, raw)
    except (TypeError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def create_app() -> FastAPI:
    app = FastAPI(title="zone-rl", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/theory/validate", response_model=TheoryResponse)
    def validate_theory(request: TheoryRequest) -> TheoryResponse:
        result = run_validate_theory(_theory_config(request.config))
        return TheoryResponse(**result.payload())

    @app.post("/experiments/run-glucose", response_model=ExperimentResponse)
    def run_glucose(request: ExperimentRequest) -> ExperimentResponse:
        result = run_glucose_experiment(_experiment_config(request.config))
        return ExperimentResponse(**result.payload())

    @app.post("/experiments/sweep-budget", response_model=ExperimentResponse)
    def sweep_budget(request: SweepRequest) -> ExperimentResponse:
        config = _experiment_config(request.config)
        try:
            result = run_budget_sweep(config, request.budgets)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return ExperimentResponse(**result.payload())

    @app.post("/experiments/ablation", response_model=ExperimentResponse)
    def ablation(request: ExperimentRequest) -> ExperimentResponse:
        result = run_ablation(_experiment_config(request.config))
        return ExperimentResponse(**result.payload())

    return app
