"""Request/response envelopes for the HTTP service.

The experiment and theory configs themselves are validated by ``config.py``
(the single source of truth for field names, defaults, and unknown-key
rejection); the service schemas carry them as raw JSON objects and type the
surrounding envelope.
"""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, ConfigDict, Field


class TheoryRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: dict[str, Any] = Field(default_factory=dict)


class ExperimentRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: dict[str, Any] = Field(default_factory=dict)


class SweepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: dict[str, Any] = Field(default_factory=dict)
    budgets: list[float] | None = None


class TheoryCheckModel(BaseModel):
    name: str
    passed: bool
    residual: float | None
    threshold: float | None
    detail: str


class TheoryResponse(BaseModel):
    passed: bool
    failures: list[str]
    checks: list[TheoryCheckModel]


class SeedRunModel(BaseModel):
    seed: int
    tir: float
    tar: float
    tbr: float
    mean_glucose: float
    aime: float
    budget_negative_steps: int
    meals: list[list[tuple[int, float]]]
    x: list[float]
    log: list[dict[str, Any]]


class GroupModel(BaseModel):
    label: str
    budget_negative_steps: int
    seeds: list[SeedRunModel]


class ExperimentResponse(BaseModel):
    kind: str
    report: list[dict[str, Any]]
    groups: list[GroupModel]


class HealthResponse(BaseModel):
    status: str
    version: str
