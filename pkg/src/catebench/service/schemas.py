"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ScenarioInfo(BaseModel):
    id: str
    n: int
    p: int
    propensity: str
    effect: str
    c: float
    test_size: int
    corr_seed: int
    test_seed: int


class SimulateRequest(BaseModel):
    scenario: str
    seed: int = 0
    out_path: str
    linear_effect_mode: str = "indicator_x2"


class SimulateResponse(BaseModel):
    path: str
    rows: int
    columns: list[str]


class RunRequest(BaseModel):
    """Mirrors the runner's configuration record."""

    scenarios: list[str] = Field(default_factory=lambda: list("ABCDEFGHIJKL"))
    learners: list[str] = Field(default_factory=lambda: ["t", "dr", "r", "x"])
    strategies: list[str] | None = None
    replications: int = 30
    b_iterations: int = 20
    seed: int = 0
    exclude_linear: bool = False
    output_dir: str = "catebench-run"
    workers: int = 1
    test_size: int = 2000
    median_mse_mode: str = "replications"
    linear_effect_mode: str = "indicator_x2"
    emit_median_curve: bool = False
    audit_leakage: bool = False
    learner_overrides: dict = Field(default_factory=dict)


class ResultRow(BaseModel):
    scenario: str
    learner: str
    estimator: str
    mean_mse: float | None
    mean_abs_bias: float | None
    mean_sd: float | None
    median_mse: float | None
    replications: int


class RunResponse(BaseModel):
    output_dir: str
    results_path: str
    runlog_path: str
    config_echo_path: str
    curve_path: str | None
    cells: int
    total_failures: int
    failed_cells: list[str]
    ok: bool
    rows: list[ResultRow]


class RenderRequest(BaseModel):
    results_csv: str
    layout: str = "by-learner"
    out_path: str | None = None


class RenderResponse(BaseModel):
    markdown: str
    path: str | None
