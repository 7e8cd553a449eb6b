"""FastAPI service wrapping the benchmark package.

Runs execute synchronously inside the request; they are checkpointed per
cell, so an interrupted request can simply be re-sent.
"""

from __future__ import annotations

import math
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__, dgp, runner
from ..errors import CateBenchError, ConfigError
from .schemas import (
    HealthResponse,
    RenderRequest,
    RenderResponse,
    ResultRow,
    RunRequest,
    RunResponse,
    ScenarioInfo,
    SimulateRequest,
    SimulateResponse,
)


def _nan_to_none(value: float) -> float | None:
    # JSON has no NaN; a cell with zero successful replications reports
    # null metrics.
    return None if isinstance(value, float) and math.isnan(value) else value


def create_app() -> FastAPI:
    app = FastAPI(title="catebench", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/scenarios", response_model=list[ScenarioInfo])
    def scenarios() -> list[ScenarioInfo]:
        return [ScenarioInfo(**sc.to_dict()) for sc in dgp.catalog()]

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(request: SimulateRequest) -> SimulateResponse:
        try:
            sc = dgp.scenario(request.scenario)
            if request.linear_effect_mode not in dgp.LINEAR_EFFECT_MODES:
                raise ValueError(f"unknown linear_effect_mode {request.linear_effect_mode!r}")
            train, _ = dgp.simulate(sc, request.seed, request.linear_effect_mode)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (ValueError, CateBenchError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        path = Path(request.out_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        dgp.export_csv(train, path)
        columns = [f"x{j + 1}" for j in range(train.p)] + ["d", "y", "tau_true", "e_true"]
        return SimulateResponse(path=str(path), rows=train.n, columns=columns)

    @app.post("/runs", response_model=RunResponse)
    def runs(request: RunRequest) -> RunResponse:
        payload = request.model_dump()
        if payload.get("strategies") is None:
            payload.pop("strategies")
        try:
            result = runner.run(payload)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=exc.errors) from exc
        rows = [
            ResultRow(
                scenario=r["scenario"], learner=r["learner"], estimator=r["estimator"],
                mean_mse=_nan_to_none(r["mean_mse"]),
                mean_abs_bias=_nan_to_none(r["mean_abs_bias"]),
                mean_sd=_nan_to_none(r["mean_sd"]),
                median_mse=_nan_to_none(r["median_mse"]),
                replications=r["replications"],
            )
            for r in result.rows
        ]
        return RunResponse(
            output_dir=result.output_dir,
            results_path=result.results_path,
            runlog_path=result.runlog_path,
            config_echo_path=result.config_echo_path,
            curve_path=result.curve_path,
            cells=result.cells,
            total_failures=result.total_failures,
            failed_cells=result.failed_cells,
            ok=result.ok,
            rows=rows,
        )

    @app.post("/render", response_model=RenderResponse)
    def render(request: RenderRequest) -> RenderResponse:
        if not Path(request.results_csv).exists():
            raise HTTPException(status_code=404, detail=f"no such file: {request.results_csv}")
        try:
            markdown = runner.render_table(request.results_csv, layout=request.layout)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        path = None
        if request.out_path:
            out = Path(request.out_path)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(markdown)
            path = str(out)
        return RenderResponse(markdown=markdown, path=path)

    return app
