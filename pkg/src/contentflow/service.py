"""FastAPI service exposing scenario execution over HTTP.

Endpoints accept a scenario config as text and return metrics, traces and
invariant findings. The CLI is a thin client of this app.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .scenarios import ConfigError, metrics_csv, parse_config, run_config, sweep
from .scenarios.runner import RunResult


class RunRequest(BaseModel):
    config: str
    trace_packets: bool = True


class RequestMetricsModel(BaseModel):
    request_id: int
    client: str
    content: str
    hit: Optional[bool] = None
    bytes: int
    delay_units: Optional[int] = None
    completed: bool
    observed_sources: List[Tuple[str, int]] = Field(default_factory=list)
    delay_terms: Optional[Dict[str, int]] = None
    analytic_delay: Optional[int] = None


class RunResponse(BaseModel):
    requests: List[RequestMetricsModel]
    violations: List[str]
    trace: List[str]
    trace_hash: str
    controller: dict
    csv: str


class SweepRequest(BaseModel):
    config: str
    sizes: List[int]


class SweepRowModel(BaseModel):
    size: int
    miss_delay: Optional[int] = None
    hit_delay: Optional[int] = None
    flagged: bool = False


class SweepResponse(BaseModel):
    rows: List[SweepRowModel]


class ValidateRequest(BaseModel):
    config: str


class ValidateResponse(BaseModel):
    valid: bool
    error: Optional[str] = None
    line: Optional[int] = None


def _to_response(result: RunResult, scenario: str = "run") -> RunResponse:
    requests = []
    for m in result.metrics:
        model = RequestMetricsModel(
            request_id=m.request_id, client=m.client, content=m.content,
            hit=m.hit, bytes=m.bytes, delay_units=m.delay,
            completed=m.completed, observed_sources=m.observed_sources)
        if m.breakdown is not None:
            model.delay_terms = dict(m.breakdown.terms)
            model.analytic_delay = m.breakdown.analytic_total
        requests.append(model)
    return RunResponse(
        requests=requests,
        violations=result.violations,
        trace=result.trace.lines(),
        trace_hash=result.trace_hash,
        controller=result.controller_dump,
        csv=metrics_csv(result.metrics, scenario=scenario),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="contentflow", version=__version__)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        try:
            config = parse_config(request.config)
            result = run_config(config, trace_packets=request.trace_packets)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _to_response(result)

    @app.post("/sweep", response_model=SweepResponse)
    def run_sweep(request: SweepRequest) -> SweepResponse:
        try:
            config = parse_config(request.config)
            rows = sweep(config, request.sizes)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return SweepResponse(rows=[
            SweepRowModel(size=r.size, miss_delay=r.miss_delay,
                          hit_delay=r.hit_delay, flagged=r.flagged)
            for r in rows])

    @app.post("/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest) -> ValidateResponse:
        try:
            config = parse_config(request.config)
            config.validate()
        except ConfigError as exc:
            return ValidateResponse(valid=False, error=str(exc), line=exc.line_no)
        return ValidateResponse(valid=True)

    return app


app = create_app()
