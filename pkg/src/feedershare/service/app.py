"""FastAPI application exposing the simulator to multiple clients.

The service keeps no state between requests: every request carries its
config and data source (inline CSV, server-local path, or synthetic
spec), so concurrent clients can evaluate different communities against
one running instance.
"""

from __future__ import annotations

import io

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..ingestion import IngestionError, generate_synthetic, write_timeseries
from ..model import ConfigError, validate_config
from ..reporting import OutcomePatch, run_combinations, verify_scenario
from .schemas import (
    CheckModel,
    CombinationModel,
    ConfigModel,
    HealthResponse,
    SimulateRequest,
    SimulateResponse,
    SyntheticResponse,
    SyntheticSpecModel,
    ValidateRequest,
    ValidateResponse,
    VerifyRequest,
    VerifyResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="feedershare",
        version=__version__,
        description="Energy-community surplus allocation simulator",
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse()

    @app.post("/config/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest) -> ValidateResponse:
        violations = validate_config(request.config.to_config())
        return ValidateResponse(valid=not violations, violations=violations)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate_endpoint(request: SimulateRequest) -> SimulateResponse:
        profiles, config = _resolve(request)
        reports = run_combinations(profiles, config, request.combos(config))
        first = next(iter(profiles.values()))
        return SimulateResponse(
            intervals=len(first),
            config=ConfigModel.from_config(config),
            combinations=[CombinationModel.from_report(r) for r in reports],
        )

    @app.post("/verify", response_model=VerifyResponse)
    def verify_endpoint(request: VerifyRequest) -> VerifyResponse:
        profiles, config = _resolve(request)
        patch = None
        if request.corrupt is not None:
            patch = OutcomePatch(
                interval=request.corrupt.interval,
                participant=request.corrupt.participant,
                field=request.corrupt.field,
                delta_kwh=request.corrupt.delta_kwh,
            )
        checks = verify_scenario(profiles, config, request.combos(config), patch=patch)
        return VerifyResponse(
            passed=all(c.passed for c in checks),
            checks=[CheckModel.from_check(c) for c in checks],
        )

    @app.post("/synthetic", response_model=SyntheticResponse)
    def synthetic_endpoint(request: SyntheticSpecModel) -> SyntheticResponse:
        tariff = request.tariff.to_tariff() if request.tariff is not None else None
        try:
            profiles, config = generate_synthetic(request.to_spec(), tariff=tariff)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        buffer = io.StringIO()
        write_timeseries(profiles, buffer)
        return SyntheticResponse(
            config=ConfigModel.from_config(config), csv_text=buffer.getvalue()
        )

    def _resolve(request: SimulateRequest):
        try:
            return request.resolve()
        except IngestionError as exc:
            raise HTTPException(status_code=400, detail={"errors": exc.errors}) from exc
        except (ConfigError, FileNotFoundError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    return app


app = create_app()


def serve(host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    serve()
