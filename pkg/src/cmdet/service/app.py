"""FastAPI application exposing detection, simulation, training and reports.

The service is a thin adapter: every endpoint validates its body with the
shared pydantic models, calls the corresponding core function, and reshapes
arrays into JSON.  Domain errors surface as HTTP 400, numerical failures as
HTTP 500.
"""

from __future__ import annotations

from importlib import metadata

import numpy as np
from fastapi import FastAPI, HTTPException

from ..baselines import (
    SearchSizeError,
    io_bruteforce,
    map_bruteforce,
    matched_filter,
    mmse,
)
from ..calibration import calibration_to_csv, run_calibration
from ..complexity import DETECTOR_NAMES, complexity_table
from ..config import CalibrateJobConfig, ExperimentConfig, TrainJobConfig
from ..constellations import build_constellation
from ..detector import CmdParams, detect
from ..errors import ConfigError, NumericalError
from ..montecarlo import report_to_csv, run_ber_sweep
from ..selftest import run_selftest
from ..system import SystemInstance
from ..training import (
    OptimizerConfig,
    TrainConfig,
    init_params,
    save_params,
    train,
)
from . import schemas


def _version() -> str:
    try:
        return metadata.version("cmdet")
    except metadata.PackageNotFoundError:
        return "unknown"


def create_app() -> FastAPI:
    app = FastAPI(title="cmdet", version=_version())

    @app.exception_handler(ConfigError)
    async def _config_error(request, exc):
        raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", package="cmdet", version=_version())

    @app.post("/detect", response_model=schemas.DetectResponse)
    def detect_endpoint(req: schemas.DetectRequest) -> schemas.DetectResponse:
        constellation = build_constellation(req.constellation)
        h = np.asarray(req.h_real, dtype=np.float64)
        y = np.asarray(req.y_real, dtype=np.float64)
        if h.ndim != 2 or y.ndim != 1 or h.shape[0] != y.shape[0]:
            raise HTTPException(status_code=400, detail="h_real must be 2-D with rows matching y_real")
        n = h.shape[1]
        instance = SystemInstance(
            h_real=h,
            y_real=y,
            sigma2=req.sigma2,
            x_true=np.zeros(n),
            x_indices=np.zeros(n, dtype=np.int64),
        )
        try:
            if req.detector == "mf":
                result = matched_filter(instance, constellation)
            elif req.detector == "mmse":
                result = mmse(instance, constellation)
            elif req.detector == "map":
                result = map_bruteforce(instance, constellation)
            elif req.detector == "io":
                result = io_bruteforce(instance, constellation)
            else:
                if req.temperatures is not None or req.step_sizes is not None:
                    if req.temperatures is None or req.step_sizes is None:
                        raise HTTPException(
                            status_code=400,
                            detail="temperatures and step_sizes must be given together",
                        )
                    try:
                        params = CmdParams(
                            np.asarray(req.temperatures), np.asarray(req.step_sizes)
                        )
                    except ValueError as exc:
                        raise HTTPException(status_code=400, detail=str(exc)) from exc
                else:
                    layers = req.layers if req.layers is not None else 2 * n
                    params = init_params(layers, constellation.size, req.schedule)
                result = detect(instance, constellation, params, mode=req.mode)
        except SearchSizeError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.DetectResponse(
            x_indices=[int(i) for i in result.x_indices],
            x_hard=[float(v) for v in result.x_hard],
            x_soft=[float(v) for v in result.x_soft],
            posterior=[[float(p) for p in row] for row in result.posterior],
            llr=[[float(v) for v in row] for row in result.llr],
        )

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate_endpoint(config: ExperimentConfig) -> schemas.SimulateResponse:
        try:
            report = run_ber_sweep(config)
        except SearchSizeError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.SimulateResponse(
            scenario=report.scenario,
            constellation=report.constellation,
            seed=report.seed,
            points=[schemas.PointRow(**vars(p)) for p in report.points],
            csv=report_to_csv(report),
        )

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate_endpoint(config: CalibrateJobConfig) -> schemas.CalibrateResponse:
        try:
            reports = run_calibration(config)
        except SearchSizeError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        rows = [
            schemas.CalibrationRow(
                detector=r.detector,
                ebn0_db=r.ebn0_db,
                total_symbols=r.total_symbols,
                bins=[schemas.ReliabilityBinRow(**vars(b)) for b in r.bins],
                ece=r.ece,
                mean_kl=r.mean_kl,
            )
            for r in reports
        ]
        return schemas.CalibrateResponse(reports=rows, csv=calibration_to_csv(reports))

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(config: TrainJobConfig) -> schemas.TrainResponse:
        constellation = build_constellation(config.constellation)
        train_cfg = TrainConfig(
            batch_size=config.resolved_batch_size,
            iterations=config.iterations,
            ebn0_range_db=config.ebn0_range_db,
            layers=config.layers,
            init_schedule=config.init_schedule,
            seed=config.seed,
            mode=config.mode,
            checkpoint_every=config.checkpoint_every,
            optimizer=OptimizerConfig(
                learning_rate=config.optimizer.learning_rate,
                beta1=config.optimizer.beta1,
                beta2=config.optimizer.beta2,
                epsilon=config.optimizer.epsilon,
            ),
        )
        try:
            params, trace = train(
                train_cfg, constellation, config.channel.to_channel_config(seed=config.seed)
            )
        except NumericalError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        if config.output:
            save_params(
                params,
                config.output,
                k=constellation.size,
                metadata={"config": config.model_dump(), "seed": config.seed},
            )
        losses = trace.losses
        return schemas.TrainResponse(
            temperatures=[float(t) for t in params.temperatures],
            step_sizes=[float(d) for d in params.step_sizes],
            iterations=len(losses),
            first_loss=float(losses[0]) if len(losses) else None,
            final_loss=float(losses[-1]) if len(losses) else None,
            mean_loss_first_100=float(losses[:100].mean()) if len(losses) else None,
            mean_loss_last_100=float(losses[-100:].mean()) if len(losses) else None,
            params_file=config.output,
        )

    @app.post("/complexity", response_model=schemas.ComplexityResponse)
    def complexity_endpoint(req: schemas.ComplexityRequest) -> schemas.ComplexityResponse:
        detectors = tuple(req.detectors) if req.detectors else DETECTOR_NAMES
        try:
            rows = complexity_table(req.n_tx, req.n_rx, req.k, req.layers, detectors)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.ComplexityResponse(rows=[schemas.ComplexityRow(**r) for r in rows])

    @app.get("/selftest", response_model=schemas.SelftestResponse)
    def selftest_endpoint() -> schemas.SelftestResponse:
        result = run_selftest(verbose=False)
        return schemas.SelftestResponse(
            ok=result.ok,
            checks=[schemas.SelftestCheck(**vars(c)) for c in result.checks],
        )

    return app


app = create_app()
