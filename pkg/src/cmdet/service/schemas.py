"""Request/response bodies of the HTTP service.

Experiment-shaped requests reuse the config models directly; the schemas
here cover the endpoints that have no file-based counterpart.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..config import ConstellationName


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HealthResponse(_Strict):
    status: str
    package: str
    version: str


class DetectRequest(_Strict):
    """One observation to detect.

    h_real is the real-valued channel (2Nr x 2Nt), y_real the received
    vector.  For cmd, layers/schedule pick the init schedule; explicit
    temperatures/step_sizes override it (and are the way to use trained
    parameters over HTTP).
    """

    constellation: ConstellationName
    h_real: list[list[float]]
    y_real: list[float]
    sigma2: float = Field(gt=0.0)
    detector: Literal["cmd", "mf", "mmse", "map", "io"] = "cmd"
    mode: Literal["multiclass", "binary"] = "multiclass"
    layers: int | None = Field(default=None, ge=1)
    schedule: Literal["default", "splin"] = "default"
    temperatures: list[float] | None = None
    step_sizes: list[float] | None = None


class DetectResponse(_Strict):
    x_indices: list[int]
    x_hard: list[float]
    x_soft: list[float]
    posterior: list[list[float]]
    llr: list[list[float]]


class ComplexityRequest(_Strict):
    n_tx: int = Field(ge=1)
    n_rx: int = Field(ge=1)
    k: int = Field(ge=2)
    layers: int | None = Field(default=None, ge=1)
    detectors: list[str] | None = None


class ComplexityRow(_Strict):
    detector: str
    mops: int
    per_layer: int | None


class ComplexityResponse(_Strict):
    rows: list[ComplexityRow]


class PointRow(_Strict):
    detector: str
    ebn0_db: float
    bit_errors: int
    symbol_errors: int
    frame_errors: int
    instances: int
    total_bits: int
    total_symbols: int
    ber: float
    ser: float
    fer: float
    ber_ci95: float
    ser_ci95: float
    fer_ci95: float


class SimulateResponse(_Strict):
    scenario: str
    constellation: str
    seed: int
    points: list[PointRow]
    csv: str


class ReliabilityBinRow(_Strict):
    lo: float
    hi: float
    count: int
    mean_confidence: float
    accuracy: float


class CalibrationRow(_Strict):
    detector: str
    ebn0_db: float
    total_symbols: int
    bins: list[ReliabilityBinRow]
    ece: float
    mean_kl: float | None


class CalibrateResponse(_Strict):
    reports: list[CalibrationRow]
    csv: str


class TrainResponse(_Strict):
    temperatures: list[float]
    step_sizes: list[float]
    iterations: int
    first_loss: float | None
    final_loss: float | None
    mean_loss_first_100: float | None
    mean_loss_last_100: float | None
    params_file: str | None


class SelftestCheck(_Strict):
    name: str
    passed: bool
    detail: str


class SelftestResponse(_Strict):
    ok: bool
    checks: list[SelftestCheck]
