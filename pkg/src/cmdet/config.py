"""Typed experiment configuration loaded from YAML.

Every model forbids unknown keys: a typo in a config file is an error, not a
silently ignored setting.  The same pydantic models double as the request
bodies of the HTTP service.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, TypeVar

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .system import ChannelConfig

__all__ = [
    "ChannelSpec",
    "DetectorSpec",
    "StopRule",
    "ExperimentConfig",
    "OptimizerSpec",
    "TrainJobConfig",
    "CalibrateJobConfig",
    "load_config",
]

ConstellationName = Literal["bpsk", "qpsk", "qam16"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelSpec(_Strict):
    """Complex channel dimensions and fading model."""

    n_tx: int = Field(ge=1)
    n_rx: int = Field(ge=1)
    model: Literal["iid", "column_correlated"] = "iid"
    corr_coeff: float = Field(default=0.0, ge=0.0, lt=1.0)

    def to_channel_config(self, seed: int = 0) -> ChannelConfig:
        return ChannelConfig(
            n_tx=self.n_tx,
            n_rx=self.n_rx,
            model=self.model,
            corr_coeff=self.corr_coeff,
            seed=seed,
        )


class DetectorSpec(_Strict):
    """One detector entry of an experiment.

    cmd runs the untrained init schedule; cmdnet loads trained parameters
    from params_file.  layers defaults to 2*(2*n_tx) for cmd.  label
    overrides the name used in reports (needed when the same detector
    appears twice with different settings).
    """

    name: Literal["mf", "mmse", "cmd", "cmdnet", "map", "io"]
    mode: Literal["multiclass", "binary"] = "multiclass"
    layers: int | None = Field(default=None, ge=1)
    schedule: Literal["default", "splin"] = "default"
    params_file: str | None = None
    label: str | None = None

    @model_validator(mode="after")
    def _check(self) -> "DetectorSpec":
        if self.name == "cmdnet" and self.params_file is None:
            raise ValueError("cmdnet requires params_file")
        if self.label is not None and any(c in self.label for c in ",\n\r"):
            raise ValueError("label must not contain commas or line breaks")
        return self

    @property
    def display_name(self) -> str:
        return self.label if self.label is not None else self.name


class StopRule(_Strict):
    """Stop a grid point once every detector holds min_errors bit errors,
    or max_instances frames have been simulated."""

    min_errors: int = Field(default=1000, ge=1)
    max_instances: int = Field(default=10_000_000, ge=1)


class ExperimentConfig(_Strict):
    """A BER/SER sweep over an Eb/N0 grid."""

    scenario: str = "experiment"
    constellation: ConstellationName
    channel: ChannelSpec
    detectors: list[DetectorSpec] = Field(min_length=1)
    ebn0_grid_db: list[float] = Field(min_length=1)
    stop: StopRule = StopRule()
    batch_size: int = Field(default=1000, ge=1)
    seed: int = 0
    output: str | None = None

    @model_validator(mode="after")
    def _unique_labels(self) -> "ExperimentConfig":
        names = [d.display_name for d in self.detectors]
        if len(set(names)) != len(names):
            raise ValueError("detector labels must be unique; set label on duplicates")
        return self


class OptimizerSpec(_Strict):
    learning_rate: float = Field(default=1e-3, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)


class TrainJobConfig(_Strict):
    """A training run.  batch_size=None resolves to 500 (1500 for qam16)."""

    constellation: ConstellationName
    channel: ChannelSpec
    batch_size: int | None = Field(default=None, ge=1)
    iterations: int = Field(default=10_000, ge=0)
    ebn0_range_db: tuple[float, float] = (4.0, 27.0)
    layers: int | None = Field(default=None, ge=1)
    init_schedule: Literal["default", "splin"] = "default"
    mode: Literal["multiclass", "binary"] = "multiclass"
    seed: int = 0
    checkpoint_every: int = Field(default=0, ge=0)
    optimizer: OptimizerSpec = OptimizerSpec()
    output: str | None = None
    trace_output: str | None = None

    @model_validator(mode="after")
    def _check_range(self) -> "TrainJobConfig":
        lo, hi = self.ebn0_range_db
        if lo > hi:
            raise ValueError("ebn0_range_db must be (low, high) with low <= high")
        return self

    @property
    def resolved_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 1500 if self.constellation == "qam16" else 500


class CalibrateJobConfig(_Strict):
    """Posterior-quality measurement at one operating point.

    The KL-to-exact-marginals column needs the IO oracle, so the system must
    satisfy the exhaustive-search cap; set compute_kl=False to skip it.
    """

    constellation: ConstellationName
    channel: ChannelSpec
    detectors: list[DetectorSpec] = Field(min_length=1)
    ebn0_db: float
    n_instances: int = Field(default=10_000, ge=1)
    batch_size: int = Field(default=1000, ge=1)
    compute_kl: bool = True
    llr_bins: int = Field(default=40, ge=1)
    seed: int = 0
    output: str | None = None

    @model_validator(mode="after")
    def _unique_labels(self) -> "CalibrateJobConfig":
        names = [d.display_name for d in self.detectors]
        if len(set(names)) != len(names):
            raise ValueError("detector labels must be unique; set label on duplicates")
        return self


_TModel = TypeVar("_TModel", bound=BaseModel)


def load_config(path: str | Path, model: type[_TModel]) -> _TModel:
    """Parse a YAML file into the given config model.

    Raises ConfigError for unreadable files, invalid YAML, non-mapping
    documents, unknown keys, or failed field validation.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping at the top level")
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
