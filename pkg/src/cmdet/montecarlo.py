"""Monte Carlo error-rate measurement over an Eb/N0 grid.

Every grid point draws instance batches from a counter-based stream keyed by
(seed, point_index, batch_index), so results are reproducible and every
detector is evaluated on exactly the same realizations.  A point stops once
all detectors have accumulated the configured number of bit errors, or the
instance cap is hit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .baselines import (
    OracleLimits,
    io_marginals_batch,
    map_indices_batch,
    matched_filter_indices,
    mmse_soft_batch,
)
from .config import DetectorSpec, ExperimentConfig
from .constellations import Constellation, build_constellation
from .detector import LLR_CLAMP, CmdParams, _llr_from_log_posterior, detect_batch
from .errors import ConfigError
from .system import ChannelConfig, sample_batch, substream
from .training import init_params, load_params

__all__ = [
    "PointResult",
    "MonteCarloReport",
    "DetectorRunner",
    "build_runner",
    "run_ber_sweep",
    "report_to_csv",
    "write_report_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "detector",
    "ebn0_db",
    "bit_errors",
    "symbol_errors",
    "frame_errors",
    "instances",
    "total_bits",
    "total_symbols",
    "ber",
    "ser",
    "fer",
    "ber_ci95",
    "ser_ci95",
    "fer_ci95",
)


@dataclass(frozen=True)
class PointResult:
    """Error counts and rates of one detector at one grid point."""

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


@dataclass
class MonteCarloReport:
    scenario: str
    constellation: str
    seed: int
    points: list[PointResult]


class DetectorRunner:
    """A named detector operating on flat instance batches.

    run(h, y, sigma2) returns a dict with hard_indices (B,N), posterior
    (B,N,K) and llr (B,N,bits); hard-decision detectors report one-hot
    posteriors and saturated LLRs.
    """

    def __init__(self, name: str, fn: Callable, soft: bool):
        self.name = name
        self._fn = fn
        self.soft = soft

    def run(self, h: np.ndarray, y: np.ndarray, sigma2: np.ndarray) -> dict:
        return self._fn(h, y, sigma2)


def _onehot_outputs(idx: np.ndarray, constellation: Constellation) -> dict:
    b, n = idx.shape
    k = constellation.size
    posterior = np.zeros((b, n, k))
    np.put_along_axis(posterior, idx[:, :, None], 1.0, axis=2)
    bits = constellation.bit_labels[idx].astype(np.float64)  # (B,N,bits)
    llr = np.where(bits > 0.5, LLR_CLAMP, -LLR_CLAMP)
    return {"hard_indices": idx, "posterior": posterior, "llr": llr}


def build_runner(
    spec: DetectorSpec,
    constellation: Constellation,
    n_tx: int,
    limits: OracleLimits | None = None,
) -> DetectorRunner:
    """Instantiate one detector from its config entry.

    Raises ConfigError for a missing/incompatible parameter file.
    """
    limits = limits or OracleLimits()
    k = constellation.size

    if spec.name == "mf":

        def run_mf(h, y, sigma2):
            return _onehot_outputs(matched_filter_indices(h, y, constellation), constellation)

        return DetectorRunner(spec.display_name, run_mf, soft=False)

    if spec.name == "mmse":

        def run_mmse(h, y, sigma2):
            _, log_q = mmse_soft_batch(h, y, sigma2, constellation)
            return {
                "hard_indices": np.argmax(log_q, axis=1),
                "posterior": np.transpose(np.exp(log_q), (0, 2, 1)),
                "llr": _llr_from_log_posterior(log_q, constellation.bit_labels),
            }

        return DetectorRunner(spec.display_name, run_mmse, soft=True)

    if spec.name == "map":

        def run_map(h, y, sigma2):
            return _onehot_outputs(
                map_indices_batch(h, y, sigma2, constellation, limits), constellation
            )

        return DetectorRunner(spec.display_name, run_map, soft=False)

    if spec.name == "io":

        def run_io(h, y, sigma2):
            log_q = io_marginals_batch(h, y, sigma2, constellation, limits)
            return {
                "hard_indices": np.argmax(log_q, axis=1),
                "posterior": np.transpose(np.exp(log_q), (0, 2, 1)),
                "llr": _llr_from_log_posterior(log_q, constellation.bit_labels),
            }

        return DetectorRunner(spec.display_name, run_io, soft=True)

    # cmd / cmdnet
    if spec.name == "cmdnet":
        params, info = load_params(spec.params_file)
        if info["k"] != k:
            raise ConfigError(
                f"parameter file {spec.params_file} was trained for k={info['k']}, "
                f"but the configured constellation has k={k}"
            )
    else:
        layers = spec.layers if spec.layers is not None else 2 * (2 * n_tx)
        params = init_params(layers, k, spec.schedule)
    mode = spec.mode

    def run_cmd(h, y, sigma2, params=params, mode=mode):
        out = detect_batch(h, y, sigma2, constellation, params, mode)
        return {
            "hard_indices": out["hard_indices"],
            "posterior": out["posterior"],
            "llr": out["llr"],
        }

    return DetectorRunner(spec.display_name, run_cmd, soft=True)


def _point_result(
    name: str,
    ebn0_db: float,
    bit_errors: int,
    symbol_errors: int,
    frame_errors: int,
    instances: int,
    n_symbols: int,
    bits_per_symbol: int,
) -> PointResult:
    total_symbols = instances * n_symbols
    total_bits = total_symbols * bits_per_symbol
    ber = float(bit_errors / total_bits)
    ser = float(symbol_errors / total_symbols)
    fer = float(frame_errors / instances)
    return PointResult(
        detector=name,
        ebn0_db=float(ebn0_db),
        bit_errors=int(bit_errors),
        symbol_errors=int(symbol_errors),
        frame_errors=int(frame_errors),
        instances=int(instances),
        total_bits=int(total_bits),
        total_symbols=int(total_symbols),
        ber=ber,
        ser=ser,
        fer=fer,
        ber_ci95=_ci95(ber, total_bits),
        ser_ci95=_ci95(ser, total_symbols),
        fer_ci95=_ci95(fer, instances),
    )


def _ci95(rate: float, trials: int) -> float:
    """Normal-approximation 95% confidence half-width of a binomial rate."""
    return 1.96 * float(np.sqrt(rate * (1.0 - rate) / trials))


def run_ber_sweep(config: ExperimentConfig) -> MonteCarloReport:
    """Measure BER/SER/FER for every (detector, grid point) of the config."""
    constellation = build_constellation(config.constellation)
    channel = config.channel.to_channel_config(seed=config.seed)
    runners = [
        build_runner(spec, constellation, config.channel.n_tx) for spec in config.detectors
    ]
    labels = constellation.bit_labels
    bits_per_symbol = constellation.bits_per_symbol
    n_symbols = 2 * config.channel.n_tx
    points: list[PointResult] = []

    for p_idx, ebn0 in enumerate(config.ebn0_grid_db):
        bit_err = np.zeros(len(runners), dtype=np.int64)
        sym_err = np.zeros(len(runners), dtype=np.int64)
        frm_err = np.zeros(len(runners), dtype=np.int64)
        instances = 0
        batch_idx = 0
        while True:
            batch = min(config.batch_size, config.stop.max_instances - instances)
            rng = substream(config.seed, p_idx, batch_idx)
            h, y, x_idx, sigma2 = sample_batch(channel, constellation, ebn0, rng, batch)
            true_bits = labels[x_idx]  # (B, N, bits)
            for r_idx, runner in enumerate(runners):
                out = runner.run(h, y, sigma2)
                hard = out["hard_indices"]
                sym_wrong = hard != x_idx
                sym_err[r_idx] += int(sym_wrong.sum())
                frm_err[r_idx] += int(sym_wrong.any(axis=1).sum())
                bit_err[r_idx] += int((labels[hard] != true_bits).sum())
            instances += batch
            batch_idx += 1
            if instances >= config.stop.max_instances:
                break
            if bit_err.min() >= config.stop.min_errors:
                break
        for r_idx, runner in enumerate(runners):
            points.append(
                _point_result(
                    runner.name,
                    ebn0,
                    bit_err[r_idx],
                    sym_err[r_idx],
                    frm_err[r_idx],
                    instances,
                    n_symbols,
                    bits_per_symbol,
                )
            )

    return MonteCarloReport(
        scenario=config.scenario,
        constellation=config.constellation,
        seed=config.seed,
        points=points,
    )


def _fmt(value) -> str:
    """Locale-free cell formatting; floats use repr for exact round-trips."""
    if isinstance(value, float):
        return repr(float(value))  # plain float repr even for numpy scalars
    return str(value)


def report_to_csv(report: MonteCarloReport) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for p in report.points:
        lines.append(",".join(_fmt(getattr(p, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def write_report_csv(report: MonteCarloReport, path: str | Path) -> None:
    Path(path).write_text(report_to_csv(report))
