"""Posterior-quality metrics: reliability diagram, ECE, KL to exact marginals.

A detector that emits honest posteriors should be right about 80% of the
time whenever it claims 80% confidence.  The reliability diagram bins the
maximum posterior probability into ten deciles and compares mean confidence
with empirical correctness per bin; ECE is the count-weighted mean gap.
Where the exhaustive marginal oracle is affordable, the per-symbol
KL(exact marginal || detector posterior) measures soft-output fidelity
directly.  LLR values are histogrammed for inspection, not asserted.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import OracleLimits, io_marginals_batch
from .config import CalibrateJobConfig
from .constellations import build_constellation
from .detector import LLR_CLAMP
from .montecarlo import build_runner
from .system import sample_batch, substream

__all__ = [
    "ReliabilityBin",
    "CalibrationReport",
    "expected_calibration_error",
    "run_calibration",
    "calibration_to_csv",
    "write_calibration_csv",
    "CALIBRATION_CSV_COLUMNS",
]

N_RELIABILITY_BINS = 10
_KL_CLAMP = 1e-12

CALIBRATION_CSV_COLUMNS = (
    "detector",
    "record",
    "index",
    "lo",
    "hi",
    "count",
    "value_a",
    "value_b",
)


@dataclass(frozen=True)
class ReliabilityBin:
    """One confidence decile: [lo, hi), sample count, mean confidence,
    empirical correctness frequency."""

    lo: float
    hi: float
    count: int
    mean_confidence: float
    accuracy: float


@dataclass
class CalibrationReport:
    detector: str
    ebn0_db: float
    total_symbols: int
    bins: list[ReliabilityBin]
    ece: float
    mean_kl: float | None
    llr_edges: np.ndarray
    llr_counts: np.ndarray


def _bin_confidences(confidence: np.ndarray, correct: np.ndarray) -> list[ReliabilityBin]:
    edges = np.linspace(0.0, 1.0, N_RELIABILITY_BINS + 1)
    # right-closed top bin so confidence 1.0 lands in decile 10
    idx = np.clip(np.digitize(confidence, edges[1:-1], right=False), 0, N_RELIABILITY_BINS - 1)
    bins = []
    for b in range(N_RELIABILITY_BINS):
        mask = idx == b
        count = int(mask.sum())
        if count:
            conf = float(confidence[mask].mean())
            acc = float(correct[mask].mean())
        else:
            conf = 0.0
            acc = 0.0
        bins.append(ReliabilityBin(float(edges[b]), float(edges[b + 1]), count, conf, acc))
    return bins


def expected_calibration_error(bins: list[ReliabilityBin]) -> float:
    """Count-weighted mean |accuracy - confidence| over nonempty bins."""
    total = sum(b.count for b in bins)
    if total == 0:
        return 0.0
    return sum(b.count * abs(b.accuracy - b.mean_confidence) for b in bins) / total


def run_calibration(config: CalibrateJobConfig) -> list[CalibrationReport]:
    """Measure calibration of every configured detector at one Eb/N0.

    KL to the exact marginals is computed when compute_kl is set; the system
    must then satisfy the exhaustive-search cap.
    """
    constellation = build_constellation(config.constellation)
    channel = config.channel.to_channel_config(seed=config.seed)
    limits = OracleLimits()
    runners = [
        build_runner(spec, constellation, config.channel.n_tx, limits)
        for spec in config.detectors
    ]
    n_det = len(runners)

    conf_parts: list[list[np.ndarray]] = [[] for _ in range(n_det)]
    corr_parts: list[list[np.ndarray]] = [[] for _ in range(n_det)]
    kl_sums = np.zeros(n_det)
    llr_edges = np.linspace(-LLR_CLAMP, LLR_CLAMP, config.llr_bins + 1)
    llr_counts = np.zeros((n_det, config.llr_bins), dtype=np.int64)

    remaining = config.n_instances
    batch_idx = 0
    total_symbols = 0
    while remaining > 0:
        batch = min(config.batch_size, remaining)
        rng = substream(config.seed, batch_idx)
        h, y, x_idx, sigma2 = sample_batch(channel, constellation, config.ebn0_db, rng, batch)
        if config.compute_kl:
            log_io = io_marginals_batch(h, y, sigma2, constellation, limits)  # (B,K,N)
            p_io = np.exp(log_io)
        for r_idx, runner in enumerate(runners):
            out = runner.run(h, y, sigma2)
            posterior = out["posterior"]  # (B,N,K)
            conf_parts[r_idx].append(posterior.max(axis=2).ravel())
            corr_parts[r_idx].append(
                (out["hard_indices"] == x_idx).ravel().astype(np.float64)
            )
            if config.compute_kl:
                q = np.transpose(posterior, (0, 2, 1))  # (B,K,N)
                kl = p_io * (np.log(np.maximum(p_io, _KL_CLAMP)) - np.log(np.maximum(q, _KL_CLAMP)))
                kl_sums[r_idx] += float(kl.sum())
            counts, _ = np.histogram(out["llr"].ravel(), bins=llr_edges)
            llr_counts[r_idx] += counts
        total_symbols += batch * 2 * config.channel.n_tx
        remaining -= batch
        batch_idx += 1

    reports = []
    for r_idx, runner in enumerate(runners):
        confidence = np.concatenate(conf_parts[r_idx])
        correct = np.concatenate(corr_parts[r_idx])
        bins = _bin_confidences(confidence, correct)
        reports.append(
            CalibrationReport(
                detector=runner.name,
                ebn0_db=float(config.ebn0_db),
                total_symbols=total_symbols,
                bins=bins,
                ece=expected_calibration_error(bins),
                mean_kl=float(kl_sums[r_idx] / total_symbols) if config.compute_kl else None,
                llr_edges=llr_edges,
                llr_counts=llr_counts[r_idx],
            )
        )
    return reports


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # plain float repr even for numpy scalars
    return str(value)


def calibration_to_csv(reports: list[CalibrationReport]) -> str:
    """Long-format CSV: reliability_bin, llr_bin and summary rows per detector.

    reliability_bin: value_a = mean confidence, value_b = accuracy.
    llr_bin: count of LLR values in [lo, hi).
    summary: value_a = ECE, value_b = mean KL to exact marginals (blank if
    not computed); count = total symbols.
    """
    lines = [",".join(CALIBRATION_CSV_COLUMNS)]

    def row(detector, record, index, lo, hi, count, va, vb):
        lines.append(
            ",".join(_fmt(v) for v in (detector, record, index, lo, hi, count, va, vb))
        )

    for rep in reports:
        for i, b in enumerate(rep.bins):
            row(rep.detector, "reliability_bin", i, b.lo, b.hi, b.count, b.mean_confidence, b.accuracy)
        for i in range(len(rep.llr_counts)):
            row(
                rep.detector,
                "llr_bin",
                i,
                float(rep.llr_edges[i]),
                float(rep.llr_edges[i + 1]),
                int(rep.llr_counts[i]),
                None,
                None,
            )
        row(rep.detector, "summary", 0, None, None, rep.total_symbols, rep.ece, rep.mean_kl)
    return "\n".join(lines) + "\n"


def write_calibration_csv(reports: list[CalibrationReport], path: str | Path) -> None:
    Path(path).write_text(calibration_to_csv(reports))
