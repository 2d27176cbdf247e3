"""Linear observation model: channel sampling, noise, and the complex-to-real transform.

The complex model y = Hx + n with n ~ CN(0, sigma2*I) is mapped to its
real-valued equivalent of twice the dimension.  Per real dimension the noise
variance is sigma2/2; all downstream detectors work purely on the real form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellations import Constellation

__all__ = [
    "ChannelConfig",
    "SystemInstance",
    "complex_to_real",
    "sigma2_from_ebn0",
    "ebn0_from_sigma2",
    "sample_channel",
    "sample_instance",
    "sample_batch",
    "substream",
]

_MODELS = ("iid", "column_correlated")


def substream(seed: int, *counters: int) -> np.random.Generator:
    """Counter-based RNG stream: one generator per (seed, counter...) tuple."""
    return np.random.default_rng([int(seed), *[int(c) for c in counters]])


@dataclass(frozen=True)
class ChannelConfig:
    """Dimensions and fading model of the complex channel."""

    n_tx: int
    n_rx: int
    model: str = "iid"
    corr_coeff: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.model not in _MODELS:
            raise ValueError(f"unknown channel model {self.model!r}; choose from {_MODELS}")
        if not 0.0 <= self.corr_coeff < 1.0:
            raise ValueError("corr_coeff must lie in [0, 1)")


@dataclass(frozen=True)
class SystemInstance:
    """One realization of the real-valued observation model."""

    h_real: np.ndarray  # 2Nr x 2Nt
    y_real: np.ndarray  # 2Nr
    sigma2: float  # complex noise variance; sigma2/2 per real dimension
    x_true: np.ndarray  # 2Nt levels
    x_indices: np.ndarray  # 2Nt class indices

    @property
    def n_symbols(self) -> int:
        return self.h_real.shape[1]


def complex_to_real(h_c: np.ndarray) -> np.ndarray:
    """Stack a complex matrix into its real block form [[Re, -Im], [Im, Re]]."""
    h_c = np.asarray(h_c, dtype=np.complex128)
    if not np.all(np.isfinite(h_c)):
        raise ValueError("channel matrix has non-finite entries")
    return np.block([[h_c.real, -h_c.imag], [h_c.imag, h_c.real]])


def sigma2_from_ebn0(ebn0_db: float, constellation: Constellation) -> float:
    """Complex noise variance for a given Eb/N0 in dB.

    Convention: Eb/N0 = 10*log10(1/sigma2) - 10*log10(log2(K_complex)),
    with unit average complex symbol energy.
    """
    bits = np.log2(constellation.k_complex)
    return float(10.0 ** (-(ebn0_db + 10.0 * np.log10(bits)) / 10.0))


def ebn0_from_sigma2(sigma2: float, constellation: Constellation) -> float:
    """Inverse of sigma2_from_ebn0."""
    bits = np.log2(constellation.k_complex)
    return float(-10.0 * np.log10(sigma2) - 10.0 * np.log10(bits))


def _corr_sqrt(n_rx: int, corr_coeff: float) -> np.ndarray:
    """Cholesky factor of the exponential receive correlation R_ij = c^|i-j|."""
    idx = np.arange(n_rx)
    r = corr_coeff ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(r)


def _sample_channel_complex(cfg: ChannelConfig, rng: np.random.Generator, batch: int) -> np.ndarray:
    """Draw complex channels (batch, Nr, Nt) with taps CN(0, 1/Nr)."""
    scale = np.sqrt(1.0 / (2.0 * cfg.n_rx))
    h = scale * (
        rng.standard_normal((batch, cfg.n_rx, cfg.n_tx))
        + 1j * rng.standard_normal((batch, cfg.n_rx, cfg.n_tx))
    )
    if cfg.model == "column_correlated" and cfg.corr_coeff > 0.0:
        h = np.einsum("rs,bst->brt", _corr_sqrt(cfg.n_rx, cfg.corr_coeff), h)
    return h


def _to_real_batch(h_c: np.ndarray) -> np.ndarray:
    batch, n_rx, n_tx = h_c.shape
    h = np.empty((batch, 2 * n_rx, 2 * n_tx))
    h[:, :n_rx, :n_tx] = h_c.real
    h[:, :n_rx, n_tx:] = -h_c.imag
    h[:, n_rx:, :n_tx] = h_c.imag
    h[:, n_rx:, n_tx:] = h_c.real
    return h


def sample_channel(cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw one channel and return its real-valued equivalent (2Nr x 2Nt)."""
    return _to_real_batch(_sample_channel_complex(cfg, rng, 1))[0]


def sample_batch(
    cfg: ChannelConfig,
    constellation: Constellation,
    ebn0_db: float | np.ndarray,
    rng: np.random.Generator,
    batch: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw a batch of model realizations as flat arrays.

    Returns (h, y, x_indices, sigma2) with shapes (B, 2Nr, 2Nt), (B, 2Nr),
    (B, 2Nt) and (B,).  ebn0_db may be a scalar or one value per element.
    """
    h = _to_real_batch(_sample_channel_complex(cfg, rng, batch))
    n = 2 * cfg.n_tx
    m = 2 * cfg.n_rx
    if np.ndim(ebn0_db):
        ebn0 = np.asarray(ebn0_db, dtype=np.float64)
        if ebn0.shape != (batch,):
            raise ValueError("per-element ebn0_db must have length batch")
        sigma2 = np.array([sigma2_from_ebn0(e, constellation) for e in ebn0])
    else:
        sigma2 = np.full(batch, sigma2_from_ebn0(float(ebn0_db), constellation))
    x_idx = rng.choice(constellation.size, size=(batch, n), p=constellation.priors)
    x = constellation.levels[x_idx]
    noise = rng.standard_normal((batch, m)) * np.sqrt(sigma2 / 2.0)[:, None]
    y = np.einsum("bmn,bn->bm", h, x) + noise
    return h, y, x_idx, sigma2


def sample_instance(
    cfg: ChannelConfig,
    constellation: Constellation,
    ebn0_db: float,
    rng: np.random.Generator,
) -> SystemInstance:
    """Draw one full realization of the real-valued model."""
    h, y, x_idx, sigma2 = sample_batch(cfg, constellation, ebn0_db, rng, 1)
    return SystemInstance(
        h_real=h[0],
        y_real=y[0],
        sigma2=float(sigma2[0]),
        x_true=constellation.levels[x_idx[0]],
        x_indices=x_idx[0],
    )
