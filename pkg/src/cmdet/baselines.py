"""Baseline detectors and exact brute-force oracles.

The matched filter and the MMSE equalizer are the classic linear references.
The enumeration oracles evaluate every candidate symbol vector and are exact:
joint search minimizes the frame error rate, per-symbol marginalization
minimizes the symbol error rate and yields calibrated posteriors.  Both are
capped to small systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellations import Constellation, quantize_to_levels
from .detector import LLR_CLAMP, DetectionResult, _llr_from_log_posterior
from .system import SystemInstance

__all__ = [
    "OracleLimits",
    "SearchSizeError",
    "matched_filter",
    "mmse",
    "map_bruteforce",
    "io_bruteforce",
]

# float budget for per-chunk work arrays, ~64 MB
_CHUNK_BUDGET = 1 << 23
# single-entry cache of candidate pair products; repeated oracle calls on the
# same alphabet and size (Monte Carlo sweeps) skip the rebuild
_PAIR_CACHE: dict[tuple, np.ndarray] = {}


class SearchSizeError(ValueError):
    """Raised when K^N exceeds the exhaustive-search cap."""


@dataclass(frozen=True)
class OracleLimits:
    """Cap on the K^N enumeration size of the exact oracles."""

    max_search_size: int = 1 << 20

    def __post_init__(self) -> None:
        if self.max_search_size < 1:
            raise ValueError("max_search_size must be positive")


def _one_hot_result(idx: np.ndarray, constellation: Constellation, x_soft: np.ndarray) -> DetectionResult:
    """Wrap hard decisions as a degenerate (one-hot) DetectionResult."""
    n = len(idx)
    k = constellation.size
    posterior = np.zeros((n, k))
    posterior[np.arange(n), idx] = 1.0
    bits = constellation.bit_labels[idx].astype(np.float64)  # (N, nbits)
    llr = np.where(bits > 0.5, LLR_CLAMP, -LLR_CLAMP)
    return DetectionResult(
        x_hard=constellation.levels[idx],
        x_soft=x_soft,
        posterior=posterior,
        llr=llr,
        x_indices=idx,
    )


# ---------------------------------------------------------------------------
# linear detectors
# ---------------------------------------------------------------------------


def matched_filter_indices(h: np.ndarray, y: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Batched matched filter: quantize H^T y. Shapes (B,M,N), (B,M) -> (B,N)."""
    return quantize_to_levels(np.einsum("bmn,bm->bn", h, y), constellation.levels)


def matched_filter(instance: SystemInstance, constellation: Constellation) -> DetectionResult:
    """Hard-decision matched filter: nearest level to H^T y."""
    idx = matched_filter_indices(instance.h_real[None], instance.y_real[None], constellation)[0]
    return _one_hot_result(idx, constellation, constellation.levels[idx])


def mmse_soft_batch(
    h: np.ndarray, y: np.ndarray, sigma2: float | np.ndarray, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Batched MMSE equalizer with a Gaussian posterior approximation.

    Filter: xh = (H^T H + (sig2r/Es) I)^-1 H^T y with sig2r = sigma2/2 and Es
    the mean real-symbol energy.  Per symbol n the equalized output is modeled
    as xh_n = A_nn x_n + e_n with A = (H^T H + (sig2r/Es) I)^-1 H^T H and
    e_n ~ N(0, nu_n^2), nu_n^2 = Es*sum_{m != n} A_nm^2 + sig2r*[A P]_nn where
    P is the regularized inverse; posteriors are rho_k exp(-(xh_n -
    A_nn v_k)^2 / (2 nu_n^2)), normalized.

    Returns (xh, log_q) with shapes (B,N) and (B,K,N).
    """
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    b, m, n = h.shape
    sig2r = np.broadcast_to(np.asarray(sigma2, dtype=np.float64) / 2.0, (b,))
    es = constellation.energy_real
    hth = np.einsum("bmn,bmp->bnp", h, h)
    hty = np.einsum("bmn,bm->bn", h, y)
    reg = hth + (sig2r / es)[:, None, None] * np.eye(n)[None]
    p = np.linalg.inv(reg)
    a = np.einsum("bnp,bpq->bnq", p, hth)
    xh = np.einsum("bnp,bp->bn", p, hty)
    diag_a = np.einsum("bnn->bn", a)
    # interference power: Es * (row energy of A minus the diagonal term)
    interf = es * (np.einsum("bnp,bnp->bn", a, a) - diag_a**2)
    noise = sig2r[:, None] * np.einsum("bnp,bnp->bn", a, p)
    nu2 = np.maximum(interf + noise, 1e-300)
    v = constellation.levels
    # log posterior per class, normalized per symbol
    dist = -((xh[:, None, :] - diag_a[:, None, :] * v[None, :, None]) ** 2) / (2.0 * nu2[:, None, :])
    s = dist + constellation.log_priors[None, :, None]
    s = s - s.max(axis=1, keepdims=True)
    log_q = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    return xh, log_q


def mmse(instance: SystemInstance, constellation: Constellation) -> DetectionResult:
    """Regularized linear equalizer with Gaussian-approximation soft outputs."""
    xh, log_q = mmse_soft_batch(
        instance.h_real[None], instance.y_real[None], instance.sigma2, constellation
    )
    posterior = np.exp(log_q)
    idx = np.argmax(posterior, axis=1)[0]
    return DetectionResult(
        x_hard=constellation.levels[idx],
        x_soft=xh[0],
        posterior=np.transpose(posterior, (0, 2, 1))[0],
        llr=_llr_from_log_posterior(log_q, constellation.bit_labels)[0],
        x_indices=idx,
    )


# ---------------------------------------------------------------------------
# exhaustive oracles
# ---------------------------------------------------------------------------


def _enumerate_indices(k: int, n: int, limits: OracleLimits) -> np.ndarray:
    """All K^N candidate index vectors, lexicographically ordered, shape (C, N)."""
    size = k**n
    if size > limits.max_search_size:
        raise SearchSizeError(f"K^N = {size} exceeds the search cap {limits.max_search_size}")
    grids = np.meshgrid(*([np.arange(k, dtype=np.uint8)] * n), indexing="ij")
    return np.stack(grids, axis=-1).reshape(size, n)


def _joint_log_posterior(
    h: np.ndarray, y: np.ndarray, sigma2, constellation: Constellation, candidates: np.ndarray
) -> np.ndarray:
    """Unnormalized joint log posterior of every candidate, shape (B, C).

    ln p(x|y) + const = -||y - Hx||^2 / sigma2 + sum_n ln rho_{x_n}; the real
    model has noise variance sigma2/2 per dimension, so the quadratic term is
    divided by 2*(sigma2/2).

    Expands ||y - Hx||^2 = ||y||^2 - 2 (H^T y).x + x^T (H^T H) x so the heavy
    candidate sweep is one matrix product against precomputed pair products;
    the pair-product block is built in chunks to bound memory.
    """
    b, m, n = h.shape
    sig2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), (b,))
    x = constellation.levels[candidates]  # (C, N)
    log_prior = constellation.log_priors[candidates].sum(axis=1)  # (C,)
    gram = np.einsum("bmn,bmp->bnp", h, h).reshape(b, n * n)
    hty = np.einsum("bmn,bm->bn", h, y)
    yty = np.einsum("bm,bm->b", y, y)
    c_total = len(candidates)
    key = (c_total, n, constellation.levels.tobytes())
    pair_full = _PAIR_CACHE.get(key)
    if pair_full is None and c_total * n * n <= 2 * _CHUNK_BUDGET:
        _PAIR_CACHE.clear()
        pair_full = np.ascontiguousarray(
            (x[:, :, None] * x[:, None, :]).reshape(c_total, n * n).T
        )
        _PAIR_CACHE[key] = pair_full
    if pair_full is not None:
        quad = gram @ pair_full
    else:
        quad = np.empty((b, c_total))
        chunk_size = max(1, min(c_total, _CHUNK_BUDGET // (n * n)))
        for lo in range(0, c_total, chunk_size):
            hi = min(lo + chunk_size, c_total)
            pair = (x[lo:hi, :, None] * x[lo:hi, None, :]).reshape(hi - lo, n * n)
            quad[:, lo:hi] = gram @ pair.T
    resid2 = yty[:, None] - 2.0 * (hty @ x.T) + quad
    return -resid2 / sig2[:, None] + log_prior[None, :]


def _batch_slices(b: int, c_total: int):
    """Slice the batch so per-slice (B, C) work arrays stay near _CHUNK_BUDGET."""
    step = max(1, min(b, (8 * _CHUNK_BUDGET) // max(1, c_total)))
    for lo in range(0, b, step):
        yield slice(lo, min(lo + step, b))


def map_indices_batch(
    h: np.ndarray, y: np.ndarray, sigma2, constellation: Constellation, limits: OracleLimits
) -> np.ndarray:
    """Batched exact joint-MAP decisions, shape (B, N)."""
    candidates = _enumerate_indices(constellation.size, h.shape[2], limits)
    b = h.shape[0]
    sig2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), (b,))
    best = np.empty(b, dtype=np.int64)
    for sl in _batch_slices(b, len(candidates)):
        joint = _joint_log_posterior(h[sl], y[sl], sig2[sl], constellation, candidates)
        # ties resolve to the lexicographically smallest candidate
        best[sl] = np.argmax(joint, axis=1)
    return candidates[best].astype(np.int64)


def io_marginals_batch(
    h: np.ndarray, y: np.ndarray, sigma2, constellation: Constellation, limits: OracleLimits
) -> np.ndarray:
    """Batched exact per-symbol log marginals, shape (B, K, N).

    Marginalizes the joint posterior by log-sum-exp over all candidates that
    place class k at symbol n.
    """
    b, m, n = h.shape
    k = constellation.size
    candidates = _enumerate_indices(k, n, limits)
    sig2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), (b,))
    sel = [(candidates == kk).astype(np.float64) for kk in range(k)]  # (C, N) each
    mass = np.zeros((b, k, n))
    for sl in _batch_slices(b, len(candidates)):
        joint = _joint_log_posterior(h[sl], y[sl], sig2[sl], constellation, candidates)
        shift = joint.max(axis=1, keepdims=True)
        w = np.exp(joint - shift)  # (B', C)
        for kk in range(k):
            mass[sl, kk, :] = w @ sel[kk]
    log_q = np.log(np.maximum(mass, 1e-300))
    return log_q - _logsumexp_cols(log_q)


def _logsumexp_cols(log_q: np.ndarray) -> np.ndarray:
    m = log_q.max(axis=1, keepdims=True)
    return m + np.log(np.exp(log_q - m).sum(axis=1, keepdims=True))


def map_bruteforce(
    instance: SystemInstance, constellation: Constellation, limits: OracleLimits | None = None
) -> DetectionResult:
    """Exact joint MAP by exhaustive enumeration (hard decisions only)."""
    limits = limits or OracleLimits()
    idx = map_indices_batch(
        instance.h_real[None], instance.y_real[None], instance.sigma2, constellation, limits
    )[0]
    return _one_hot_result(idx, constellation, constellation.levels[idx])


def io_bruteforce(
    instance: SystemInstance, constellation: Constellation, limits: OracleLimits | None = None
) -> DetectionResult:
    """Exact per-symbol marginal posteriors by exhaustive enumeration."""
    limits = limits or OracleLimits()
    log_q = io_marginals_batch(
        instance.h_real[None], instance.y_real[None], instance.sigma2, constellation, limits
    )
    posterior = np.exp(log_q)
    idx = np.argmax(posterior, axis=1)[0]
    return DetectionResult(
        x_hard=constellation.levels[idx],
        x_soft=np.einsum("k,bkn->bn", constellation.levels, posterior)[0],
        posterior=np.transpose(posterior, (0, 2, 1))[0],
        llr=_llr_from_log_posterior(log_q, constellation.bit_labels)[0],
        x_indices=idx,
    )
