"""Relaxed-MAP detection by tempered gradient descent.

The discrete MAP problem is relaxed by writing each symbol as a softmax
combination of the alphabet levels, with one logit column per symbol and a
temperature tau.  Descending the resulting smooth objective for a fixed
number of layers, each with its own (tau, delta), yields soft symbol
estimates and per-class posteriors; annealing tau toward zero recovers hard
MAP-like decisions.

All gradients here are of the noise-scaled objective

    O(state; tau) = 0.5*||y - H xt||^2 + (sigma2/2)*R(state),

i.e. the negative log posterior multiplied by the per-real-dimension noise
variance sigma2/2 (the Gaussian normalization constant is dropped).  The
scaling keeps step sizes of order one across the whole SNR range.  R is the
negative log prior of the relaxation variables: sum(gamma + exp(-gamma)) in
the multiclass form, sum(lambda + 2 ln(1 + exp(-lambda))) in the binary form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellations import Constellation
from .system import SystemInstance

__all__ = [
    "LLR_CLAMP",
    "CmdParams",
    "DetectionResult",
    "objective",
    "binary_objective",
    "likelihood_gradient",
    "gradient_step",
    "binary_relax",
    "binary_step",
    "detect",
    "detect_batch",
]

LLR_CLAMP = 50.0

_MODES = ("multiclass", "binary")


@dataclass(frozen=True)
class CmdParams:
    """Per-layer temperatures and step sizes of the unfolded descent.

    temperatures has L+1 entries: one per descent layer plus the output
    temperature used for the final posterior.  step_sizes has L entries.
    """

    temperatures: np.ndarray
    step_sizes: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.temperatures, dtype=np.float64)
        d = np.asarray(self.step_sizes, dtype=np.float64)
        if t.ndim != 1 or d.ndim != 1 or len(t) != len(d) + 1:
            raise ValueError("need L+1 temperatures and L step sizes")
        if np.any(t <= 0.0) or np.any(d <= 0.0):
            raise ValueError("temperatures and step sizes must be positive")
        object.__setattr__(self, "temperatures", t)
        object.__setattr__(self, "step_sizes", d)

    @property
    def n_layers(self) -> int:
        return len(self.step_sizes)


@dataclass
class DetectionResult:
    """Hard decisions plus the soft information a decoder would consume."""

    x_hard: np.ndarray  # N levels
    x_soft: np.ndarray  # N relaxed estimates
    posterior: np.ndarray  # N x K rows, each summing to 1
    llr: np.ndarray  # N x bits, clamped to +-LLR_CLAMP
    x_indices: np.ndarray  # N class indices (argmax posterior)
    objective_trace: list | None = None


# ---------------------------------------------------------------------------
# batched layer kernels (leading batch axis; shared with the training module)
# ---------------------------------------------------------------------------


def _gram(h: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Precompute H^T H (B,N,N) and H^T y (B,N)."""
    return np.einsum("bmn,bmp->bnp", h, h), np.einsum("bmn,bm->bn", h, y)


def _softmax_cols(s: np.ndarray) -> np.ndarray:
    """Softmax over the class axis of (B, K, N) scores."""
    s = s - s.max(axis=1, keepdims=True)
    z = np.exp(s)
    return z / z.sum(axis=1, keepdims=True)


def _mc_forward_layer(gamma, tau, hth, hty, log_priors, levels, sig2r):
    """One multiclass layer: softmax state, relaxed symbols and scaled gradient.

    Returns (z, xt, e, w, g) where e = H^T(H xt - y), w = z*(v - xt) and
    g = w*e/tau + sig2r*(1 - exp(-gamma)) is the scaled objective gradient.
    """
    z = _softmax_cols((log_priors[None, :, None] + gamma) / tau)
    xt = np.einsum("k,bkn->bn", levels, z)
    e = np.einsum("bnp,bp->bn", hth, xt) - hty
    w = z * (levels[None, :, None] - xt[:, None, :])
    g = w * e[:, None, :] / tau + sig2r[:, None, :] * (1.0 - np.exp(-gamma))
    return z, xt, e, w, g


def _bin_forward_layer(lam, tau, hth, hty, c, sig2r):
    """One binary layer on the +-1 alphabet.

    Returns (st, e, d, g) with st = tanh((c+lambda)/(2 tau)),
    d = (1-st^2)/(2 tau) and g = d*e + sig2r*tanh(lambda/2).
    """
    st = np.tanh((c + lam) / (2.0 * tau))
    e = np.einsum("bnp,bp->bn", hth, st) - hty
    d = (1.0 - st * st) / (2.0 * tau)
    g = d * e + sig2r * np.tanh(lam / 2.0)
    return st, e, d, g


def _mc_log_posterior(gamma, tau, log_priors):
    """Column-wise log softmax of (ln rho + gamma)/tau, shape (B, K, N)."""
    s = (log_priors[None, :, None] + gamma) / tau
    s = s - s.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def _llr_from_log_posterior(log_q: np.ndarray, bit_labels: np.ndarray) -> np.ndarray:
    """Per-bit LLR ln(P(bit=1)/P(bit=0)) from (B, K, N) log posteriors."""
    b, k, n = log_q.shape
    nbits = bit_labels.shape[1]
    llr = np.empty((b, n, nbits))
    for bit in range(nbits):
        mask1 = bit_labels[:, bit].astype(bool)
        lse1 = _logsumexp_classes(log_q[:, mask1, :])
        lse0 = _logsumexp_classes(log_q[:, ~mask1, :])
        llr[:, :, bit] = lse1 - lse0
    return np.clip(llr, -LLR_CLAMP, LLR_CLAMP)


def _logsumexp_classes(log_q: np.ndarray) -> np.ndarray:
    m = log_q.max(axis=1)
    return m + np.log(np.exp(log_q - m[:, None, :]).sum(axis=1))


# ---------------------------------------------------------------------------
# single-instance operations
# ---------------------------------------------------------------------------


def objective(
    gamma: np.ndarray,
    instance: SystemInstance,
    constellation: Constellation,
    tau: float,
) -> float:
    """Scaled relaxed-MAP objective at state gamma (K x N).

    O = 0.5*||y - H xt(gamma)||^2 + (sigma2/2)*sum(gamma + exp(-gamma)).
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    gamma = np.asarray(gamma, dtype=np.float64)
    z = _softmax_cols(((constellation.log_priors[:, None] + gamma) / tau)[None])[0]
    xt = z.T @ constellation.levels
    resid = instance.y_real - instance.h_real @ xt
    prior = np.sum(gamma + np.exp(-gamma))
    return float(0.5 * np.dot(resid, resid) + (instance.sigma2 / 2.0) * prior)


def binary_objective(
    lam: np.ndarray,
    instance: SystemInstance,
    rho: float,
    tau: float,
) -> float:
    """Scaled binary objective on the +-1 alphabet (channel already scaled).

    O = 0.5*||y - H st(lambda)||^2 + (sigma2/2)*sum(lambda + 2 ln(1+exp(-lambda))).
    """
    st = binary_relax(lam, rho, tau)
    resid = instance.y_real - instance.h_real @ st
    # log1p formulation keeps the logistic prior finite for large |lambda|
    prior = np.sum(lam + 2.0 * np.log1p(np.exp(-lam)))
    return float(0.5 * np.dot(resid, resid) + (instance.sigma2 / 2.0) * prior)


def likelihood_gradient(x_tilde: np.ndarray, instance: SystemInstance) -> np.ndarray:
    """Gradient of the log likelihood in the relaxed symbols.

    d ln p(y|xt) / d xt = (2/sigma2) * (H^T y - H^T H xt), where sigma2 is the
    complex noise variance and the real model has sigma2/2 per dimension.
    """
    h = instance.h_real
    return (2.0 / instance.sigma2) * (h.T @ instance.y_real - h.T @ (h @ x_tilde))


def gradient_step(
    gamma: np.ndarray,
    instance: SystemInstance,
    constellation: Constellation,
    tau: float,
    delta: float,
) -> np.ndarray:
    """One descent step gamma' = gamma - delta * dO/dgamma of the scaled objective."""
    if tau <= 0.0 or delta < 0.0:
        raise ValueError("tau must be positive and delta nonnegative")
    gamma = np.asarray(gamma, dtype=np.float64)[None]
    hth, hty = _gram(instance.h_real[None], instance.y_real[None])
    sig2r = np.full((1, 1), instance.sigma2 / 2.0)
    _, _, _, _, g = _mc_forward_layer(
        gamma, tau, hth, hty, constellation.log_priors, constellation.levels, sig2r
    )
    return (gamma - delta * g)[0]


def binary_relax(lam: np.ndarray, rho: float, tau: float) -> np.ndarray:
    """Relaxed +-1 symbols: tanh((ln(1/rho - 1) + lambda)/(2 tau)).

    rho is the prior probability of the smaller level; rho -> 1 drives the
    output to -1.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    c = np.log(1.0 / rho - 1.0)
    return np.tanh((c + np.asarray(lam, dtype=np.float64)) / (2.0 * tau))


def binary_step(
    lam: np.ndarray,
    instance: SystemInstance,
    rho: float,
    tau: float,
    delta: float,
) -> np.ndarray:
    """One descent step of the scaled binary objective.

    The instance's channel must already carry the level magnitude (columns
    scaled by a for levels +-a), so the alphabet here is exactly +-1.
    """
    if tau <= 0.0 or delta < 0.0:
        raise ValueError("tau must be positive and delta nonnegative")
    lam = np.asarray(lam, dtype=np.float64)[None]
    hth, hty = _gram(instance.h_real[None], instance.y_real[None])
    c = np.log(1.0 / rho - 1.0)
    sig2r = np.full((1, 1), instance.sigma2 / 2.0)
    _, _, _, g = _bin_forward_layer(lam, tau, hth, hty, c, sig2r)
    return (lam - delta * g)[0]


# ---------------------------------------------------------------------------
# full detection
# ---------------------------------------------------------------------------


def detect_batch(
    h: np.ndarray,
    y: np.ndarray,
    sigma2: float | np.ndarray,
    constellation: Constellation,
    params: CmdParams,
    mode: str = "multiclass",
) -> dict:
    """Run the unfolded descent on a batch; arrays have a leading batch axis.

    Returns a dict with hard_indices (B,N), posterior (B,N,K), llr
    (B,N,bits) and x_soft (B,N).
    """
    mode = mode.lower()
    if mode not in _MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {_MODES}")
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    b, m, n = h.shape
    sig2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), (b,)).copy()
    hth, hty = _gram(h, y)
    taus = params.temperatures
    deltas = params.step_sizes
    k = constellation.size

    if mode == "binary":
        if k != 2:
            raise ValueError("binary mode requires a two-level constellation")
        a = float(constellation.levels[1])
        if not np.isclose(constellation.levels[0], -a):
            raise ValueError("binary mode requires symmetric levels -a, +a")
        # absorb the level magnitude into the channel: y = (aH) s + n, s in {-1,+1}
        hth_a = hth * (a * a)
        hty_a = hty * a
        rho = float(constellation.priors[0])
        c = np.log(1.0 / rho - 1.0)
        sig2r = (sig2 / 2.0)[:, None]
        lam = np.zeros((b, n))
        for tau, delta in zip(taus[:-1], deltas):
            _, _, _, g = _bin_forward_layer(lam, tau, hth_a, hty_a, c, sig2r)
            lam = lam - delta * g
        a_logit = (c + lam) / taus[-1]
        # two-class posterior reconstructed from lambda at the output temperature
        log_q_plus = -np.log1p(np.exp(-a_logit))
        log_q_minus = -np.log1p(np.exp(a_logit))
        log_q = np.stack([log_q_minus, log_q_plus], axis=1)  # (B, 2, N)
        x_soft = a * np.tanh(a_logit / 2.0)
    else:
        sig2r = (sig2 / 2.0)[:, None]
        gamma = np.zeros((b, k, n))
        for tau, delta in zip(taus[:-1], deltas):
            _, _, _, _, g = _mc_forward_layer(
                gamma, tau, hth, hty, constellation.log_priors, constellation.levels, sig2r
            )
            gamma = gamma - delta * g
        log_q = _mc_log_posterior(gamma, taus[-1], constellation.log_priors)
        x_soft = np.einsum("k,bkn->bn", constellation.levels, np.exp(log_q))

    posterior = np.exp(log_q)
    hard_idx = np.argmax(posterior, axis=1)  # first index wins ties
    llr = _llr_from_log_posterior(log_q, constellation.bit_labels)
    return {
        "hard_indices": hard_idx,
        "posterior": np.transpose(posterior, (0, 2, 1)),
        "llr": llr,
        "x_soft": x_soft,
    }


def detect(
    instance: SystemInstance,
    constellation: Constellation,
    params: CmdParams,
    mode: str = "multiclass",
    record_objective: bool = False,
) -> DetectionResult:
    """Detect one instance; see detect_batch for the batched form.

    With record_objective=True the scaled objective value is stored for each
    layer state plus the final one (L+1 values).
    """
    trace: list | None = None
    if record_objective:
        trace = []
        mode_l = mode.lower()
        taus = params.temperatures
        if mode_l == "binary":
            a = float(constellation.levels[1])
            scaled = SystemInstance(
                h_real=instance.h_real * a,
                y_real=instance.y_real,
                sigma2=instance.sigma2,
                x_true=instance.x_true,
                x_indices=instance.x_indices,
            )
            rho = float(constellation.priors[0])
            lam = np.zeros(instance.n_symbols)
            for tau, delta in zip(taus[:-1], params.step_sizes):
                trace.append(binary_objective(lam, scaled, rho, tau))
                lam = binary_step(lam, scaled, rho, tau, delta)
            trace.append(binary_objective(lam, scaled, rho, float(taus[-1])))
        else:
            gamma = np.zeros((constellation.size, instance.n_symbols))
            for tau, delta in zip(taus[:-1], params.step_sizes):
                trace.append(objective(gamma, instance, constellation, tau))
                gamma = gradient_step(gamma, instance, constellation, tau, delta)
            trace.append(objective(gamma, instance, constellation, float(taus[-1])))

    out = detect_batch(
        instance.h_real[None], instance.y_real[None], instance.sigma2, constellation, params, mode
    )
    idx = out["hard_indices"][0]
    return DetectionResult(
        x_hard=constellation.levels[idx],
        x_soft=out["x_soft"][0],
        posterior=out["posterior"][0],
        llr=out["llr"][0],
        x_indices=idx,
        objective_trace=trace,
    )
