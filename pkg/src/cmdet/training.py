"""Learning the per-layer temperatures and step sizes of the unfolded detector.

The unfolded descent of detector.detect_batch is differentiated by hand: the
forward pass caches every layer state and a reverse sweep accumulates exact
gradients of the mean symbol-wise cross entropy with respect to each layer's
temperature and step size.  Temperatures are optimized in the log domain so
they stay positive; step sizes are clamped to a small floor after each Adam
update.  The flat parameter vector is

    theta = [ln tau_0 .. ln tau_L, delta_0 .. delta_{L-1}]   (2L+1 entries)

and gradient vectors returned here follow the same ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .constellations import Constellation
from .detector import (
    CmdParams,
    _bin_forward_layer,
    _gram,
    _mc_forward_layer,
    _mc_log_posterior,
)
from .errors import ConfigError, NumericalError
from .system import ChannelConfig, SystemInstance, sample_batch, substream

__all__ = [
    "PARAMS_FILE_VERSION",
    "STEP_SIZE_FLOOR",
    "OptimizerConfig",
    "TrainConfig",
    "TrainTrace",
    "init_params",
    "cross_entropy_loss",
    "loss_gradient",
    "train",
    "save_params",
    "load_params",
]

PARAMS_FILE_VERSION = 1
STEP_SIZE_FLOOR = 1e-6

_SCHEDULES = ("default", "splin")


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam hyperparameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be nonnegative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Settings of one training run.

    layers=None picks the default depth 2*(2*n_tx), twice the number of real
    symbol dimensions.  Every iteration draws a fresh batch from a
    counter-based stream keyed by (seed, iteration), so runs are reproducible
    regardless of execution order.
    """

    batch_size: int = 500
    iterations: int = 10_000
    ebn0_range_db: tuple[float, float] = (4.0, 27.0)
    layers: int | None = None
    init_schedule: str = "default"
    seed: int = 0
    mode: str = "multiclass"
    checkpoint_every: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        lo, hi = self.ebn0_range_db
        if not lo <= hi:
            raise ValueError("ebn0_range_db must be (low, high) with low <= high")
        if self.layers is not None and self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.init_schedule not in _SCHEDULES:
            raise ValueError(f"unknown schedule {self.init_schedule!r}; choose from {_SCHEDULES}")
        if self.mode not in ("multiclass", "binary"):
            raise ValueError("mode must be 'multiclass' or 'binary'")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


@dataclass
class TrainTrace:
    """Per-iteration losses and optional parameter checkpoints."""

    losses: np.ndarray
    checkpoints: list[tuple[int, CmdParams]]
    seed: int


def init_params(layers: int, k: int, schedule: str = "default") -> CmdParams:
    """Untrained per-layer schedules.

    default: constant step size 1 and temperatures falling linearly from
    tau_max to 0.1 over the L+1 slots, with tau_max = 1/(K-1) for two levels
    and 2/(K-1) otherwise.  splin: tau_j = delta_j = 1 - 0.99*j/L, a joint
    slow anneal of temperature and step size.
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if k < 2:
        raise ValueError("need at least two classes")
    j = np.arange(layers + 1, dtype=np.float64)
    if schedule == "default":
        tau_max = 1.0 / (k - 1) if k == 2 else 2.0 / (k - 1)
        taus = tau_max - (tau_max - 0.1) * j / layers
        deltas = np.ones(layers)
    elif schedule == "splin":
        taus = 1.0 - 0.99 * j / layers
        deltas = taus[:-1].copy()
    else:
        raise ValueError(f"unknown schedule {schedule!r}; choose from {_SCHEDULES}")
    return CmdParams(temperatures=taus, step_sizes=deltas)


# ---------------------------------------------------------------------------
# loss and exact gradient on flat batches
# ---------------------------------------------------------------------------


def _mc_loss_grad(h, y, sigma2, x_idx, constellation, params, want_grad):
    b, _, n = h.shape
    hth, hty = _gram(h, y)
    sig2r = (np.asarray(sigma2, dtype=np.float64) / 2.0)[:, None]
    sig3 = sig2r[:, :, None]  # (B,1,1) for class-indexed arrays
    taus = params.temperatures
    deltas = params.step_sizes
    n_layers = params.n_layers
    logp = constellation.log_priors
    levels = constellation.levels
    k = constellation.size

    gamma = np.zeros((b, k, n))
    cache = []
    for j in range(n_layers):
        z, xt, e, w, g = _mc_forward_layer(gamma, taus[j], hth, hty, logp, levels, sig2r)
        cache.append((gamma, z, xt, e, w, g))
        gamma = gamma - deltas[j] * g

    log_q = _mc_log_posterior(gamma, taus[-1], logp)
    picked = np.take_along_axis(log_q, x_idx[:, None, :], axis=1)[:, 0, :]
    loss = float(-picked.mean())
    if not want_grad:
        return loss, None

    scale = 1.0 / (b * n)
    d_tau = np.zeros(n_layers + 1)
    d_delta = np.zeros(n_layers)

    # loss head: dLoss/dscore of the output softmax, then into gamma and tau_L
    q = np.exp(log_q)
    ds = q.copy()
    np.put_along_axis(ds, x_idx[:, None, :], np.take_along_axis(ds, x_idx[:, None, :], axis=1) - 1.0, axis=1)
    ds *= scale
    s_out = (logp[None, :, None] + gamma) / taus[-1]
    gamma_bar = ds / taus[-1]
    d_tau[-1] = -np.sum(ds * s_out)  # already the ln-tau gradient

    for j in range(n_layers - 1, -1, -1):
        gamma_j, z, xt, e, w, g = cache[j]
        tau = taus[j]
        a_bar = gamma_bar
        d_delta[j] = -np.sum(a_bar * g)
        g_bar = -deltas[j] * a_bar
        gamma_bar = a_bar + sig3 * np.exp(-gamma_j) * g_bar
        e3 = e[:, None, :]
        w_bar = g_bar * e3 / tau
        e_bar = np.sum(g_bar * w, axis=1) / tau
        dt = -np.sum(g_bar * w * e3) / tau**2
        z_bar = w_bar * (levels[None, :, None] - xt[:, None, :])
        xt_bar = -np.sum(w_bar * z, axis=1) + np.einsum("bnp,bp->bn", hth, e_bar)
        z_bar += levels[None, :, None] * xt_bar[:, None, :]
        s_bar = z * (z_bar - np.sum(z * z_bar, axis=1, keepdims=True))
        gamma_bar += s_bar / tau
        s_j = (logp[None, :, None] + gamma_j) / tau
        dt += -np.sum(s_bar * s_j) / tau
        d_tau[j] = tau * dt

    return loss, np.concatenate([d_tau, d_delta])


def _bin_loss_grad(h, y, sigma2, x_idx, constellation, params, want_grad):
    if constellation.size != 2:
        raise ValueError("binary mode requires a two-level constellation")
    a = float(constellation.levels[1])
    if not np.isclose(constellation.levels[0], -a):
        raise ValueError("binary mode requires symmetric levels -a, +a")
    b, _, n = h.shape
    hth, hty = _gram(h, y)
    hth_a = hth * (a * a)
    hty_a = hty * a
    c = np.log(1.0 / float(constellation.priors[0]) - 1.0)
    sig2r = (np.asarray(sigma2, dtype=np.float64) / 2.0)[:, None]
    taus = params.temperatures
    deltas = params.step_sizes
    n_layers = params.n_layers

    lam = np.zeros((b, n))
    cache = []
    for j in range(n_layers):
        st, e, d, g = _bin_forward_layer(lam, taus[j], hth_a, hty_a, c, sig2r)
        cache.append((lam, st, e, d, g))
        lam = lam - deltas[j] * g

    a_logit = (c + lam) / taus[-1]
    t = x_idx.astype(np.float64)  # 1 selects the larger level
    sgn = 2.0 * t - 1.0
    loss = float(np.mean(np.logaddexp(0.0, -sgn * a_logit)))
    if not want_grad:
        return loss, None

    scale = 1.0 / (b * n)
    d_tau = np.zeros(n_layers + 1)
    d_delta = np.zeros(n_layers)

    q_plus = 0.5 * (1.0 + np.tanh(a_logit / 2.0))
    da = (q_plus - t) * scale
    lam_bar = da / taus[-1]
    d_tau[-1] = -np.sum(da * a_logit)

    for j in range(n_layers - 1, -1, -1):
        lam_j, st, e, d, g = cache[j]
        tau = taus[j]
        d_delta[j] = -np.sum(lam_bar * g)
        g_bar = -deltas[j] * lam_bar
        th = np.tanh(lam_j / 2.0)
        new_lam_bar = lam_bar + g_bar * sig2r * 0.5 * (1.0 - th * th)
        d_bar = g_bar * e
        e_bar = g_bar * d
        st_bar = -d_bar * st / tau + np.einsum("bnp,bp->bn", hth_a, e_bar)
        dt = -np.sum(d_bar * d) / tau
        u_bar = st_bar * (1.0 - st * st)
        new_lam_bar += u_bar / (2.0 * tau)
        u = (c + lam_j) / (2.0 * tau)
        dt += -np.sum(u_bar * u) / tau
        d_tau[j] = tau * dt
        lam_bar = new_lam_bar

    return loss, np.concatenate([d_tau, d_delta])


def _loss_and_grad(h, y, sigma2, x_idx, constellation, params, mode, want_grad=True):
    """Cross entropy (and optionally its theta gradient) on flat batch arrays."""
    if mode == "binary":
        return _bin_loss_grad(h, y, sigma2, x_idx, constellation, params, want_grad)
    return _mc_loss_grad(h, y, sigma2, x_idx, constellation, params, want_grad)


def _stack_instances(batch: Sequence[SystemInstance]):
    h = np.stack([inst.h_real for inst in batch])
    y = np.stack([inst.y_real for inst in batch])
    sigma2 = np.array([inst.sigma2 for inst in batch])
    x_idx = np.stack([inst.x_indices for inst in batch])
    return h, y, sigma2, x_idx


def cross_entropy_loss(
    batch: Sequence[SystemInstance],
    params: CmdParams,
    constellation: Constellation,
    mode: str = "multiclass",
) -> float:
    """Mean over batch and symbols of -ln q(true class) at the detector output."""
    if len(batch) == 0:
        raise ValueError("batch must not be empty")
    h, y, sigma2, x_idx = _stack_instances(batch)
    loss, _ = _loss_and_grad(h, y, sigma2, x_idx, constellation, params, mode, want_grad=False)
    return loss


def loss_gradient(
    batch: Sequence[SystemInstance],
    params: CmdParams,
    constellation: Constellation,
    mode: str = "multiclass",
) -> np.ndarray:
    """Exact gradient of cross_entropy_loss in theta ordering, shape (2L+1,)."""
    if len(batch) == 0:
        raise ValueError("batch must not be empty")
    h, y, sigma2, x_idx = _stack_instances(batch)
    _, grad = _loss_and_grad(h, y, sigma2, x_idx, constellation, params, mode)
    return grad


# ---------------------------------------------------------------------------
# optimization loop
# ---------------------------------------------------------------------------


def train(
    config: TrainConfig,
    constellation: Constellation,
    channel_config: ChannelConfig,
) -> tuple[CmdParams, TrainTrace]:
    """Adam on [ln tau, delta] with a fresh random batch per iteration.

    Raises NumericalError if the loss or gradient ever turns non-finite; the
    message carries the iteration and the parameters at failure.
    """
    layers = config.layers if config.layers is not None else 4 * channel_config.n_tx
    params = init_params(layers, constellation.size, config.init_schedule)
    theta = np.concatenate([np.log(params.temperatures), params.step_sizes])
    opt = config.optimizer
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    losses = np.empty(config.iterations)
    checkpoints: list[tuple[int, CmdParams]] = []
    lo, hi = config.ebn0_range_db

    for it in range(config.iterations):
        rng = substream(config.seed, it)
        ebn0 = rng.uniform(lo, hi, size=config.batch_size)
        h, y, x_idx, sigma2 = sample_batch(
            channel_config, constellation, ebn0, rng, config.batch_size
        )
        cur = _theta_to_params(theta, layers)
        loss, grad = _loss_and_grad(h, y, sigma2, x_idx, constellation, cur, config.mode)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NumericalError(
                f"non-finite loss or gradient at iteration {it}: loss={loss}, "
                f"temperatures={cur.temperatures.tolist()}, "
                f"step_sizes={cur.step_sizes.tolist()}"
            )
        losses[it] = loss

        m = opt.beta1 * m + (1.0 - opt.beta1) * grad
        v = opt.beta2 * v + (1.0 - opt.beta2) * grad * grad
        step = it + 1
        m_hat = m / (1.0 - opt.beta1**step)
        v_hat = v / (1.0 - opt.beta2**step)
        theta = theta - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.epsilon)
        # step sizes live in the raw domain; keep them strictly positive
        theta[layers + 1 :] = np.maximum(theta[layers + 1 :], STEP_SIZE_FLOOR)

        if config.checkpoint_every and (it + 1) % config.checkpoint_every == 0:
            checkpoints.append((it + 1, _theta_to_params(theta, layers)))

    final = _theta_to_params(theta, layers)
    return final, TrainTrace(losses=losses, checkpoints=checkpoints, seed=config.seed)


def _theta_to_params(theta: np.ndarray, layers: int) -> CmdParams:
    return CmdParams(
        temperatures=np.exp(theta[: layers + 1]),
        step_sizes=theta[layers + 1 :].copy(),
    )


# ---------------------------------------------------------------------------
# parameter files
# ---------------------------------------------------------------------------


def save_params(
    params: CmdParams,
    path: str | Path,
    k: int,
    metadata: dict | None = None,
) -> None:
    """Write a versioned JSON parameter file (decimal repr round-trips exactly)."""
    payload = {
        "version": PARAMS_FILE_VERSION,
        "k": int(k),
        "l": params.n_layers,
        "temperatures": [repr(float(t)) for t in params.temperatures],
        "step_sizes": [repr(float(d)) for d in params.step_sizes],
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_params(path: str | Path) -> tuple[CmdParams, dict]:
    """Read a parameter file; returns (params, info) with info = {k, metadata}.

    Raises ConfigError on malformed JSON, unknown version, or invariant
    violations (wrong lengths, non-positive entries).
    """
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read parameter file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"parameter file {path} must hold a JSON object")
    version = payload.get("version")
    if version != PARAMS_FILE_VERSION:
        raise ConfigError(
            f"parameter file {path} has version {version!r}; expected {PARAMS_FILE_VERSION}"
        )
    for key in ("k", "l", "temperatures", "step_sizes"):
        if key not in payload:
            raise ConfigError(f"parameter file {path} is missing field {key!r}")
    try:
        taus = np.array([float(t) for t in payload["temperatures"]])
        deltas = np.array([float(d) for d in payload["step_sizes"]])
        k = int(payload["k"])
        n_layers = int(payload["l"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter file {path} has malformed fields: {exc}") from exc
    if k < 2:
        raise ConfigError(f"parameter file {path}: k must be >= 2")
    if len(taus) != n_layers + 1 or len(deltas) != n_layers:
        raise ConfigError(
            f"parameter file {path}: need l+1 temperatures and l step sizes for l={n_layers}"
        )
    try:
        params = CmdParams(temperatures=taus, step_sizes=deltas)
    except ValueError as exc:
        raise ConfigError(f"parameter file {path}: {exc}") from exc
    info = {"k": k, "metadata": payload.get("metadata", {})}
    return params, info
