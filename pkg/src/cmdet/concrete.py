"""Gumbel sampling, the tempered softmax, and the concrete density.

A categorical draw can be written as argmax_i(ln rho_i + g_i) with i.i.d.
Gumbel noise g.  Replacing the argmax by a softmax with temperature tau gives
a continuous random variable on the probability simplex whose distribution
has the closed-form density implemented here; tau -> 0 recovers the discrete
draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np

__all__ = [
    "ConcreteParams",
    "sample_gumbel",
    "gumbel_max_sample",
    "tempered_softmax",
    "concrete_log_density",
    "relax_to_symbol",
]

# Uniform draws are clamped away from {0, 1} so -ln(-ln u) stays finite.
_UNIFORM_EPS = 1e-12
# Simplex boundary excluded from density evaluation: the density diverges there.
_BOUNDARY_EPS = 1e-12


@dataclass(frozen=True)
class ConcreteParams:
    """Class priors and temperature of a concrete distribution."""

    priors: np.ndarray
    temperature: float

    def __post_init__(self) -> None:
        p = np.asarray(self.priors, dtype=np.float64)
        if np.any(p <= 0.0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be strictly positive and sum to 1")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "priors", p)


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    """Draw standard Gumbel noise, g = -ln(-ln u) with u ~ Uniform(0, 1)."""
    u = rng.uniform(size=shape)
    u = np.clip(u, _UNIFORM_EPS, 1.0 - _UNIFORM_EPS)
    return -np.log(-np.log(u))


def gumbel_max_sample(priors: np.ndarray, rng: np.random.Generator) -> int:
    """Exact categorical draw via argmax_i(ln rho_i + g_i)."""
    priors = np.asarray(priors, dtype=np.float64)
    g = sample_gumbel(priors.shape, rng)
    return int(np.argmax(np.log(priors) + g))


def tempered_softmax(logits_plus_gumbel: np.ndarray, tau: float) -> np.ndarray:
    """Softmax of (ln rho + g)/tau along the last axis, max-subtracted for stability."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    s = np.asarray(logits_plus_gumbel, dtype=np.float64) / tau
    s = s - s.max(axis=-1, keepdims=True)
    z = np.exp(s)
    return z / z.sum(axis=-1, keepdims=True)


def concrete_log_density(z: np.ndarray, params: ConcreteParams) -> float:
    """Log density of a simplex point under the concrete distribution.

    ln p(z) = ln (K-1)! + (K-1) ln tau
              + sum_k [ln rho_k - (tau+1) ln z_k] - K ln sum_i rho_i z_i^(-tau),
    evaluated fully in the log domain.
    """
    z = np.asarray(z, dtype=np.float64)
    k = len(z)
    if np.any(z <= _BOUNDARY_EPS):
        raise ValueError("z must be strictly inside the simplex")
    if abs(z.sum() - 1.0) > 1e-9:
        raise ValueError("z must sum to 1")
    tau = params.temperature
    log_rho = np.log(params.priors)
    log_z = np.log(z)
    # log-sum-exp of (ln rho_i - tau ln z_i)
    t = log_rho - tau * log_z
    t_max = t.max()
    lse = t_max + np.log(np.exp(t - t_max).sum())
    return float(lgamma(k) + (k - 1) * np.log(tau) + np.sum(log_rho - (tau + 1.0) * log_z) - k * lse)


def relax_to_symbol(z: np.ndarray, representer: np.ndarray) -> float:
    """Project a simplex point onto the alphabet: the inner product z . v."""
    z = np.asarray(z, dtype=np.float64)
    v = np.asarray(representer, dtype=np.float64)
    if z.shape != v.shape:
        raise ValueError("dimension mismatch between z and representer")
    return float(np.dot(z, v))
