"""Real-valued modulation alphabets with Gray bit labels.

Every detector in this package works on the real-valued equivalent of the
complex observation model, so a constellation here is the set of amplitude
levels carried by one real dimension, normalized so that the average energy
of the underlying complex symbol is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Constellation", "build_constellation", "quantize_to_levels"]

# Levels per real dimension; complex-domain alphabet sizes for Eb/N0 bookkeeping.
_ALPHABETS = {
    "bpsk": {"levels": [-1.0, 1.0], "k_complex": 2},
    "qpsk": {"levels": [-1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)], "k_complex": 4},
    "qam16": {
        "levels": [-3.0 / np.sqrt(10.0), -1.0 / np.sqrt(10.0), 1.0 / np.sqrt(10.0), 3.0 / np.sqrt(10.0)],
        "k_complex": 16,
    },
}


def _gray_labels(k: int) -> np.ndarray:
    """Reflected binary Gray labels over ascending level index, MSB first."""
    nbits = max(1, int(np.log2(k)))
    codes = [i ^ (i >> 1) for i in range(k)]
    return np.array([[(c >> (nbits - 1 - b)) & 1 for b in range(nbits)] for c in codes], dtype=np.uint8)


@dataclass(frozen=True)
class Constellation:
    """Real-domain alphabet: levels, priors and Gray bit labels."""

    name: str
    levels: np.ndarray
    priors: np.ndarray
    bit_labels: np.ndarray
    k_complex: int
    log_priors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.levels.ndim != 1 or len(self.levels) < 2:
            raise ValueError("need at least two levels")
        if np.any(np.diff(self.levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if len(self.priors) != len(self.levels):
            raise ValueError("priors/levels length mismatch")
        if np.any(self.priors <= 0) or abs(self.priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be positive and sum to 1")
        object.__setattr__(self, "log_priors", np.log(self.priors))
        # freeze array contents too, not just the dataclass fields
        for name in ("levels", "priors", "bit_labels", "log_priors"):
            getattr(self, name).setflags(write=False)

    @property
    def size(self) -> int:
        """Number of classes per real dimension."""
        return len(self.levels)

    @property
    def bits_per_symbol(self) -> int:
        """Bits carried by one real dimension."""
        return self.bit_labels.shape[1]

    @property
    def energy_real(self) -> float:
        """Mean energy per real dimension, sum_k rho_k v_k^2."""
        return float(np.dot(self.priors, self.levels**2))

    @property
    def energy_complex(self) -> float:
        """Mean energy of the complex symbol (two real dimensions, except BPSK)."""
        dims = 1 if self.k_complex == 2 else 2
        return dims * self.energy_real


def build_constellation(name: str, priors: np.ndarray | None = None) -> Constellation:
    """Return the named alphabet (bpsk, qpsk or qam16) with uniform priors by default."""
    key = name.lower()
    if key not in _ALPHABETS:
        raise ValueError(f"unsupported constellation {name!r}; choose from {sorted(_ALPHABETS)}")
    spec = _ALPHABETS[key]
    levels = np.asarray(spec["levels"], dtype=np.float64)
    k = len(levels)
    p = np.full(k, 1.0 / k) if priors is None else np.asarray(priors, dtype=np.float64)
    return Constellation(
        name=key,
        levels=levels,
        priors=p,
        bit_labels=_gray_labels(k),
        k_complex=spec["k_complex"],
    )


def quantize_to_levels(x: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Map each value to the index of the nearest level.

    Exact midpoints round toward the smaller level index so results are
    reproducible across platforms.
    """
    mids = (levels[:-1] + levels[1:]) / 2.0
    return np.searchsorted(mids, np.asarray(x), side="left")
