"""Multiplicative-operation (MOP) counts per detected vector.

Counts are closed-form estimates of the dominant multiply cost of each
detector in its streaming form (matrix-vector products, no Gram caching),
expressed in real dimensions N = 2*Nt, M = 2*Nr with K real alphabet levels:

  cmd / cmdnet : L * N * (2M + 4K)   two matrix-vector products plus the
                                     softmax/update elementwise work per layer
  cmd_binary   : L * 2NM             the elementwise work has no K factor
  mf           : N * M               one matrix-vector product
  mmse         : N^2 M + N M         Gram matrix and matched filter
                 + (N^3 - N)/3 + N^2 Gaussian elimination of the regularized
                                     normal equations plus substitution
  map / io     : K^N * (N M + M)     exhaustive enumeration, one residual per
                                     candidate

All counts are exact integer evaluations of these formulas, not measurements.
"""

from __future__ import annotations

__all__ = ["DETECTOR_NAMES", "estimate_mops", "complexity_table"]

DETECTOR_NAMES = ("cmd", "cmdnet", "cmd_binary", "mf", "mmse", "map", "io")

_NEEDS_LAYERS = ("cmd", "cmdnet", "cmd_binary")


def estimate_mops(
    detector: str,
    n_tx: int,
    n_rx: int,
    k: int,
    layers: int | None = None,
) -> int:
    """MOPs for one detection; n_tx/n_rx are complex dimensions, k real levels.

    layers defaults to 2*(2*n_tx) for the unfolded detectors and is ignored
    for the others.  Raises ValueError for unknown detector names.
    """
    name = detector.lower()
    if name not in DETECTOR_NAMES:
        raise ValueError(f"unknown detector {name!r}; choose from {DETECTOR_NAMES}")
    if n_tx < 1 or n_rx < 1 or k < 2:
        raise ValueError("need n_tx >= 1, n_rx >= 1 and k >= 2")
    n = 2 * n_tx
    m = 2 * n_rx
    if name in _NEEDS_LAYERS:
        n_layers = 2 * n if layers is None else int(layers)
        if n_layers < 1:
            raise ValueError("layers must be >= 1")
        if name == "cmd_binary":
            return n_layers * 2 * n * m
        return n_layers * n * (2 * m + 4 * k)
    if name == "mf":
        return n * m
    if name == "mmse":
        return n * n * m + n * m + (n**3 - n) // 3 + n * n
    # map / io: exhaustive search
    return k**n * (n * m + m)


def complexity_table(
    n_tx: int,
    n_rx: int,
    k: int,
    layers: int | None = None,
    detectors: tuple[str, ...] = DETECTOR_NAMES,
) -> list[dict]:
    """Rows of {detector, mops, per_layer} (per_layer None where inapplicable)."""
    rows = []
    for name in detectors:
        total = estimate_mops(name, n_tx, n_rx, k, layers)
        if name in _NEEDS_LAYERS:
            n_layers = 2 * (2 * n_tx) if layers is None else int(layers)
            per_layer = total // n_layers
        else:
            per_layer = None
        rows.append({"detector": name, "mops": total, "per_layer": per_layer})
    return rows
