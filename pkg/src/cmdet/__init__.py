"""Soft detection for linear Gaussian inverse problems.

Core pieces: a relaxed-MAP detector descending a tempered smooth objective
(multiclass and binary forms), its unfolded trainable variant, exact
brute-force oracles and classical baselines, plus a Monte Carlo harness for
error rates and posterior calibration.
"""

from .baselines import (
    OracleLimits,
    SearchSizeError,
    io_bruteforce,
    map_bruteforce,
    matched_filter,
    mmse,
)
from .complexity import estimate_mops
from .concrete import (
    ConcreteParams,
    concrete_log_density,
    gumbel_max_sample,
    relax_to_symbol,
    sample_gumbel,
    tempered_softmax,
)
from .constellations import Constellation, build_constellation, quantize_to_levels
from .detector import (
    LLR_CLAMP,
    CmdParams,
    DetectionResult,
    binary_objective,
    binary_relax,
    binary_step,
    detect,
    detect_batch,
    gradient_step,
    likelihood_gradient,
    objective,
)
from .errors import ConfigError, NumericalError
from .system import (
    ChannelConfig,
    SystemInstance,
    complex_to_real,
    ebn0_from_sigma2,
    sample_batch,
    sample_channel,
    sample_instance,
    sigma2_from_ebn0,
    substream,
)
from .training import (
    OptimizerConfig,
    TrainConfig,
    TrainTrace,
    cross_entropy_loss,
    init_params,
    load_params,
    loss_gradient,
    save_params,
    train,
)

__all__ = [
    "LLR_CLAMP",
    "ChannelConfig",
    "CmdParams",
    "ConcreteParams",
    "ConfigError",
    "Constellation",
    "DetectionResult",
    "NumericalError",
    "OptimizerConfig",
    "OracleLimits",
    "SearchSizeError",
    "SystemInstance",
    "TrainConfig",
    "TrainTrace",
    "binary_objective",
    "binary_relax",
    "binary_step",
    "build_constellation",
    "complex_to_real",
    "concrete_log_density",
    "cross_entropy_loss",
    "detect",
    "detect_batch",
    "ebn0_from_sigma2",
    "estimate_mops",
    "gradient_step",
    "gumbel_max_sample",
    "init_params",
    "io_bruteforce",
    "likelihood_gradient",
    "load_params",
    "loss_gradient",
    "map_bruteforce",
    "matched_filter",
    "mmse",
    "objective",
    "quantize_to_levels",
    "relax_to_symbol",
    "sample_batch",
    "sample_channel",
    "sample_gumbel",
    "sample_instance",
    "save_params",
    "sigma2_from_ebn0",
    "substream",
    "tempered_softmax",
    "train",
]
