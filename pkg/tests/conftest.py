"""Session fixtures for the slow suites.

Training runs are deterministic (counter-based streams keyed by the seed), so
every session reproduces the same parameters bit for bit.  The two fixtures
below are shared between the ordering tests, the calibration tests and the
acceptance checks, so the expensive optimization happens once per session.
"""

import time

import pytest

from cmdet.constellations import build_constellation
from cmdet.system import ChannelConfig
from cmdet.training import TrainConfig, save_params, train


@pytest.fixture(scope="session")
def trained_bpsk_8x8(tmp_path_factory):
    """Ten thousand Adam iterations on the 8x8 BPSK channel at depth 16."""
    config = TrainConfig(batch_size=500, iterations=10_000, layers=16, seed=0)
    started = time.perf_counter()
    params, trace = train(config, build_constellation("bpsk"), ChannelConfig(n_tx=8, n_rx=8))
    seconds = time.perf_counter() - started
    path = tmp_path_factory.mktemp("params8") / "bpsk_8x8.json"
    save_params(params, path, k=2, metadata={"channel": "8x8", "iterations": 10_000})
    return {"params": params, "path": str(path), "trace": trace, "config": config,
            "train_seconds": seconds}


@pytest.fixture(scope="session")
def trained_bpsk_4x4(tmp_path_factory):
    """Shorter run on the 4x4 BPSK channel, enough to separate it clearly
    from the untrained schedule."""
    config = TrainConfig(batch_size=500, iterations=5_000, layers=16, seed=0)
    started = time.perf_counter()
    params, trace = train(config, build_constellation("bpsk"), ChannelConfig(n_tx=4, n_rx=4))
    seconds = time.perf_counter() - started
    path = tmp_path_factory.mktemp("params4") / "bpsk_4x4.json"
    save_params(params, path, k=2, metadata={"channel": "4x4", "iterations": 5_000})
    return {"params": params, "path": str(path), "trace": trace, "config": config,
            "train_seconds": seconds}
