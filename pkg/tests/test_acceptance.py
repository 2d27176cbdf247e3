"""End-to-end acceptance checks.

Eight independent criteria, each printing one PASS/FAIL line (run with -s to
see them on success).  They cover: gradient correctness against finite
differences, the relaxation's sampling and density contracts, agreement with
the exhaustive oracles at small scale, a literature-anchored matched-filter
operating point, the measurable effect of training on hard and soft outputs,
the closed-form complexity counts, and byte-level reproducibility of the CLI.
"""

import time

import numpy as np
import pytest
from scipy import stats

from cmdet.baselines import (
    OracleLimits,
    io_marginals_batch,
    map_indices_batch,
    matched_filter_indices,
)
from cmdet.calibration import run_calibration
from cmdet.cli import main as cli_main
from cmdet.complexity import estimate_mops
from cmdet.concrete import ConcreteParams, concrete_log_density, gumbel_max_sample
from cmdet.config import CalibrateJobConfig, ChannelSpec, DetectorSpec, ExperimentConfig, StopRule
from cmdet.constellations import build_constellation
from cmdet.detector import CmdParams, detect_batch, gradient_step, objective
from cmdet.montecarlo import run_ber_sweep
from cmdet.system import ChannelConfig, SystemInstance, sample_batch, substream
from cmdet.training import cross_entropy_loss, init_params, loss_gradient

BPSK = build_constellation("bpsk")
QAM16 = build_constellation("qam16")


def _report(number: int, ok: bool, detail: str) -> None:
    print(f"[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {number}: {detail}"


def _batch_instances(h, y, s2, x_idx, constellation):
    return [
        SystemInstance(h[i], y[i], float(s2[i]), constellation.levels[x_idx[i]], x_idx[i])
        for i in range(h.shape[0])
    ]


class TestCriterion1Gradients:
    def test_gradient_oracle_suite(self):
        """Analytic state gradients within 1e-6 of central differences and
        parameter gradients within 1e-4 (norm-relative), over 100 random
        seeds each."""
        started = time.perf_counter()

        worst_state = 0.0
        eps = 1e-5
        for seed in range(100):
            const = QAM16 if seed % 2 else BPSK
            cfg = ChannelConfig(n_tx=4, n_rx=4)
            rng = substream(1000 + seed, 0)
            h, y, x_idx, s2 = sample_batch(cfg, const, 10.0, rng, 1)
            inst = SystemInstance(h[0], y[0], float(s2[0]), const.levels[x_idx[0]], x_idx[0])
            gamma = rng.standard_normal((const.size, inst.n_symbols))
            tau = float(rng.uniform(0.3, 1.5))
            grad = gamma - gradient_step(gamma, inst, const, tau, 1.0)
            def central(i, h):
                gp, gm = gamma.copy(), gamma.copy()
                gp[i] += h
                gm[i] -= h
                return (
                    objective(gp, inst, const, tau) - objective(gm, inst, const, tau)
                ) / (2 * h)

            fd = np.zeros_like(gamma)
            for i in np.ndindex(gamma.shape):
                # Richardson-extrapolated central difference, O(h^4) accurate
                fd[i] = (4.0 * central(i, eps / 2) - central(i, eps)) / 3.0
            rel = float(np.linalg.norm(grad - fd) / np.linalg.norm(fd))
            worst_state = max(worst_state, rel)

        worst_theta = 0.0
        for seed in range(100):
            const = QAM16 if seed % 2 else BPSK
            mode = "binary" if seed % 5 == 0 and const is BPSK else "multiclass"
            rng = np.random.default_rng(seed)
            layers = int(rng.integers(1, 5))
            cfg = ChannelConfig(n_tx=2, n_rx=2)
            h, y, x_idx, s2 = sample_batch(cfg, const, 8.0, substream(2000 + seed, 0), 2)
            batch = _batch_instances(h, y, s2, x_idx, const)
            base = init_params(layers, const.size)
            params = CmdParams(
                base.temperatures * rng.uniform(0.7, 1.3, layers + 1),
                base.step_sizes * rng.uniform(0.4, 1.0, layers),
            )
            grad = loss_gradient(batch, params, const, mode=mode)
            theta = np.concatenate([np.log(params.temperatures), params.step_sizes])
            fd = np.zeros_like(theta)
            for i in range(theta.size):
                tp, tm = theta.copy(), theta.copy()
                tp[i] += 1e-6
                tm[i] -= 1e-6
                pp = CmdParams(np.exp(tp[: layers + 1]), tp[layers + 1 :])
                pm = CmdParams(np.exp(tm[: layers + 1]), tm[layers + 1 :])
                fd[i] = (
                    cross_entropy_loss(batch, pp, const, mode=mode)
                    - cross_entropy_loss(batch, pm, const, mode=mode)
                ) / 2e-6
            rel = float(np.linalg.norm(grad - fd) / np.linalg.norm(fd))
            worst_theta = max(worst_theta, rel)

        elapsed = time.perf_counter() - started
        ok = worst_state < 1e-6 and worst_theta < 1e-4 and elapsed < 60
        _report(
            1,
            ok,
            f"state gradient {worst_state:.2e} (tol 1e-6), parameter gradient "
            f"{worst_theta:.2e} (tol 1e-4), 100 seeds each, {elapsed:.1f}s",
        )


class TestCriterion2Relaxation:
    def test_sampling_and_density(self):
        started = time.perf_counter()

        priors = np.array([0.1, 0.2, 0.3, 0.4])
        n = 100_000
        rng = substream(2, 0)
        draws = np.array([gumbel_max_sample(priors, rng) for _ in range(n)])
        counts = np.bincount(draws, minlength=4)
        expected = priors * n
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        p_value = float(stats.chi2.sf(chi2, df=3))

        params = ConcreteParams(priors=np.array([0.5, 0.5]), temperature=1.0)
        center = float(np.exp(concrete_log_density(np.array([0.5, 0.5]), params)))
        center_err = abs(center - 1.0)

        grid = np.linspace(1e-6, 1.0 - 1e-6, 20_001)
        dens = np.array(
            [np.exp(concrete_log_density(np.array([z, 1.0 - z]), params)) for z in grid]
        )
        mass = float(np.trapezoid(dens, grid))
        mass_err = abs(mass - 1.0)

        elapsed = time.perf_counter() - started
        ok = p_value > 0.001 and center_err < 1e-12 and mass_err < 1e-3 and elapsed < 60
        _report(
            2,
            ok,
            f"sampler chi2 p={p_value:.3f} (>0.001), density at center off by "
            f"{center_err:.1e} (tol 1e-12), unit mass off by {mass_err:.1e} "
            f"(tol 1e-3), {elapsed:.1f}s",
        )


class TestCriterion3OracleAgreement:
    def test_cold_anneal_matches_exhaustive_search(self):
        """2x2 BPSK at 10 dB: a long cold anneal agrees with the exhaustive
        joint argmax on at least 95% of 10^4 instances, and each oracle sits
        at the bottom of its own error metric."""
        started = time.perf_counter()

        cfg = ChannelConfig(n_tx=2, n_rx=2)
        rng = substream(35, 0)
        h, y, x_idx, s2 = sample_batch(cfg, BPSK, 10.0, rng, 10_000)
        params = CmdParams(np.geomspace(1.0, 0.01, 257), np.geomspace(1.0, 0.01, 256))
        cmd_idx = detect_batch(h, y, s2, BPSK, params)["hard_indices"]

        limits = OracleLimits()
        map_idx = map_indices_batch(h, y, s2, BPSK, limits)
        io_idx = np.argmax(io_marginals_batch(h, y, s2, BPSK, limits), axis=1)
        mf_idx = matched_filter_indices(h, y, BPSK)

        match = float((cmd_idx == map_idx).all(axis=1).mean())

        def fer(idx):
            return float((idx != x_idx).any(axis=1).mean())

        def ser(idx):
            return float((idx != x_idx).mean())

        fers = {"map": fer(map_idx), "io": fer(io_idx), "cmd": fer(cmd_idx), "mf": fer(mf_idx)}
        sers = {"map": ser(map_idx), "io": ser(io_idx), "cmd": ser(cmd_idx), "mf": ser(mf_idx)}

        elapsed = time.perf_counter() - started
        ok = (
            match >= 0.95
            and fers["map"] <= min(fers["io"], fers["cmd"], fers["mf"])
            and sers["io"] <= min(sers["map"], sers["cmd"], sers["mf"])
            and elapsed < 300
        )
        _report(
            3,
            ok,
            f"joint-argmax agreement {match:.4f} (>=0.95), FER {fers}, SER {sers}, "
            f"{elapsed:.1f}s",
        )


class TestCriterion4MatchedFilterAnchor:
    def test_interference_limited_operating_point(self):
        """32x32 QPSK iid at 13 dB: matched-filter BER against the documented
        0.20 +/- 0.02 anchor."""
        started = time.perf_counter()
        config = ExperimentConfig(
            scenario="mf-anchor",
            constellation="qpsk",
            channel=ChannelSpec(n_tx=32, n_rx=32),
            detectors=[DetectorSpec(name="mf")],
            ebn0_grid_db=[13.0],
            stop=StopRule(min_errors=10**9, max_instances=20_000),
            batch_size=2000,
            seed=13,
        )
        point = run_ber_sweep(config).points[0]
        elapsed = time.perf_counter() - started
        ok = abs(point.ber - 0.20) <= 0.02 and elapsed < 300
        _report(
            4,
            ok,
            f"measured BER {point.ber:.4f} +/- {point.ber_ci95:.4f} over "
            f"{point.instances} instances, target 0.20 +/- 0.02, {elapsed:.1f}s",
        )


class TestCriterion5TrainingEffect:
    def test_trained_beats_untrained_and_mmse(self, trained_bpsk_8x8):
        """After 10^4 Adam steps on the 8x8 BPSK channel, the trained
        unfolding's 10 dB BER sits below both its untrained schedule and the
        MMSE baseline, with non-overlapping 95% intervals on 10^5 instances."""
        started = time.perf_counter()
        config = ExperimentConfig(
            scenario="training-effect",
            constellation="bpsk",
            channel=ChannelSpec(n_tx=8, n_rx=8),
            detectors=[
                DetectorSpec(name="cmdnet", params_file=trained_bpsk_8x8["path"]),
                DetectorSpec(name="cmd"),
                DetectorSpec(name="mmse"),
            ],
            ebn0_grid_db=[10.0],
            stop=StopRule(min_errors=10**9, max_instances=100_000),
            batch_size=5000,
            seed=41,
        )
        points = {p.detector: p for p in run_ber_sweep(config).points}
        net, cmd, mmse_pt = points["cmdnet"], points["cmd"], points["mmse"]
        eval_elapsed = time.perf_counter() - started
        elapsed = eval_elapsed + trained_bpsk_8x8["train_seconds"]
        ok = (
            net.ber + net.ber_ci95 <= cmd.ber - cmd.ber_ci95
            and net.ber + net.ber_ci95 <= mmse_pt.ber - mmse_pt.ber_ci95
            and elapsed < 1800
        )
        _report(
            5,
            ok,
            f"BER trained {net.ber:.5f}+/-{net.ber_ci95:.5f} vs untrained "
            f"{cmd.ber:.5f}+/-{cmd.ber_ci95:.5f} vs mmse {mmse_pt.ber:.5f}"
            f"+/-{mmse_pt.ber_ci95:.5f} on {net.instances} instances, "
            f"{elapsed:.0f}s incl. training",
        )


class TestCriterion6SoftOutputQuality:
    def test_training_improves_posteriors(self, trained_bpsk_4x4):
        """4x4 BPSK at 10 dB: training must cut the mean KL to the exact
        marginals, and the trained detector stays calibrated (ECE < 0.05)
        over 10^5 symbols."""
        started = time.perf_counter()
        job = CalibrateJobConfig(
            constellation="bpsk",
            channel=ChannelSpec(n_tx=4, n_rx=4),
            detectors=[
                DetectorSpec(name="cmdnet", params_file=trained_bpsk_4x4["path"]),
                DetectorSpec(name="cmd"),
            ],
            ebn0_db=10.0,
            n_instances=12_500,
            batch_size=2500,
            compute_kl=True,
            seed=7,
        )
        trained, untrained = run_calibration(job)
        eval_elapsed = time.perf_counter() - started
        elapsed = eval_elapsed + trained_bpsk_4x4["train_seconds"]
        ok = (
            trained.total_symbols == 100_000
            and trained.mean_kl < untrained.mean_kl
            and trained.ece < 0.05
            and elapsed < 600
        )
        _report(
            6,
            ok,
            f"mean KL trained {trained.mean_kl:.4f} < untrained {untrained.mean_kl:.4f}, "
            f"trained ECE {trained.ece:.4f} (<0.05) over {trained.total_symbols} symbols, "
            f"{elapsed:.0f}s incl. training",
        )


class TestCriterion7Complexity:
    def test_anchor_counts(self):
        per_layer = estimate_mops("cmd", 32, 32, 2, layers=1)
        binary = estimate_mops("cmd_binary", 32, 32, 2, layers=1)
        cmd16 = estimate_mops("cmd", 32, 32, 2, layers=16)
        mmse_count = estimate_mops("mmse", 32, 32, 2)
        ok = per_layer == 8704 and binary == 2 * 64 * 64 and cmd16 < mmse_count
        _report(
            7,
            ok,
            f"per-layer {per_layer} (=8704), binary {binary} (=8192), "
            f"16 layers {cmd16} < mmse {mmse_count}",
        )


class TestCriterion8Reproducibility:
    def test_simulate_is_byte_identical(self, tmp_path, capsys):
        cfg = tmp_path / "repro.yaml"
        cfg.write_text(
            "scenario: repro\n"
            "constellation: bpsk\n"
            "channel: {n_tx: 2, n_rx: 2}\n"
            "detectors:\n"
            "  - name: mf\n"
            "  - name: cmd\n"
            "    layers: 4\n"
            "ebn0_grid_db: [6.0, 10.0]\n"
            "stop: {min_errors: 1000000000, max_instances: 500}\n"
            "batch_size: 250\n"
            "seed: 21\n"
        )
        out1 = tmp_path / "run1.csv"
        out2 = tmp_path / "run2.csv"
        code1 = cli_main(["simulate", "--config", str(cfg), "--out", str(out1)])
        code2 = cli_main(["simulate", "--config", str(cfg), "--out", str(out2)])
        capsys.readouterr()
        identical = out1.read_bytes() == out2.read_bytes()
        ok = code1 == 0 and code2 == 0 and identical
        _report(8, ok, f"two CLI runs, {out1.stat().st_size} bytes each, "
                       f"byte-identical={identical}")
