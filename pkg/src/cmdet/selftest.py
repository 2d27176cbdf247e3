"""Fast self-contained diagnostic battery for installs and CI smoke checks.

Each check exercises one analytic contract against an independent numerical
oracle: finite differences for every gradient path, quadrature for the
concrete density normalization, a chi-square fit for the sampler, and
exhaustive-oracle dominance on tiny systems.  The full battery runs in well
under a minute and needs nothing beyond the runtime dependencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import io_marginals_batch, map_indices_batch, matched_filter_indices
from .baselines import OracleLimits
from .concrete import ConcreteParams, concrete_log_density, gumbel_max_sample
from .constellations import build_constellation
from .detector import CmdParams, detect_batch, gradient_step, objective
from .system import ChannelConfig, SystemInstance, sample_batch, substream
from .training import cross_entropy_loss, init_params, loss_gradient

__all__ = ["CheckResult", "SelftestResult", "run_selftest"]

# chi-square quantiles at p = 0.999 (the fit passes while the statistic stays below)
_CHI2_Q999 = {1: 10.828, 3: 16.266}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class SelftestResult:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


def _random_instance(seed: int, n_tx: int = 3, n_rx: int = 4, name: str = "bpsk") -> tuple:
    const = build_constellation(name)
    cfg = ChannelConfig(n_tx=n_tx, n_rx=n_rx)
    rng = substream(seed, 77)
    h, y, x_idx, s2 = sample_batch(cfg, const, 10.0, rng, 1)
    inst = SystemInstance(
        h_real=h[0], y_real=y[0], sigma2=float(s2[0]),
        x_true=const.levels[x_idx[0]], x_indices=x_idx[0],
    )
    return inst, const


def _check_objective_gradient() -> CheckResult:
    worst = 0.0
    eps = 1e-5
    for seed in range(5):
        inst, const = _random_instance(seed)
        rng = substream(seed, 78)
        gamma = rng.standard_normal((const.size, inst.n_symbols))
        tau = 0.7
        # analytic gradient recovered from a unit step
        grad = (gamma - gradient_step(gamma, inst, const, tau, 1.0))
        fd = np.zeros_like(gamma)
        for i in np.ndindex(gamma.shape):
            gp, gm = gamma.copy(), gamma.copy()
            gp[i] += eps
            gm[i] -= eps
            fd[i] = (objective(gp, inst, const, tau) - objective(gm, inst, const, tau)) / (2 * eps)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
        worst = max(worst, float(rel.max()))
    return CheckResult(
        "objective_gradient_fd", worst < 1e-6, f"max relative error {worst:.2e} (tol 1e-6)"
    )


def _check_theta_gradient() -> CheckResult:
    worst = 0.0
    eps = 1e-5
    for seed in range(3):
        const = build_constellation("bpsk")
        cfg = ChannelConfig(n_tx=2, n_rx=3)
        rng = substream(seed, 79)
        h, y, x_idx, s2 = sample_batch(cfg, const, 9.0, rng, 6)
        batch = [
            SystemInstance(h[i], y[i], float(s2[i]), const.levels[x_idx[i]], x_idx[i])
            for i in range(6)
        ]
        layers = 3
        params = init_params(layers, 2, "splin")
        grad = loss_gradient(batch, params, const)
        theta = np.concatenate([np.log(params.temperatures), params.step_sizes])
        fd = np.zeros_like(theta)
        for i in range(len(theta)):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += eps
            tm[i] -= eps
            pp = CmdParams(np.exp(tp[: layers + 1]), tp[layers + 1 :])
            pm = CmdParams(np.exp(tm[: layers + 1]), tm[layers + 1 :])
            fd[i] = (
                cross_entropy_loss(batch, pp, const) - cross_entropy_loss(batch, pm, const)
            ) / (2 * eps)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
        worst = max(worst, float(rel.max()))
    return CheckResult(
        "training_gradient_fd", worst < 1e-4, f"max relative error {worst:.2e} (tol 1e-4)"
    )


def _check_gumbel_pmf() -> CheckResult:
    details = []
    ok = True
    for priors in (np.array([0.5, 0.5]), np.array([0.1, 0.2, 0.3, 0.4])):
        k = len(priors)
        n = 100_000
        rng = substream(2024, k)
        counts = np.zeros(k)
        draws = np.array([gumbel_max_sample(priors, rng) for _ in range(n)])
        for i in range(k):
            counts[i] = np.sum(draws == i)
        expected = priors * n
        stat = float(np.sum((counts - expected) ** 2 / expected))
        crit = _CHI2_Q999[k - 1]
        ok = ok and stat < crit
        details.append(f"K={k}: chi2={stat:.2f} < {crit}")
    return CheckResult("gumbel_max_pmf", ok, "; ".join(details))


def _check_density() -> CheckResult:
    params = ConcreteParams(priors=np.array([0.5, 0.5]), temperature=1.0)
    at_center = np.exp(concrete_log_density(np.array([0.5, 0.5]), params))
    err_center = abs(at_center - 1.0)
    # K=2 reduces to one dimension; integrate the marginal of z1 by quadrature
    grid = np.linspace(1e-6, 1.0 - 1e-6, 20_001)
    dens = np.array(
        [np.exp(concrete_log_density(np.array([z, 1.0 - z]), params)) for z in grid]
    )
    mass = float(np.trapezoid(dens, grid))
    ok = bool(err_center < 1e-12) and abs(mass - 1.0) < 1e-3
    return CheckResult(
        "concrete_density",
        ok,
        f"density(1/2,1/2)={at_center:.15f}, integral={mass:.6f}",
    )


def _check_oracle_dominance() -> CheckResult:
    const = build_constellation("bpsk")
    cfg = ChannelConfig(n_tx=2, n_rx=2)
    limits = OracleLimits()
    rng = substream(99, 0)
    h, y, x_idx, s2 = sample_batch(cfg, const, 8.0, rng, 4000)
    map_idx = map_indices_batch(h, y, s2, const, limits)
    io_idx = np.argmax(io_marginals_batch(h, y, s2, const, limits), axis=1)
    mf_idx = matched_filter_indices(h, y, const)
    fer = {
        "map": float((map_idx != x_idx).any(axis=1).mean()),
        "io": float((io_idx != x_idx).any(axis=1).mean()),
        "mf": float((mf_idx != x_idx).any(axis=1).mean()),
    }
    ser = {
        "map": float((map_idx != x_idx).mean()),
        "io": float((io_idx != x_idx).mean()),
        "mf": float((mf_idx != x_idx).mean()),
    }
    # map vs io differ on a handful of symbols; the expected gap sits inside
    # paired sampling noise, so that one comparison gets a 3-sigma allowance
    n_sym = x_idx.size
    disagree = int((map_idx != io_idx).sum())
    slack = 3.0 * np.sqrt(max(disagree, 1)) / n_sym
    ok = (
        fer["map"] <= fer["mf"]
        and fer["map"] <= fer["io"] + slack
        and ser["io"] <= ser["mf"]
        and ser["io"] <= ser["map"] + slack
    )
    return CheckResult(
        "oracle_dominance",
        ok,
        f"FER map={fer['map']:.4f} io={fer['io']:.4f} mf={fer['mf']:.4f}; "
        f"SER io={ser['io']:.4f} map={ser['map']:.4f} mf={ser['mf']:.4f} "
        f"(paired slack {slack:.2e})",
    )


def _check_detector_outputs() -> CheckResult:
    const = build_constellation("qam16")
    cfg = ChannelConfig(n_tx=3, n_rx=4)
    rng = substream(7, 0)
    h, y, x_idx, s2 = sample_batch(cfg, const, 14.0, rng, 32)
    params = init_params(6, const.size, "default")
    out = detect_batch(h, y, s2, const, params)
    post = out["posterior"]
    sums_ok = bool(np.all(np.abs(post.sum(axis=2) - 1.0) < 1e-9))
    hard_ok = bool(np.all(out["hard_indices"] == np.argmax(post, axis=2)))
    finite_ok = bool(np.all(np.isfinite(out["llr"])) and np.all(np.isfinite(out["x_soft"])))
    ok = sums_ok and hard_ok and finite_ok
    return CheckResult(
        "detector_outputs",
        ok,
        f"posterior_rows_sum_to_1={sums_ok}, hard=argmax={hard_ok}, finite={finite_ok}",
    )


def _check_rng_reproducibility() -> CheckResult:
    a = substream(5, 1, 2).standard_normal(8)
    b = substream(5, 1, 2).standard_normal(8)
    c = substream(5, 2, 1).standard_normal(8)
    ok = bool(np.array_equal(a, b) and not np.array_equal(a, c))
    return CheckResult("rng_streams", ok, "identical counters repeat, different ones diverge")


def run_selftest(verbose: bool = False) -> SelftestResult:
    """Run every check; prints one line per check when verbose."""
    checks = [
        _check_rng_reproducibility(),
        _check_objective_gradient(),
        _check_theta_gradient(),
        _check_gumbel_pmf(),
        _check_density(),
        _check_oracle_dominance(),
        _check_detector_outputs(),
    ]
    result = SelftestResult(checks=checks)
    if verbose:
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return result
