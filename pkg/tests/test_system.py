"""Tests for the channel model, real-valued lifting, and noise calibration."""

import numpy as np
import pytest

from cmdet.constellations import build_constellation
from cmdet.system import (
    ChannelConfig,
    complex_to_real,
    ebn0_from_sigma2,
    sample_batch,
    sample_channel,
    sample_instance,
    sigma2_from_ebn0,
    substream,
)


class TestComplexToReal:
    def test_single_tap(self):
        """1+2j lifts to [[1, -2], [2, 1]]."""
        got = complex_to_real(np.array([[1.0 + 2.0j]]))
        np.testing.assert_allclose(got, [[1.0, -2.0], [2.0, 1.0]])

    def test_block_structure(self):
        rng = np.random.default_rng(0)
        hc = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
        hr = complex_to_real(hc)
        assert hr.shape == (6, 4)
        np.testing.assert_allclose(hr[:3, :2], hc.real)
        np.testing.assert_allclose(hr[:3, 2:], -hc.imag)
        np.testing.assert_allclose(hr[3:, :2], hc.imag)
        np.testing.assert_allclose(hr[3:, 2:], hc.real)

    def test_product_matches_complex_arithmetic(self):
        """Multiplying the lifted matrix against a stacked [Re; Im] vector
        reproduces the complex matrix-vector product."""
        rng = np.random.default_rng(1)
        hc = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
        xc = rng.normal(size=3) + 1j * rng.normal(size=3)
        yc = hc @ xc
        yr = complex_to_real(hc) @ np.concatenate([xc.real, xc.imag])
        np.testing.assert_allclose(yr, np.concatenate([yc.real, yc.imag]), atol=1e-12)

    def test_quadrature_partner_columns_orthogonal(self):
        rng = np.random.default_rng(2)
        hc = rng.normal(size=(5, 4)) + 1j * rng.normal(size=(5, 4))
        hr = complex_to_real(hc)
        for j in range(4):
            assert abs(hr[:, j] @ hr[:, j + 4]) < 1e-12


class TestNoiseCalibration:
    def test_bpsk_10db(self):
        c = build_constellation("bpsk")
        np.testing.assert_allclose(sigma2_from_ebn0(10.0, c), 0.1, atol=1e-15)

    def test_qpsk_10db(self):
        """Two bits per complex symbol halve the noise power at fixed Eb/N0."""
        c = build_constellation("qpsk")
        np.testing.assert_allclose(sigma2_from_ebn0(10.0, c), 0.05, atol=1e-15)

    def test_qam16_10db(self):
        c = build_constellation("qam16")
        np.testing.assert_allclose(sigma2_from_ebn0(10.0, c), 0.025, atol=1e-15)

    def test_roundtrip(self):
        c = build_constellation("qam16")
        for ebn0 in (-3.0, 0.0, 7.5, 21.0):
            back = ebn0_from_sigma2(sigma2_from_ebn0(ebn0, c), c)
            np.testing.assert_allclose(back, ebn0, atol=1e-12)


class TestChannelSampling:
    def test_tap_variance(self):
        """i.i.d. taps are CN(0, 1/n_rx); lifted entries have variance 1/(2 n_rx)."""
        cfg = ChannelConfig(n_tx=4, n_rx=8)
        rng = substream(123)
        draws = np.stack([sample_channel(cfg, rng) for _ in range(400)])
        var = draws.var()
        np.testing.assert_allclose(var, 1.0 / 16.0, rtol=0.05)

    def test_column_norms_near_unit(self):
        """Columns of the complex channel have expected squared norm 1."""
        cfg = ChannelConfig(n_tx=2, n_rx=16)
        rng = substream(7)
        h = sample_channel(cfg, rng)
        norms = (h**2).sum(axis=0)
        np.testing.assert_allclose(norms.mean(), 1.0, rtol=0.25)

    def test_correlated_model_recovers_coefficient(self):
        """Adjacent receive antennas of the correlated model have normalized
        correlation close to the configured coefficient; i.i.d. taps stay
        near zero."""
        n_rx = 16

        def adjacent_corr(cfg):
            num, den = 0.0, 0.0
            rng = substream(5)
            for _ in range(300):
                h = sample_channel(cfg, rng)
                hc = h[:n_rx, :2] + 1j * h[n_rx:, :2]
                num += sum(np.real(np.vdot(hc[i], hc[i + 1])) for i in range(n_rx - 1))
                den += np.real(np.vdot(hc, hc)) * (n_rx - 1) / n_rx
            return num / den

        iid = ChannelConfig(n_tx=2, n_rx=n_rx)
        corr = ChannelConfig(n_tx=2, n_rx=n_rx, model="column_correlated", corr_coeff=0.7)
        np.testing.assert_allclose(adjacent_corr(corr), 0.7, atol=0.05)
        np.testing.assert_allclose(adjacent_corr(iid), 0.0, atol=0.05)

    def test_correlation_coefficient_range(self):
        with pytest.raises(ValueError):
            ChannelConfig(n_tx=2, n_rx=2, model="column_correlated", corr_coeff=1.0)

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            ChannelConfig(n_tx=2, n_rx=2, model="kronecker")

    def test_dimensions_positive(self):
        with pytest.raises(ValueError):
            ChannelConfig(n_tx=0, n_rx=2)


class TestSampleBatch:
    def test_shapes(self):
        cfg = ChannelConfig(n_tx=3, n_rx=5)
        c = build_constellation("qpsk")
        h, y, x_idx, sigma2 = sample_batch(cfg, c, 10.0, substream(0), 7)
        assert h.shape == (7, 10, 6)
        assert y.shape == (7, 10)
        assert x_idx.shape == (7, 6)
        assert sigma2.shape == (7,)
        assert x_idx.dtype.kind == "i"
        assert np.all((x_idx >= 0) & (x_idx < c.size))

    def test_scalar_ebn0_broadcasts(self):
        cfg = ChannelConfig(n_tx=2, n_rx=2)
        c = build_constellation("bpsk")
        _, _, _, sigma2 = sample_batch(cfg, c, 10.0, substream(0), 4)
        np.testing.assert_allclose(sigma2, 0.1)

    def test_per_instance_ebn0(self):
        cfg = ChannelConfig(n_tx=2, n_rx=2)
        c = build_constellation("bpsk")
        grid = np.array([0.0, 10.0, 20.0])
        _, _, _, sigma2 = sample_batch(cfg, c, grid, substream(0), 3)
        np.testing.assert_allclose(sigma2, [1.0, 0.1, 0.01], atol=1e-15)

    def test_wrong_length_ebn0_rejected(self):
        cfg = ChannelConfig(n_tx=2, n_rx=2)
        c = build_constellation("bpsk")
        with pytest.raises(ValueError):
            sample_batch(cfg, c, np.array([1.0, 2.0]), substream(0), 3)

    def test_received_vector_consistent_with_model(self):
        """y - H x_true is white noise with variance sigma2/2 per real dim."""
        cfg = ChannelConfig(n_tx=4, n_rx=4)
        c = build_constellation("bpsk")
        h, y, x_idx, sigma2 = sample_batch(cfg, c, 0.0, substream(11), 2000)
        resid = y - np.einsum("bmn,bn->bm", h, c.levels[x_idx])
        np.testing.assert_allclose(resid.var(), sigma2[0] / 2.0, rtol=0.06)

    def test_symbol_indices_respect_priors(self):
        cfg = ChannelConfig(n_tx=1, n_rx=1)
        c = build_constellation("bpsk", priors=(0.2, 0.8))
        _, _, x_idx, _ = sample_batch(cfg, c, 10.0, substream(3), 20000)
        np.testing.assert_allclose((x_idx == 1).mean(), 0.8, atol=0.01)


class TestSampleInstance:
    def test_fields(self):
        cfg = ChannelConfig(n_tx=2, n_rx=3)
        c = build_constellation("qam16")
        inst = sample_instance(cfg, c, 12.0, substream(9))
        assert inst.h_real.shape == (6, 4)
        assert inst.y_real.shape == (6,)
        assert inst.x_true.shape == (4,)
        assert inst.n_symbols == 4
        np.testing.assert_allclose(inst.x_true, c.levels[inst.x_indices])


class TestSubstream:
    def test_deterministic(self):
        a = substream(42, 1, 2).normal(size=5)
        b = substream(42, 1, 2).normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_counters_give_distinct_streams(self):
        a = substream(42, 0).normal(size=5)
        b = substream(42, 1).normal(size=5)
        assert not np.allclose(a, b)
