"""Tests for the calibration metrics and their CSV serialization."""

import numpy as np
import pytest

from cmdet.calibration import (
    CALIBRATION_CSV_COLUMNS,
    ReliabilityBin,
    calibration_to_csv,
    expected_calibration_error,
    run_calibration,
    write_calibration_csv,
    _bin_confidences,
)
from cmdet.config import CalibrateJobConfig, ChannelSpec, DetectorSpec


def _job(detectors, *, n=2, ebn0=10.0, n_instances=2000, compute_kl=True, seed=0,
         constellation="bpsk"):
    return CalibrateJobConfig(
        constellation=constellation,
        channel=ChannelSpec(n_tx=n, n_rx=n),
        detectors=detectors,
        ebn0_db=ebn0,
        n_instances=n_instances,
        batch_size=1000,
        compute_kl=compute_kl,
        seed=seed,
    )


class TestEce:
    def test_weighted_gap(self):
        bins = [
            ReliabilityBin(0.0, 0.5, 30, 0.4, 0.5),
            ReliabilityBin(0.5, 1.0, 70, 0.9, 0.8),
        ]
        expected = (30 * 0.1 + 70 * 0.1) / 100
        assert expected_calibration_error(bins) == pytest.approx(expected)

    def test_empty_bins_ignored(self):
        bins = [ReliabilityBin(0.0, 0.5, 0, 0.0, 0.0), ReliabilityBin(0.5, 1.0, 10, 0.7, 0.7)]
        assert expected_calibration_error(bins) == 0.0
        assert expected_calibration_error([]) == 0.0

    def test_one_hot_ece_equals_top_bin_error(self):
        """Hard decisions claim full confidence, so the ECE collapses to the
        error rate of the top decile."""
        rng = np.random.default_rng(5)
        correct = (rng.uniform(size=5000) < 0.83).astype(np.float64)
        confidence = np.ones(5000)
        bins = _bin_confidences(confidence, correct)
        assert bins[-1].count == 5000
        assert sum(b.count for b in bins[:-1]) == 0
        ece = expected_calibration_error(bins)
        np.testing.assert_allclose(ece, 1.0 - correct.mean(), atol=1e-12)

    def test_full_confidence_lands_in_top_bin(self):
        bins = _bin_confidences(np.array([1.0, 0.95, 0.05]), np.array([1.0, 0.0, 1.0]))
        assert bins[-1].count == 2
        assert bins[0].count == 1


class TestRunCalibration:
    def test_exact_marginals_are_calibrated(self):
        """The exhaustive marginalizer is the true posterior, so its ECE is
        tiny and its KL to itself vanishes."""
        reports = run_calibration(_job([DetectorSpec(name="io")], n_instances=10_000))
        (rep,) = reports
        assert rep.ece < 0.01
        assert rep.mean_kl is not None
        assert rep.mean_kl < 1e-9
        assert rep.total_symbols == 40_000

    def test_hard_decisions_are_overconfident(self):
        reports = run_calibration(_job([DetectorSpec(name="mf")], ebn0=6.0, n_instances=4000))
        (rep,) = reports
        top = rep.bins[-1]
        assert top.count == rep.total_symbols
        np.testing.assert_allclose(rep.ece, 1.0 - top.accuracy, atol=1e-12)
        assert rep.ece > 0.02  # matched filter is far from error free here

    def test_kl_skipped_when_disabled(self):
        reports = run_calibration(
            _job([DetectorSpec(name="mmse")], n_instances=500, compute_kl=False)
        )
        assert reports[0].mean_kl is None

    def test_detectors_share_instances(self):
        reports = run_calibration(
            _job(
                [DetectorSpec(name="cmd", layers=4, label="a"),
                 DetectorSpec(name="cmd", layers=4, label="b")],
                n_instances=1000,
            )
        )
        a, b = reports
        assert a.ece == b.ece
        assert a.mean_kl == b.mean_kl
        np.testing.assert_array_equal(a.llr_counts, b.llr_counts)

    def test_repeat_runs_identical(self):
        job = _job([DetectorSpec(name="cmd")], n_instances=1000)
        r1 = run_calibration(job)
        r2 = run_calibration(job)
        assert calibration_to_csv(r1) == calibration_to_csv(r2)

    def test_trained_beats_untrained_soft_outputs(self, trained_bpsk_4x4):
        """Training reshapes the anneal so the reported posteriors track the
        exact marginals much more closely."""
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
            seed=7,
        )
        trained, untrained = run_calibration(job)
        assert trained.total_symbols == 100_000
        assert trained.mean_kl < untrained.mean_kl
        assert trained.ece < 0.05


class TestCsv:
    def test_structure_and_totals(self):
        job = _job([DetectorSpec(name="mmse")], n_instances=600)
        reports = run_calibration(job)
        text = calibration_to_csv(reports)
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CALIBRATION_CSV_COLUMNS)
        records = [line.split(",")[1] for line in lines[1:]]
        assert records.count("reliability_bin") == 10
        assert records.count("llr_bin") == job.llr_bins
        assert records.count("summary") == 1

        # reliability counts and llr histogram both cover every symbol
        rel_rows = [line.split(",") for line in lines[1:] if line.split(",")[1] == "reliability_bin"]
        assert sum(int(r[5]) for r in rel_rows) == reports[0].total_symbols
        llr_rows = [line.split(",") for line in lines[1:] if line.split(",")[1] == "llr_bin"]
        assert sum(int(r[5]) for r in llr_rows) == reports[0].total_symbols

    def test_summary_row_blank_kl(self):
        job = _job([DetectorSpec(name="mf")], n_instances=200, compute_kl=False)
        text = calibration_to_csv(run_calibration(job))
        summary = [line for line in text.strip().split("\n") if ",summary," in line][0]
        assert summary.endswith(",")  # empty KL cell

    def test_write_matches_string(self, tmp_path):
        job = _job([DetectorSpec(name="mf")], n_instances=200)
        reports = run_calibration(job)
        path = tmp_path / "cal.csv"
        write_calibration_csv(reports, path)
        assert path.read_text() == calibration_to_csv(reports)
