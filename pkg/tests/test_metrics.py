"""SNR/PSNR, perturbation decomposition, bound evaluation, MC gaps."""

import math

import numpy as np
import pytest

from snapspec.errors import PerturbationTooLarge
from snapspec.metrics import (
    LOG2_DB,
    McRow,
    McTable,
    decompose_k,
    dual_vs_single_path_gap,
    eval_bound,
    multiplex_gain,
    perturbed_recon_snr,
    psnr_db,
    snr_db,
    spearman_rank_corr,
)
from snapspec.optics import NoiseModel, apply_code
from snapspec.recon import normalize_to_snap
from snapspec.scene import synth_random_scene
from snapspec.smatrix import build_smatrix


class TestSnr:
    def test_identical_saturates(self):
        f = np.array([1.0, 2.0, 3.0])
        rep = snr_db(f, f)
        assert rep.saturated and math.isinf(rep.snr_db)

    def test_equal_power_zero_db(self):
        f = np.array([3.0, 4.0])
        rep = snr_db(f, f + np.array([3.0, 4.0]))
        assert rep.snr_db == pytest.approx(0.0, abs=1e-12)

    def test_worked_example_20db(self):
        rep = snr_db(np.array([3.0, 4.0]), np.array([3.0, 4.5]))
        assert rep.snr_db == pytest.approx(10 * math.log10(25 / 0.25), abs=1e-12)
        assert rep.snr_db == pytest.approx(20.0, abs=1e-12)

    def test_zero_signal_raises(self):
        with pytest.raises(ValueError):
            snr_db(np.zeros(3), np.ones(3))

    def test_residual_scaling_equivariance(self):
        rng = np.random.default_rng(0)
        f = rng.uniform(1, 2, size=16)
        resid = rng.standard_normal(16)
        base = snr_db(f, f + resid).snr_db
        scaled = snr_db(f, f + 10.0 * resid).snr_db
        assert scaled == pytest.approx(base - 20.0, abs=1e-9)

    def test_scale_fit_removes_global_scale(self):
        rng = np.random.default_rng(1)
        f = rng.uniform(1, 2, size=32)
        raw = snr_db(f, 3.7 * f)
        fit = snr_db(f, 3.7 * f, scale_fit=True)
        assert raw.snr_db < 0  # wildly off without the fit
        assert fit.saturated or fit.snr_db > 250  # exact up to rounding with it


class TestPsnr:
    def test_identical_saturates(self):
        x = np.ones((4, 4))
        assert math.isinf(psnr_db(x, x, peak=1.0))

    def test_worked_example(self):
        x = np.zeros((10, 10))
        y = np.full((10, 10), 0.1)  # MSE = 0.01
        assert psnr_db(x, y, peak=1.0) == pytest.approx(20.0, abs=1e-12)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(13, 9))
        y = rng.uniform(size=(13, 9))
        acc = 0.0
        for i in range(13):
            for j in range(9):
                acc += (x[i, j] - y[i, j]) ** 2
        mse = acc / (13 * 9)
        assert psnr_db(x, y, peak=2.5) == pytest.approx(
            10 * math.log10(2.5 ** 2 / mse), abs=1e-12
        )


def _snap(order=7, seed=3):
    s = build_smatrix(order)
    sc = synth_random_scene(order, 5, blobs=2, seed=seed)
    return normalize_to_snap(apply_code(s, sc.intensity), s), sc


class TestDecomposeK:
    def test_zero_error(self):
        snap, _ = _snap()
        dec = decompose_k(snap, np.zeros_like(snap.matrix))
        assert dec.k == 0.0
        assert np.abs(dec.complement).max() == 0.0

    def test_proportional_error_exact_projection(self):
        snap, _ = _snap()
        dec = decompose_k(snap, 0.3 * snap.matrix)
        assert dec.k == pytest.approx(0.3, abs=1e-12)
        assert np.abs(dec.complement).max() <= 1e-12

    def test_identity_holds_for_random_error(self):
        snap, _ = _snap()
        rng = np.random.default_rng(4)
        for _ in range(20):
            err = rng.normal(0, 0.02, snap.matrix.shape)
            dec = decompose_k(snap, err)
            lhs = dec.k * snap.matrix
            np.testing.assert_allclose(lhs, err + dec.complement, atol=1e-12)
            assert 0.0 <= dec.k < 1.0

    def test_too_large_rejected(self):
        snap, _ = _snap()
        with pytest.raises(PerturbationTooLarge):
            decompose_k(snap, 1.5 * snap.matrix)

    def test_cross_term_consistency(self):
        # the exact expansion: (A - E)^T (A - E) equals
        # (1-k)^2 A^T A + ((1-k)/k) * cross_term
        snap, _ = _snap()
        rng = np.random.default_rng(5)
        err = 0.2 * snap.matrix + rng.normal(0, 0.01, snap.matrix.shape)
        dec = decompose_k(snap, err)
        a = snap.matrix
        lhs = (a - err).T @ (a - err)
        rhs = (1 - dec.k) ** 2 * (a.T @ a) + ((1 - dec.k) / dec.k) * dec.cross_term
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestPerturbedReconSnr:
    def test_no_error_no_noise_saturates(self):
        snap, sc = _snap()
        rep = perturbed_recon_snr(
            snap, np.zeros_like(snap.matrix), sc.spectra,
            NoiseModel("read", 0.0, 1), trials=4,
        )
        assert rep.saturated

    def test_proportional_error_analytic_drop(self):
        snap, sc = _snap()
        noise = NoiseModel("read", 0.01, 11)
        base = perturbed_recon_snr(snap, np.zeros_like(snap.matrix), sc.spectra, noise, 200)
        for k in (0.1, 0.3, 0.5):
            rep = perturbed_recon_snr(snap, k * snap.matrix, sc.spectra, noise, 200)
            drop = rep.snr_db - base.snr_db
            assert drop == pytest.approx(20 * math.log10(1 - k), abs=0.2)

    def test_doubled_signal_gain(self):
        snap, sc = _snap()
        noise = NoiseModel("read", 0.01, 13)
        single = perturbed_recon_snr(snap, 0.1 * snap.matrix, sc.spectra, noise, 200)
        double = perturbed_recon_snr(
            snap, 0.1 * snap.matrix, sc.spectra, noise, 200, doubled_signal=True
        )
        assert double.snr_db - single.snr_db == pytest.approx(2 * LOG2_DB, abs=1e-9)


class TestEvalBound:
    def test_zero_error_sides_equal(self):
        snap, _ = _snap()
        rep = eval_bound(snap, np.zeros_like(snap.matrix), NoiseModel("read", 1.0, 7), 50)
        assert rep.k == 0.0
        np.testing.assert_allclose(rep.lhs_db, rep.rhs12_db, atol=1e-9)
        assert rep.violation12 == 0.0

    def test_proportional_error_reports_sides(self):
        snap, _ = _snap()
        rep = eval_bound(snap, 0.3 * snap.matrix, NoiseModel("read", 1.0, 8), 100)
        assert rep.k == pytest.approx(0.3, abs=1e-12)
        # analytic: lhs - rhs12 = 10 log10(1 - k) for proportional error
        np.testing.assert_allclose(
            rep.lhs_db - rep.rhs12_db, 10 * math.log10(0.7), atol=1e-9
        )
        assert rep.violation12 == 1.0  # documented open question, reported not asserted

    def test_k_to_zero_limit(self):
        snap, _ = _snap()
        noise = NoiseModel("read", 1.0, 9)
        rep_small = eval_bound(snap, 1e-9 * snap.matrix, noise, 20)
        rep_zero = eval_bound(snap, np.zeros_like(snap.matrix), noise, 20)
        np.testing.assert_allclose(rep_small.rhs12_db, rep_zero.rhs12_db, atol=1e-6)

    def test_doubled_variant_offsets(self):
        snap, _ = _snap()
        rep = eval_bound(snap, 0.2 * snap.matrix, NoiseModel("read", 1.0, 10), 25)
        np.testing.assert_allclose(rep.lhs14_db - rep.lhs_db, 2 * LOG2_DB, atol=1e-12)
        np.testing.assert_allclose(rep.rhs14_db - rep.rhs12_db, LOG2_DB, atol=1e-12)


class TestPathGap:
    def test_noiseless_gap_zero(self):
        sc = synth_random_scene(7, 5, blobs=2, seed=6)
        s = build_smatrix(7)
        res = dual_vs_single_path_gap(sc, s, NoiseModel("read", 0.0, 1), trials=3)
        assert res.saturated and res.gap_db == 0.0

    def test_shot_noise_gap_3db(self):
        sc = synth_random_scene(7, 8, blobs=2, seed=7)
        s = build_smatrix(7)
        res = dual_vs_single_path_gap(sc, s, NoiseModel("shot", 1e-4, 21), trials=600)
        assert res.gap_db == pytest.approx(LOG2_DB, abs=0.3)

    def test_read_noise_gap_6db(self):
        sc = synth_random_scene(7, 8, blobs=2, seed=7)
        s = build_smatrix(7)
        res = dual_vs_single_path_gap(sc, s, NoiseModel("read", 5e-3, 22), trials=600)
        assert res.gap_db == pytest.approx(2 * LOG2_DB, abs=0.3)


class TestMultiplexGain:
    def test_n7_matches_closed_form(self):
        res = multiplex_gain(7, sigma=0.01, trials=600, bands=8, seed=1)
        expected = 10 * math.log10((7 + 1) ** 2 / (4 * 7))
        assert res.gap_db == pytest.approx(expected, abs=0.5)

    def test_sigma_zero_saturates(self):
        res = multiplex_gain(7, sigma=0.0, trials=5)
        assert res.saturated


class TestSpearman:
    def test_monotone_is_one(self):
        assert spearman_rank_corr([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
        assert spearman_rank_corr([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)

    def test_known_value(self):
        # ranks of y: x=[1,2,3,4,5] vs y=[1,3,2,5,4] -> rho = 1 - 6*4/(5*24) = 0.8
        assert spearman_rank_corr([1, 2, 3, 4, 5], [1, 3, 2, 5, 4]) == pytest.approx(0.8)


def test_mc_table_csv(tmp_path):
    table = McTable(rows=[McRow("slit", "read", 0.01, 8.5, 0.3, 100)])
    path = tmp_path / "mc.csv"
    table.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "method,noise_kind,param,mean_snr_db,std_db,trials"
    assert lines[1].startswith("slit,read,0.01,8.5,0.3,100")
