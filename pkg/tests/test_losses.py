"""Loss values and analytic gradients, checked against hand math and a
central finite-difference oracle."""

import math

import numpy as np
import pytest

from gaussmos import (
    AffineMap,
    Gaussian,
    NumericFailure,
    diag_gnll_grad_raw,
    diag_gnll_loss,
    gnll_grad_gaussian,
    gnll_grad_raw,
    gnll_loss,
    log_density,
    mse_grad,
    mse_loss,
    softplus_inv,
    variant_loss,
    variant_loss_grad,
)
from gaussmos.gaussian import tri_size

LN2 = math.log(2.0)
LOG_2PI = math.log(2.0 * math.pi)

FD_STEP = 1e-5


def fd_grad(fn, x, step=FD_STEP):
    """Central finite differences, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[k] += step
        dn[k] -= step
        out[k] = (fn(up) - fn(dn)) / (2.0 * step)
    return out


def max_rel_err(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_gaussian(seed, n=5):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    cov = m @ m.T + 0.5 * np.eye(n)
    return Gaussian.from_cov(rng.uniform(1.0, 5.0, n), cov)


class TestGnllLoss:
    def test_zero_at_mean_identity_cov(self):
        g = Gaussian.from_cov(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), np.eye(5))
        assert gnll_loss(g, g.mean) == 0.0

    def test_scalar_unit_variance(self):
        g = Gaussian.from_cov(np.array([1.0]), np.array([[1.0]]))
        assert gnll_loss(g, np.array([2.0])) == pytest.approx(0.5, abs=1e-15)

    def test_two_dim_diagonal(self):
        # 0.5 (ln 4 + 1 + 4/4) = ln 2 + 1
        g = Gaussian.from_cov(np.zeros(2), np.diag([1.0, 4.0]))
        got = gnll_loss(g, np.array([1.0, 2.0]))
        assert got == pytest.approx(1.6931471805599454, abs=1e-12)

    def test_offset_from_log_density(self):
        # gnll drops the (n/2) ln 2pi constant that log_density carries.
        for seed in range(8):
            g = random_gaussian(seed)
            y = np.random.default_rng(100 + seed).uniform(1.0, 5.0, 5)
            expect = -log_density(g, y) - 2.5 * LOG_2PI
            assert gnll_loss(g, y) == pytest.approx(expect, abs=1e-12)

    def test_dimension_mismatch(self):
        g = random_gaussian(0)
        with pytest.raises(ValueError):
            gnll_loss(g, np.zeros(4))

    def test_permutation_invariance(self):
        g = random_gaussian(3)
        y = np.array([1.2, 4.4, 2.5, 3.1, 0.7])
        base = gnll_loss(g, y)
        for seed in range(6):
            p = np.random.default_rng(seed).permutation(5)
            gp = Gaussian.from_cov(g.mean[p], g.cov[np.ix_(p, p)].copy())
            assert gnll_loss(gp, y[p]) == pytest.approx(base, abs=1e-12)

    def test_translation_consistency_exact(self):
        # Dyadic shifts add without rounding, so the residual is bit-identical
        # and the loss must match exactly, not just approximately.
        g = random_gaussian(4)
        mu = np.array([0.5, -1.25, 2.0, 0.25, -0.75])
        y = np.array([1.0, 0.5, -0.5, 2.25, 0.0])
        c = np.array([1.5, -2.0, 0.75, -0.25, 3.0])
        base = gnll_loss(Gaussian.from_cov(mu, g.cov.copy()), y)
        shifted = gnll_loss(Gaussian.from_cov(mu + c, g.cov.copy()), y + c)
        assert shifted == base

    def test_minimum_over_mean_sits_at_label(self):
        g = random_gaussian(5)
        y = g.mean.copy()
        d_mean, _ = gnll_grad_gaussian(g, y)
        assert np.all(d_mean == 0.0)
        # Any nearby mean scores strictly worse with the covariance fixed.
        rng = np.random.default_rng(11)
        for _ in range(20):
            off = Gaussian.from_cov(y + 0.1 * rng.standard_normal(5),
                                    g.cov.copy())
            assert gnll_loss(off, y) > gnll_loss(g, y)


class TestGnllGradGaussian:
    def test_scalar_hand_values(self):
        g = Gaussian.from_cov(np.array([1.0]), np.array([[4.0]]))
        d_mean, d_cov = gnll_grad_gaussian(g, np.array([3.0]))
        assert d_mean[0] == pytest.approx(-0.5, abs=1e-15)
        assert d_cov[0, 0] == pytest.approx(0.0, abs=1e-15)

        d_mean, d_cov = gnll_grad_gaussian(g, np.array([5.0]))
        assert d_mean[0] == pytest.approx(-1.0, abs=1e-15)
        assert d_cov[0, 0] == pytest.approx(-0.375, abs=1e-15)

    def test_matches_finite_differences(self):
        g = random_gaussian(7)
        y = np.random.default_rng(70).uniform(1.0, 5.0, 5)
        d_mean, d_cov = gnll_grad_gaussian(g, y)

        fd_mean = fd_grad(
            lambda m: gnll_loss(Gaussian.from_cov(m, g.cov.copy()), y),
            g.mean)
        assert max_rel_err(d_mean, fd_mean) < 1e-5

        # d_cov uses the all-entries convention: a symmetric bump on (i, j)
        # and (j, i) moves the loss by the sum of both entries.
        for i in range(5):
            for j in range(i + 1):
                bump = np.zeros((5, 5))
                bump[i, j] += 1.0
                bump[j, i] += 1.0 if i != j else 0.0

                def at(t):
                    return gnll_loss(
                        Gaussian.from_cov(g.mean.copy(), g.cov + t * bump), y)

                numeric = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP)
                analytic = d_cov[i, j] + (d_cov[j, i] if i != j else 0.0)
                assert max_rel_err(analytic, numeric) < 1e-5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gnll_grad_gaussian(random_gaussian(1), np.zeros(3))


class TestGnllGradRaw:
    def test_zero_residual_kills_mean_gradient(self):
        amap = AffineMap.default()
        rng = np.random.default_rng(21)
        raw = rng.standard_normal(20)
        y = amap.A @ raw[:5] + amap.b
        grad = gnll_grad_raw(raw, y, amap)
        assert np.all(grad.d_mean == 0.0)

    def test_scalar_affine_consistent_zero_residual(self):
        amap = AffineMap(np.array([[2.0]]), np.array([3.0]))
        m = 0.75
        raw = np.array([m, 0.3])
        grad = gnll_grad_raw(raw, np.array([3.0 + 2.0 * m]), amap)
        assert grad.d_mean[0] == 0.0

    def test_finite_difference_oracle(self):
        amap = AffineMap.default()
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            raw = rng.standard_normal(20)
            y = rng.uniform(1.0, 5.0, 5)
            grad = gnll_grad_raw(raw, y, amap).concat()
            numeric = fd_grad(lambda r: variant_loss("full", r, y, amap), raw)
            worst = max(worst, max_rel_err(grad, numeric))
        assert worst < 1e-5

    def test_finite_difference_general_affine(self):
        # Checks the chain rule through a non-diagonal A.  Diagonal raw
        # entries are kept order-one so the covariance stays well enough
        # conditioned for the difference quotient itself to be trustworthy.
        rng = np.random.default_rng(99)
        a = np.eye(5) + 0.3 * rng.standard_normal((5, 5))
        amap = AffineMap(a, rng.standard_normal(5))
        diag_pos = 5 + np.array([tri_size(i + 1) - 1 for i in range(5)])
        for _ in range(10):
            raw = rng.standard_normal(20)
            raw[diag_pos] = rng.uniform(0.3, 1.5, 5)
            y = rng.uniform(1.0, 5.0, 5)
            grad = gnll_grad_raw(raw, y, amap).concat()
            numeric = fd_grad(lambda r: variant_loss("full", r, y, amap), raw)
            assert max_rel_err(grad, numeric) < 1e-5

    def test_floored_diagonal_blocks_gradient(self):
        # Once the post-softplus floor binds, the raw entry has no local
        # influence and its gradient coordinate must be exactly zero.
        amap = AffineMap.default()
        raw = np.random.default_rng(5).standard_normal(20)
        raw[5] = -50.0  # packed position of (0, 0)
        grad = gnll_grad_raw(raw, np.full(5, 3.0), amap)
        assert grad.d_tri[0] == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_overflow_raises_numeric_failure(self):
        amap = AffineMap.default()
        raw = np.zeros(20)
        raw[5] = 1e200  # softplus is identity out here; the product overflows
        with pytest.raises(NumericFailure):
            gnll_grad_raw(raw, np.full(5, 3.0), amap)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            gnll_grad_raw(np.zeros(19), np.zeros(5), AffineMap.default())


class TestMse:
    def test_zero_at_match(self):
        y = np.array([1.0, 2.0, 3.0])
        assert mse_loss(y.copy(), y) == 0.0

    def test_hand_value(self):
        assert mse_loss(np.array([3.0, 3.0]), np.array([1.0, 5.0])) == 4.0

    def test_hand_gradient(self):
        got = mse_grad(np.array([3.0, 3.0]), np.array([1.0, 5.0]))
        np.testing.assert_array_equal(got, np.array([2.0, -2.0]))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(31)
        pred = rng.standard_normal(5)
        y = rng.uniform(1.0, 5.0, 5)
        numeric = fd_grad(lambda p: mse_loss(p, y), pred)
        assert max_rel_err(mse_grad(pred, y), numeric) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros(3), np.zeros(4))
        with pytest.raises(ValueError):
            mse_grad(np.zeros(3), np.zeros(4))


class TestDiagGnll:
    def test_equals_full_with_zero_off_diagonals(self):
        amap = AffineMap.default()
        rng = np.random.default_rng(41)
        diag_pos = np.array([tri_size(i + 1) - 1 for i in range(5)])
        for _ in range(10):
            means = rng.standard_normal(5)
            scales = rng.standard_normal(5)
            y = rng.uniform(1.0, 5.0, 5)
            tri = np.zeros(15)
            tri[diag_pos] = scales
            full_raw = np.concatenate([means, tri])

            assert diag_gnll_loss(means, scales, y, amap) == variant_loss(
                "full", full_raw, y, amap)

            got = diag_gnll_grad_raw(means, scales, y, amap)
            ref = gnll_grad_raw(full_raw, y, amap)
            np.testing.assert_array_equal(got.d_mean, ref.d_mean)
            np.testing.assert_array_equal(got.d_tri, ref.d_tri[diag_pos])

    def test_scalar_reduction(self):
        amap = AffineMap(np.array([[1.0]]), np.array([0.0]))
        got = diag_gnll_loss(np.array([0.0]), np.array([0.541325]),
                             np.array([1.0]), amap)
        assert got == pytest.approx(0.5, abs=1e-6)
        exact = diag_gnll_loss(np.array([0.0]),
                               np.array([softplus_inv(1.0)]),
                               np.array([1.0]), amap)
        assert exact == pytest.approx(0.5, abs=1e-12)

    def test_zero_residual_unit_scales(self):
        amap = AffineMap.identity()
        y = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        scales = np.full(5, softplus_inv(1.0))
        assert diag_gnll_loss(y.copy(), scales, y, amap) == pytest.approx(
            0.0, abs=1e-12)

    def test_shape_validation(self):
        amap = AffineMap.default()
        with pytest.raises(ValueError):
            diag_gnll_loss(np.zeros(5), np.zeros(4), np.zeros(5), amap)
        with pytest.raises(ValueError):
            diag_gnll_loss(np.zeros(4), np.zeros(5), np.zeros(5), amap)


class TestIdentityCovMseProportionality:
    def test_mean_gradient_is_n_over_two_times_mse(self):
        # With unit covariance and the identity output map, the probabilistic
        # mean gradient collapses to (n/2) times the MSE gradient.
        amap = AffineMap.identity()
        rng = np.random.default_rng(51)
        scales = np.full(5, softplus_inv(1.0))
        for _ in range(20):
            means = rng.uniform(1.0, 5.0, 5)
            y = rng.uniform(1.0, 5.0, 5)
            grad = diag_gnll_grad_raw(means, scales, y, amap)
            expect = 2.5 * mse_grad(means, y)
            np.testing.assert_allclose(grad.d_mean, expect, atol=1e-12)


class TestVariantDispatch:
    def test_full_round_trip(self):
        amap = AffineMap.default()
        raw = np.random.default_rng(61).standard_normal(20)
        y = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        loss, grad = variant_loss_grad("full", raw, y, amap)
        assert grad.shape == (20,)
        np.testing.assert_array_equal(grad, gnll_grad_raw(raw, y, amap).concat())
        assert loss == variant_loss("full", raw, y, amap)

    def test_independent_layout(self):
        amap = AffineMap.default()
        raw = np.random.default_rng(62).standard_normal(10)
        y = np.array([2.0, 2.0, 3.0, 3.0, 4.0])
        loss, grad = variant_loss_grad("independent", raw, y, amap)
        assert grad.shape == (10,)
        assert loss == diag_gnll_loss(raw[:5], raw[5:], y, amap)

    def test_mse_layout(self):
        amap = AffineMap.default()
        raw = np.array([0.0, 0.1, -0.1, 0.2, 0.0])
        y = np.array([3.0, 3.2, 2.8, 3.4, 3.0])
        loss, grad = variant_loss_grad("mse", raw, y, amap)
        pred = amap.A @ raw + amap.b
        assert loss == mse_loss(pred, y)
        np.testing.assert_array_equal(grad, amap.A.T @ mse_grad(pred, y))

    def test_finite_difference_all_variants(self):
        amap = AffineMap.default()
        rng = np.random.default_rng(2025)
        for variant, width in (("independent", 10), ("mse", 5)):
            worst = 0.0
            for _ in range(100):
                raw = rng.standard_normal(width)
                y = rng.uniform(1.0, 5.0, 5)
                _, grad = variant_loss_grad(variant, raw, y, amap)
                numeric = fd_grad(
                    lambda r: variant_loss(variant, r, y, amap), raw)
                worst = max(worst, max_rel_err(grad, numeric))
            assert worst < 1e-5, variant

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            variant_loss("ensemble", np.zeros(20), np.zeros(5),
                         AffineMap.default())

    def test_wrong_width_per_variant(self):
        amap = AffineMap.default()
        y = np.zeros(5)
        with pytest.raises(ValueError):
            variant_loss("independent", np.zeros(9), y, amap)
        with pytest.raises(ValueError):
            variant_loss("mse", np.zeros(6), y, amap)
