import math

import numpy as np
import pytest
from scipy.integrate import quad

from rateloss import (
    GaussianSideInfo,
    InvalidInputError,
    PolynomialSource,
    UDensityRule,
    UniformSymmetric,
    UnsupportedModelError,
    density_u,
    density_v,
    features,
    moment_matrix,
    params_from_distortion,
    params_from_noise,
    sample_pairs,
    v_support,
)
from rateloss.streams import substream


class TestFeatures:
    def test_direct_powers(self):
        np.testing.assert_allclose(features(0.5, 3), [1.0, 0.5, 0.25])
        np.testing.assert_allclose(features(0.0, 4), [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(features(-1.0, 3), [1.0, -1.0, 1.0])

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInputError):
            features(math.inf, 3)
        with pytest.raises(InvalidInputError):
            features(math.nan, 3)
        with pytest.raises(InvalidInputError):
            features(1.0, 0)

    def test_power_property(self):
        rng = substream(101, 1)
        for y in rng.uniform(-10.0, 10.0, size=100):
            for k in (1, 2, 5, 8):
                vec = features(y, k)
                ref = np.array([y**i for i in range(k)])
                np.testing.assert_allclose(vec, ref, rtol=1e-12)


class TestSamplePairs:
    def test_noiseless_degeneration(self, quad_source):
        src = PolynomialSource(k=3, beta=quad_source.beta, sigma2=0.0)
        batch = sample_pairs(src, 100, substream(102, 0))
        np.testing.assert_array_equal(batch.x, src.regression_mean(batch.y))

    def test_residual_statistics(self, quad_source):
        n = 1_000_000
        batch = sample_pairs(quad_source, n, substream(102, 1))
        resid = batch.x - quad_source.regression_mean(batch.y)
        assert abs(resid.mean()) < 4 * 4.0 / math.sqrt(n)
        assert abs(resid.var(ddof=1) - 16.0) < 0.02 * 16.0

    def test_rejects_zero_n(self, quad_source):
        with pytest.raises(InvalidInputError):
            sample_pairs(quad_source, 0, substream(102, 2))


class TestMomentMatrix:
    def test_uniform_quadratic_against_quadrature(self, quad_source):
        got = moment_matrix(quad_source)
        # oracle: E[Y^m] = integral of y^m / 2 over [-1, 1]
        oracle = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                oracle[i, j] = quad(lambda y, m=i + j: y**m / 2.0, -1.0, 1.0)[0]
        np.testing.assert_allclose(got, oracle, atol=1e-12)
        frozen = np.array([[1.0, 0.0, 1.0 / 3.0],
                           [0.0, 1.0 / 3.0, 0.0],
                           [1.0 / 3.0, 0.0, 1.0 / 5.0]])
        np.testing.assert_allclose(got, frozen, rtol=1e-15)

    def test_k1_any_law(self):
        for dist in (UniformSymmetric(2.0), GaussianSideInfo(4.0)):
            src = PolynomialSource(k=1, beta=np.array([3.0]), sigma2=1.0, y_dist=dist)
            np.testing.assert_array_equal(moment_matrix(src), [[1.0]])

    def test_standard_normal_k2(self):
        src = PolynomialSource(k=2, beta=np.zeros(2), sigma2=1.0,
                               y_dist=GaussianSideInfo(1.0))
        got = moment_matrix(src)
        np.testing.assert_allclose(got, np.eye(2), atol=1e-15)
        # Monte Carlo oracle for the same moments
        y = substream(103, 0).standard_normal(1_000_000)
        mc = np.array([[np.mean(y**0), np.mean(y)], [np.mean(y), np.mean(y**2)]])
        np.testing.assert_allclose(got, mc, atol=5e-3)

    def test_positive_semidefinite_up_to_k8(self):
        for dist in (UniformSymmetric(1.0), UniformSymmetric(0.5),
                     GaussianSideInfo(1.0), GaussianSideInfo(2.0)):
            for k in range(1, 9):
                src = PolynomialSource(k=k, beta=np.zeros(k), sigma2=1.0, y_dist=dist)
                eig = np.linalg.eigvalsh(moment_matrix(src))
                assert eig[0] >= -1e-10 * eig[-1]


class TestDensityV:
    def test_single_root_value(self, quad_source):
        # oracle: invert v = 2 + 3y + y^2 analytically; roots 0 and -3, only
        # y = 0 lies in [-1, 1], slope |3 + 2y| = 3 there, density (1/2)/3
        roots = np.roots([1.0, 3.0, 2.0 - 2.0])
        in_range = [r for r in roots if abs(r) <= 1.0]
        assert in_range == [0.0]
        slope = abs(3.0 + 2.0 * in_range[0])
        assert density_v(quad_source, 2.0) == pytest.approx(0.5 / slope, rel=1e-14)
        assert density_v(quad_source, 2.0) == pytest.approx(1.0 / 6.0, rel=1e-14)

    def test_outside_support(self, quad_source):
        # oracle: range of 2 + 3y + y^2 over [-1, 1] is [0, 6]
        ys = np.linspace(-1.0, 1.0, 10001)
        vals = 2.0 + 3.0 * ys + ys**2
        assert vals.min() == pytest.approx(0.0, abs=1e-12)
        assert vals.max() == pytest.approx(6.0, abs=1e-12)
        assert density_v(quad_source, -1.0) == 0.0
        assert density_v(quad_source, 6.5) == 0.0

    def test_integrates_to_one(self, quad_source):
        sup = v_support(quad_source)
        val, err = quad(lambda v: density_v(quad_source, v), sup.lo, sup.hi,
                        limit=300, epsabs=1e-10)
        assert abs(val - 1.0) <= 1e-6

    def test_interior_vertex_case(self):
        # vertex at y = -0.25 inside [-1, 1]: singular endpoint plus a kink
        src = PolynomialSource(k=3, beta=np.array([0.0, 0.5, 1.0]), sigma2=1.0)
        sup = v_support(src)
        assert sup.singular_lo
        assert sup.lo == pytest.approx(-0.0625)
        assert set(np.round(sup.breakpoints, 12)) == {-0.0625, 0.5, 1.5}
        interior = [p for p in sup.breakpoints if sup.lo < p < sup.hi]
        val, _ = quad(lambda v: density_v(src, v), sup.lo, sup.hi,
                      points=interior, limit=300, epsabs=1e-10)
        assert abs(val - 1.0) <= 1e-6

    def test_nonnegative_everywhere(self, quad_source):
        grid = np.linspace(-5.0, 10.0, 5001)
        assert np.min(density_v(quad_source, grid)) >= 0.0

    def test_unsupported_models_rejected(self):
        gaussian_y = PolynomialSource(k=3, beta=np.array([2.0, 3.0, 1.0]), sigma2=1.0,
                                      y_dist=GaussianSideInfo(1.0))
        with pytest.raises(UnsupportedModelError):
            density_v(gaussian_y, 1.0)
        wrong_k = PolynomialSource(k=2, beta=np.array([1.0, 1.0]), sigma2=1.0)
        with pytest.raises(UnsupportedModelError):
            density_v(wrong_k, 1.0)
        concave = PolynomialSource(k=3, beta=np.array([2.0, 3.0, -1.0]), sigma2=1.0)
        with pytest.raises(UnsupportedModelError):
            density_v(concave, 1.0)
        wide = PolynomialSource(k=3, beta=np.array([2.0, 3.0, 1.0]), sigma2=1.0,
                                y_dist=UniformSymmetric(2.0))
        with pytest.raises(UnsupportedModelError):
            density_v(wide, 1.0)

    def test_empirical_ks(self, quad_source):
        n = 1_000_000
        y = quad_source.y_dist.sample(substream(104, 0), n)
        v = np.sort(quad_source.regression_mean(y))
        # oracle CDF: monotone quadratic on [-1, 1], so P(V <= v) maps through
        # the increasing root of the quadratic
        disc = 9.0 + 4.0 * (v - 2.0)
        root = (-3.0 + np.sqrt(np.maximum(disc, 0.0))) / 2.0
        cdf = np.clip((np.clip(root, -1.0, 1.0) + 1.0) / 2.0, 0.0, 1.0)
        ranks = np.arange(1, n + 1) / n
        ks = max(np.max(ranks - cdf), np.max(cdf - (ranks - 1.0 / n)))
        assert ks < 0.005


class TestDensityU:
    def test_integrates_to_one(self, quad_source, half_channel):
        sup = v_support(quad_source)
        sd = math.sqrt(quad_source.sigma2 + half_channel.sigma_phi2)
        alpha = half_channel.alpha
        lo, hi = alpha * (sup.lo - 8 * sd), alpha * (sup.hi + 8 * sd)
        val, _ = quad(lambda u: density_u(quad_source, half_channel, u), lo, hi,
                      limit=300, epsabs=1e-9)
        assert abs(val - 1.0) <= 1e-5

    def test_mean_matches_alpha_scaled_v_mean(self, quad_source, half_channel):
        sup = v_support(quad_source)
        sd = math.sqrt(quad_source.sigma2 + half_channel.sigma_phi2)
        alpha = half_channel.alpha
        lo, hi = alpha * (sup.lo - 8 * sd), alpha * (sup.hi + 8 * sd)
        mean, _ = quad(lambda u: u * density_u(quad_source, half_channel, u), lo, hi,
                       limit=300, epsabs=1e-9)
        # E[U] = alpha E[V] with E[V] = b0 + b2 E[Y^2]
        assert mean == pytest.approx(alpha * (2.0 + 1.0 / 3.0), abs=1e-4)

    def test_wide_noise_gaussian_limit(self, quad_source):
        channel = params_from_noise(quad_source.sigma2, 0.5, 1e6)
        var_v = 139.0 / 45.0  # beta' M beta - (E[V])^2 for this setup
        var_u = channel.alpha**2 * (quad_source.sigma2 + channel.sigma_phi2 + var_v)
        gauss_at_zero = 1.0 / math.sqrt(2 * math.pi * var_u)
        got = density_u(quad_source, channel, 0.0)
        assert got == pytest.approx(gauss_at_zero, rel=0.01)

    def test_batch_rule_matches_adaptive(self, quad_source, half_channel):
        rule = UDensityRule(quad_source, half_channel)
        us = np.linspace(-6.0, 9.0, 21)
        ref = np.array([density_u(quad_source, half_channel, u) for u in us])
        np.testing.assert_allclose(rule(us), ref, atol=1e-9)

    def test_empirical_ks(self, quad_source, half_channel):
        n = 200_000
        rng = substream(104, 1)
        batch = sample_pairs(quad_source, n, rng)
        phi = rng.normal(0.0, math.sqrt(half_channel.sigma_phi2), size=n)
        u = np.sort(half_channel.alpha * (batch.x + phi))
        rule = UDensityRule(quad_source, half_channel)
        sup = v_support(quad_source)
        sd = math.sqrt(quad_source.sigma2 + half_channel.sigma_phi2)
        alpha = half_channel.alpha
        grid = np.linspace(alpha * (sup.lo - 8 * sd), alpha * (sup.hi + 8 * sd), 8001)
        pdf = rule(grid)
        cdf = np.concatenate([[0.0],
                              np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
        cdf /= cdf[-1]
        theo = np.interp(u, grid, cdf)
        ranks = np.arange(1, n + 1) / n
        ks = max(np.max(ranks - theo), np.max(theo - (ranks - 1.0 / n)))
        assert ks < 0.01


class TestSourceValidation:
    def test_beta_length_must_match_k(self):
        with pytest.raises(InvalidInputError):
            PolynomialSource(k=3, beta=np.array([1.0, 2.0]), sigma2=1.0)

    def test_negative_sigma2_rejected(self):
        with pytest.raises(InvalidInputError):
            PolynomialSource(k=1, beta=np.array([1.0]), sigma2=-1.0)

    def test_side_info_is_centered(self):
        # both supported laws have mean zero by construction
        for dist in (UniformSymmetric(3.0), GaussianSideInfo(2.0)):
            assert dist.moment(1) == 0.0
            sample = dist.sample(substream(105, 0), 200_000)
            assert abs(sample.mean()) < 4 * sample.std() / math.sqrt(sample.size)
