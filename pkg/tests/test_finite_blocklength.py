import math

import numpy as np
import pytest
from scipy.stats import norm

from rateloss import (
    GaussianCache,
    InfoLossSample,
    InfoLossSamples,
    InsufficientSamplesError,
    InvalidInputError,
    UDensityRule,
    density_u,
    dispersion_prob,
    estimate_moments,
    expected_gen_error,
    log_density_ratios,
    moment_matrix,
    rate_loss_bound,
    rates,
    region_curve,
    sample_info_loss,
    simulate_replicates,
)
from rateloss.finite_blocklength import RegionConfig
from rateloss.streams import substream


@pytest.fixture(scope="module")
def info_samples(quad_source, half_channel):
    return sample_info_loss(quad_source, half_channel, 500, 20_000,
                            substream(401, 0))


@pytest.fixture(scope="module")
def cache_1m():
    return GaussianCache(1_000_000, substream(402, 0))


class TestSampleInfoLoss:
    def test_rate_consistency(self, quad_source, half_channel, info_samples):
        total = info_samples.v1 + info_samples.v2
        se = total.std(ddof=1) / math.sqrt(len(info_samples))
        target = rates(quad_source.sigma2, half_channel).r_wz
        assert abs(total.mean() - target) <= 3 * se

    def test_loss_component_matches_regression_oracle(self, quad_source, half_channel,
                                                      info_samples):
        batch = simulate_replicates(quad_source, half_channel, 500, 20_000,
                                    substream(401, 1))
        se = math.sqrt(info_samples.v3.var(ddof=1) / len(info_samples)
                       + batch.expected_given_design.var(ddof=1) / 20_000)
        assert abs(info_samples.v3.mean() - batch.expected_given_design.mean()) <= 3 * se

    def test_deterministic_ratio_check(self, quad_source, half_channel):
        # fix (x, y, u) and recompute v2 against the adaptive quadrature
        x, y, u = 4.0, 0.25, 1.7
        alpha, sphi2 = half_channel.alpha, half_channel.sigma_phi2
        p_u_ref = density_u(quad_source, half_channel, u)
        expected_v2 = math.log2(
            norm.pdf(u, loc=alpha * x, scale=alpha * math.sqrt(sphi2)) / p_u_ref
        )
        rule = UDensityRule(quad_source, half_channel)
        _, v2 = log_density_ratios(quad_source, half_channel,
                                   np.array([x]), np.array([y]), np.array([u]),
                                   rule(np.array([u])))
        assert v2[0] == pytest.approx(expected_v2, abs=1e-6)

    def test_v1_against_conditional_density(self, quad_source, half_channel):
        x, y, u = -1.0, -0.4, 0.3
        alpha = half_channel.alpha
        var_uy = alpha**2 * (quad_source.sigma2 + half_channel.sigma_phi2)
        mean_uy = alpha * float(quad_source.regression_mean(np.array([y]))[0])
        p_u_ref = density_u(quad_source, half_channel, u)
        expected_v1 = -math.log2(norm.pdf(u, loc=mean_uy, scale=math.sqrt(var_uy)) / p_u_ref)
        rule = UDensityRule(quad_source, half_channel)
        v1, _ = log_density_ratios(quad_source, half_channel,
                                   np.array([x]), np.array([y]), np.array([u]),
                                   rule(np.array([u])))
        assert v1[0] == pytest.approx(expected_v1, abs=1e-6)

    def test_underflow_resampling(self, quad_source, half_channel):
        rule = UDensityRule(quad_source, half_channel)

        def leaky_rule(u):
            vals = np.asarray(rule(u), dtype=float)
            return np.where(u < 1.0, 0.0, vals)  # poke holes below u = 1

        samples = sample_info_loss(quad_source, half_channel, 100, 500,
                                   substream(401, 2), u_rule=leaky_rule)
        assert samples.rejections > 0
        assert np.all(np.isfinite(samples.stacked()))

    def test_conditional_mode(self, quad_source, half_channel):
        samples = sample_info_loss(quad_source, half_channel, 400, 2000,
                                   substream(401, 3), v3_mode="conditional")
        assert samples.v3_mode == "conditional"
        assert np.all(samples.v3 >= quad_source.sigma2)

    def test_iteration_yields_scalar_samples(self, info_samples):
        first = next(iter(info_samples))
        assert isinstance(first, InfoLossSample)
        assert first.v1 == info_samples.v1[0]
        assert first.v3 >= 0.0
        assert len(info_samples) == 20_000


class TestEstimateMoments:
    def test_constant_input_zero_covariance(self):
        arr = InfoLossSamples(v1=np.full(1500, 1.5), v2=np.full(1500, -0.5),
                              v3=np.full(1500, 16.0), n_train=10, rejections=0,
                              v3_mode="per-sample")
        summary = estimate_moments(arr)
        np.testing.assert_allclose(summary.v, np.zeros((3, 3)), atol=1e-12)
        np.testing.assert_allclose(summary.j, [1.5, -0.5, 16.0])

    def test_known_gaussian_recovered(self):
        rng = substream(403, 0)
        mean = np.array([1.0, -2.0, 5.0])
        cov = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 4.0]])
        chol = np.linalg.cholesky(cov)
        m = 200_000
        draws = mean + rng.standard_normal((m, 3)) @ chol.T
        summary = estimate_moments(
            InfoLossSamples(v1=draws[:, 0], v2=draws[:, 1], v3=draws[:, 2],
                            n_train=1, rejections=0, v3_mode="per-sample"))
        se_mean = np.sqrt(np.diag(cov) / m)
        np.testing.assert_array_less(np.abs(summary.j - mean), 3 * se_mean)
        # covariance entries: se ~ sqrt((Vij^2 + Vii Vjj) / m)
        se_cov = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / m)
        np.testing.assert_array_less(np.abs(summary.v - cov), 3 * se_cov + 1e-12)

    def test_loss_mean_above_noise_floor(self, quad_source, info_samples):
        summary = estimate_moments(info_samples)
        se = info_samples.v3.std(ddof=1) / math.sqrt(len(info_samples))
        assert summary.j[2] >= quad_source.sigma2 - 3 * se

    def test_accepts_list_of_samples(self):
        rng = substream(403, 1)
        items = [InfoLossSample(float(a), float(b), float(abs(c)))
                 for a, b, c in rng.normal(size=(1200, 3))]
        summary = estimate_moments(items)
        assert summary.m_samples == 1200

    def test_too_few_samples(self):
        with pytest.raises(InsufficientSamplesError):
            estimate_moments([InfoLossSample(0.0, 0.0, 0.0)] * 999)


class TestDispersionProb:
    def test_median_orthant(self, cache_1m):
        p = dispersion_prob(np.eye(3), np.zeros(3), cache_1m)
        assert abs(p - 0.125) <= 0.002

    def test_single_coordinate(self, cache_1m):
        p = dispersion_prob(np.eye(3), np.array([1e9, 1e9, 0.0]), cache_1m)
        assert abs(p - 0.5) <= 0.002

    def test_univariate_quantile_embedding(self, cache_1m):
        v = np.diag([1.0, 1e-12, 1e-12])
        p = dispersion_prob(v, np.array([1.6449, 1e9, 1e9]), cache_1m)
        assert abs(p - 0.95) <= 0.002

    def test_monotone_in_each_coordinate(self, cache_1m):
        v = np.array([[1.0, -0.4, 0.2], [-0.4, 2.0, 0.1], [0.2, 0.1, 0.5]])
        rng = substream(404, 0)
        for _ in range(25):
            b = rng.normal(0, 1.2, size=3)
            base = dispersion_prob(v, b, cache_1m)
            for axis in range(3):
                up = b.copy()
                up[axis] += 0.5
                assert dispersion_prob(v, up, cache_1m) >= base

    def test_non_psd_rejected(self, cache_1m):
        bad = np.diag([1.0, -0.5, 1.0])
        with pytest.raises(InvalidInputError):
            dispersion_prob(bad, np.zeros(3), cache_1m)

    def test_asymmetric_rejected(self, cache_1m):
        bad = np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(InvalidInputError):
            dispersion_prob(bad, np.zeros(3), cache_1m)

    def test_correlated_samples_have_requested_covariance(self):
        cache = GaussianCache(400_000, substream(404, 1))
        v = np.array([[2.0, 0.7, -0.3], [0.7, 1.5, 0.2], [-0.3, 0.2, 1.0]])
        emp = np.cov(cache.correlated(v), rowvar=False)
        assert np.abs(emp - v).max() < 0.03


@pytest.fixture(scope="module")
def moments(quad_source, half_channel):
    samples = sample_info_loss(quad_source, half_channel, 1000, 30_000,
                               substream(405, 0))
    return estimate_moments(samples)


class TestRateLossBound:
    def test_loss_below_floor_infeasible(self, quad_source, moments, cache_1m):
        for l in (10.0, 15.0, 15.9):
            pt = rate_loss_bound(moments.j, moments.v, 1000, 0.1, l, cache_1m)
            assert not pt.feasible
            assert pt.rate == math.inf

    def test_large_n_converges_to_asymptotic_rate(self, moments, cache_1m):
        pt = rate_loss_bound(moments.j, moments.v, 10**8, 0.1, 18.0, cache_1m)
        assert pt.feasible
        assert abs(pt.rate - (moments.j[0] + moments.j[1])) <= 1e-3

    def test_boundary_probability_tolerance(self, moments, cache_1m):
        pt = rate_loss_bound(moments.j, moments.v, 1000, 0.1, 18.0, cache_1m)
        assert pt.feasible
        prob = dispersion_prob(moments.v, np.array(pt.b_star), cache_1m)
        assert abs(prob - 0.9) <= 0.003

    def test_monotone_in_epsilon_and_loss(self, moments, cache_1m):
        grid = [16.8, 17.2, 17.6, 18.0, 19.0]
        strict = [rate_loss_bound(moments.j, moments.v, 1000, 0.01, l, cache_1m)
                  for l in grid]
        loose = [rate_loss_bound(moments.j, moments.v, 1000, 0.1, l, cache_1m)
                 for l in grid]
        for seq in (strict, loose):
            feas = [p.rate for p in seq if p.feasible]
            assert all(b <= a + 1e-12 for a, b in zip(feas, feas[1:]))
        for s, lo in zip(strict, loose):
            if s.feasible and lo.feasible:
                assert lo.rate <= s.rate + 1e-12

    def test_blocklength_ordering_on_benchmark(self, quad_source, half_channel,
                                               moments, cache_1m):
        samples_2000 = sample_info_loss(quad_source, half_channel, 2000, 30_000,
                                        substream(405, 1))
        moments_2000 = estimate_moments(samples_2000)
        for eps in (0.01, 0.1):
            for l in (18.0, 19.0):
                short = rate_loss_bound(moments.j, moments.v, 1000, eps, l, cache_1m)
                long = rate_loss_bound(moments_2000.j, moments_2000.v, 2000, eps, l,
                                       cache_1m)
                assert short.feasible and long.feasible
                assert long.rate <= short.rate

    def test_invalid_epsilon_rejected(self, moments, cache_1m):
        for eps in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(InvalidInputError):
                rate_loss_bound(moments.j, moments.v, 1000, eps, 18.0, cache_1m)

    def test_common_random_number_stability(self, moments, cache_1m):
        n, eps, l = 1000, 0.1, 18.0
        base = rate_loss_bound(moments.j, moments.v, n, eps, l, cache_1m).rate
        # boundary tolerance: rate shift induced by the +-0.003 probability
        # tolerance of the bisected boundary, measured on the same cache
        lo = rate_loss_bound(moments.j, moments.v, n, eps + 0.003, l, cache_1m).rate
        hi = rate_loss_bound(moments.j, moments.v, n, eps - 0.003, l, cache_1m).rate
        tol = max(abs(base - lo), abs(hi - base))
        fresh = GaussianCache(1_000_000, substream(406, 0))
        redone = rate_loss_bound(moments.j, moments.v, n, eps, l, fresh).rate
        assert abs(redone - base) <= 2 * tol


class TestRegionCurve:
    def test_rates_non_increasing_and_finite(self, quad_source, half_channel):
        cfg = RegionConfig(info_loss_samples=20_000, cache_size=300_000)
        pts = region_curve(quad_source, half_channel, 800, 0.1,
                           [16.8, 17.2, 17.6, 18.0, 19.0], cfg,
                           substream(407, 0))
        feas = [p for p in pts if p.feasible]
        assert feas, "expected at least one feasible point"
        for a, b in zip(feas, feas[1:]):
            assert b.rate <= a.rate + 1e-12
        for p in feas:
            assert 0.0 <= p.rate < math.inf

    def test_epsilon_nesting(self, quad_source, half_channel):
        cfg = RegionConfig(info_loss_samples=20_000, cache_size=300_000)
        rng = substream(407, 1)
        samples = sample_info_loss(quad_source, half_channel, 800,
                                   cfg.info_loss_samples, rng)
        moments = estimate_moments(samples)
        cache = GaussianCache(cfg.cache_size, rng)
        grid = [17.0, 17.5, 18.0, 19.0]
        tight = region_curve(quad_source, half_channel, 800, 0.01, grid, cfg,
                             moments=moments, cache=cache)
        loose = region_curve(quad_source, half_channel, 800, 0.1, grid, cfg,
                             moments=moments, cache=cache)
        for t, lo in zip(tight, loose):
            if t.feasible and lo.feasible:
                assert lo.rate <= t.rate + 1e-12

    def test_grid_validation(self, quad_source, half_channel):
        cfg = RegionConfig()
        with pytest.raises(InvalidInputError):
            region_curve(quad_source, half_channel, 800, 0.1, [17.0, 16.0], cfg,
                         substream(407, 2))
        with pytest.raises(InvalidInputError):
            region_curve(quad_source, half_channel, 800, 0.1, [], cfg,
                         substream(407, 3))
        with pytest.raises(InvalidInputError):
            region_curve(quad_source, half_channel, 800, 0.1, [17.0], cfg)
