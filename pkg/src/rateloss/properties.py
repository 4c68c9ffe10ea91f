"""Invariant checks aggregated by the property-suite experiment.

Each check returns a PropertyResult with the measured statistic and its
threshold, so the suite report is a machine-readable table rather than a
bare pass/fail.  The fault-injection knob scales the noise variance actually
applied by the encoder while the decoder keeps the nominal parameters; the
distortion-identity entry is the designed casualty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
from scipy.integrate import quad

from . import regression, test_channel
from .finite_blocklength import (
    GaussianCache,
    dispersion_prob,
    estimate_moments,
    sample_info_loss,
)
from .source_model import (
    GaussianSideInfo,
    PolynomialSource,
    UDensityRule,
    UniformSymmetric,
    density_v,
    design_matrix,
    features,
    moment_matrix,
    sample_pairs,
    v_support,
)
from .streams import substream

__all__ = ["PropertyResult", "run_property_checks", "PAPER_SETUP"]


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    statistic: float
    threshold: str
    detail: str


def _paper_setup():
    source = PolynomialSource(k=3, beta=np.array([2.0, 3.0, 1.0]), sigma2=16.0,
                              y_dist=UniformSymmetric(1.0))
    channel = test_channel.params_from_distortion(source.sigma2, 8.0)
    return source, channel


PAPER_SETUP = _paper_setup


def run_property_checks(seed: int, *, encoder_sigma_phi2_scale: float = 1.0,
                        mc_pairs: int = 200_000,
                        info_loss_samples: int = 5_000,
                        cache_size: int = 200_000) -> List[PropertyResult]:
    """Run every registered invariant on the canonical quadratic setup."""
    source, channel = _paper_setup()
    ctx = _Context(source, channel, seed, encoder_sigma_phi2_scale,
                   mc_pairs, info_loss_samples, cache_size)
    results = []
    for i, check in enumerate(_CHECKS):
        results.append(check(ctx, substream(seed, (5 << 40) | i)))
    return results


@dataclass
class _Context:
    source: PolynomialSource
    channel: test_channel.TestChannelParams
    seed: int
    encoder_scale: float
    mc_pairs: int
    info_loss_samples: int
    cache_size: int


def _check(fn: Callable) -> Callable:
    _CHECKS.append(fn)
    return fn


_CHECKS: List[Callable] = []


@_check
def _features_powers(ctx, rng):
    ys = rng.uniform(-10.0, 10.0, size=200)
    worst = 0.0
    for y in ys:
        for k in (1, 3, 6):
            vec = features(y, k)
            ref = np.array([y**i for i in range(k)])
            scale = np.maximum(np.abs(ref), 1e-300)
            worst = max(worst, float(np.max(np.abs(vec - ref) / scale)))
    return PropertyResult("features_powers", worst <= 1e-12, worst, "<= 1e-12",
                          "max relative error of regressor powers")


@_check
def _moment_matrix_psd(ctx, rng):
    worst = math.inf
    for dist in (UniformSymmetric(1.0), UniformSymmetric(2.5), GaussianSideInfo(1.0),
                 GaussianSideInfo(0.3)):
        for k in range(1, 9):
            src = PolynomialSource(k=k, beta=np.zeros(k), sigma2=1.0, y_dist=dist)
            eig = np.linalg.eigvalsh(moment_matrix(src))
            worst = min(worst, float(eig[0] / max(eig[-1], 1e-300)))
    return PropertyResult("moment_matrix_psd", worst >= -1e-10, worst,
                          ">= -1e-10", "min eigenvalue ratio over k <= 8, both side-info laws")


@_check
def _density_v_normalized(ctx, rng):
    sup = v_support(ctx.source)
    interior = [p for p in sup.breakpoints if sup.lo < p < sup.hi]
    val, _ = quad(lambda v: density_v(ctx.source, v), sup.lo, sup.hi,
                  points=interior or None, limit=300, epsabs=1e-10)
    gap = abs(val - 1.0)
    grid = np.linspace(sup.lo - 1.0, sup.hi + 1.0, 2001)
    nonneg = float(np.min(density_v(ctx.source, grid)))
    ok = gap <= 1e-6 and nonneg >= 0.0
    return PropertyResult("density_v_normalized", ok, gap, "<= 1e-6",
                          f"|integral - 1|; min density on grid {nonneg:.3g}")


@_check
def _density_v_ks(ctx, rng):
    n = 1_000_000
    y = ctx.source.y_dist.sample(rng, n)
    v = ctx.source.regression_mean(y)
    ks = _ks_statistic(np.sort(v), lambda t: _cdf_v(ctx.source, t))
    return PropertyResult("density_v_ks", ks < 0.005, ks, "< 0.005",
                          f"Kolmogorov-Smirnov distance, {n} samples vs analytic law")


@_check
def _density_u_ks(ctx, rng):
    n = 200_000
    batch = sample_pairs(ctx.source, n, rng)
    u = test_channel.apply(batch.x, ctx.channel, rng)
    rule = UDensityRule(ctx.source, ctx.channel)
    sup = v_support(ctx.source)
    sd = math.sqrt(ctx.source.sigma2 + ctx.channel.sigma_phi2)
    alpha = ctx.channel.alpha
    grid = np.linspace(alpha * (sup.lo - 8 * sd), alpha * (sup.hi + 8 * sd), 8001)
    pdf = rule(grid)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    ks = _ks_statistic(np.sort(u), lambda t: np.interp(t, grid, cdf))
    return PropertyResult("density_u_ks", ks < 0.01, ks, "< 0.01",
                          f"Kolmogorov-Smirnov distance, {n} coded samples")


@_check
def _rate_equality(ctx, rng):
    sigma2 = ctx.source.sigma2
    worst = 0.0
    for d in np.linspace(0.05 * sigma2, 0.95 * sigma2, 20):
        ch = test_channel.params_from_distortion(sigma2, float(d))
        rs = test_channel.rates(sigma2, ch)
        worst = max(worst, abs(rs.r_wz - rs.r_conditional), abs(rs.r_b - rs.r_wz))
    return PropertyResult("rate_equality", worst <= 1e-12, worst, "<= 1e-12",
                          "max |r_wz - r_conditional|, |r_b - r_wz| over 20-point grid")


@_check
def _distortion_identity(ctx, rng):
    src, ch = ctx.source, ctx.channel
    d = ch.distortion
    batch = sample_pairs(src, ctx.mc_pairs, rng)
    # encoder applies (possibly faulted) noise; decoder reconstructs with nominal params
    actual_phi2 = ch.sigma_phi2 * ctx.encoder_scale
    phi = rng.normal(0.0, math.sqrt(actual_phi2), size=ctx.mc_pairs)
    u = ch.alpha * (batch.x + phi)
    xhat = test_channel.reconstruct(u, batch.y, src.beta, ch)
    sq = (batch.x - xhat) ** 2
    emp = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(ctx.mc_pairs))
    closed = (ch.alpha - 1.0) ** 2 * src.sigma2 + ch.alpha**2 * ch.sigma_phi2
    ok = abs(emp - d) <= 3 * se and abs(closed - d) <= 1e-12
    return PropertyResult("distortion_identity", ok, abs(emp - d), f"<= {3 * se:.4g}",
                          f"|empirical - D| with closed form {closed:.6g} vs D {d:.6g}")


@_check
def _channel_independence(ctx, rng):
    n = 1_000_000
    batch = sample_pairs(ctx.source, n, rng)
    u = test_channel.apply(batch.x, ctx.channel, rng)
    resid = u / ctx.channel.alpha - batch.x
    corr = float(np.corrcoef(resid, batch.x)[0, 1])
    band = 3.0 / math.sqrt(n)
    return PropertyResult("channel_independence", abs(corr) <= band, abs(corr),
                          f"<= {band:.4g}", "correlation between recovered noise and x")


@_check
def _raginsky_monotone(ctx, rng):
    sigma2 = ctx.source.sigma2
    grid = np.linspace(0.0, 8.0, 33)
    vals = [test_channel.raginsky_sqrt_bound(r, sigma2) for r in grid]
    drops = all(b < a for a, b in zip(vals, vals[1:]))
    above = all(v > math.sqrt(sigma2) for v in vals)
    stat = min(a - b for a, b in zip(vals, vals[1:]))
    return PropertyResult("raginsky_monotone", drops and above, stat, "> 0",
                          "smallest decrement over rate grid; bound stays above sigma")


@_check
def _ols_unbiased(ctx, rng):
    batch = regression.simulate_replicates(ctx.source, ctx.channel, 500, 4000, rng)
    err = batch.beta_hat.mean(axis=0) - ctx.source.beta
    se = batch.beta_hat.std(axis=0, ddof=1) / math.sqrt(batch.beta_hat.shape[0])
    ratio = float(np.max(np.abs(err) / se))
    return PropertyResult("ols_unbiased", ratio <= 3.0, ratio, "<= 3",
                          "max componentwise |mean(beta_hat) - beta| / stderr")


@_check
def _conditional_matches_mc(ctx, rng):
    src, ch = ctx.source, ctx.channel
    train = sample_pairs(src, 2000, rng)
    u = test_channel.apply(train.x, ch, rng)
    predictor = regression.ols_fit(u, train.y, ch, src.k)
    closed = regression.gen_error_conditional(predictor, src.beta,
                                              moment_matrix(src), src.sigma2)
    fresh = sample_pairs(src, ctx.mc_pairs, rng)
    losses = (fresh.x - predictor.predict(fresh.y)) ** 2
    mc = float(np.mean(losses))
    se = float(np.std(losses, ddof=1) / math.sqrt(ctx.mc_pairs))
    dev = abs(mc - closed)
    return PropertyResult("conditional_matches_mc", dev <= 3 * se, dev,
                          f"<= {3 * se:.4g}", "closed-form conditional error vs fresh-pair MC")


@_check
def _convergence_bounded(ctx, rng):
    src, ch = ctx.source, ctx.channel
    moment = moment_matrix(src)
    eig = np.linalg.eigvalsh(moment)
    limit = (src.sigma2 + ch.sigma_phi2) * src.k * (eig[-1] / eig[0]) * 1.1
    worst = 0.0
    for n in (200, 500, 1000, 5000):
        batch = regression.simulate_replicates(src, ch, n, 2000, rng)
        worst = max(worst, n * (float(batch.gen_error.mean()) - src.sigma2))
    return PropertyResult("convergence_bounded", worst <= limit, worst,
                          f"<= {limit:.4g}", "max over n of n * (mean error - sigma2)")


@_check
def _gen_error_floor(ctx, rng):
    batch = regression.simulate_replicates(ctx.source, ctx.channel, 200, 2000, rng)
    low = float(batch.gen_error.min())
    return PropertyResult("gen_error_floor", low >= ctx.source.sigma2, low,
                          f">= {ctx.source.sigma2}", "smallest conditional error across replicates")


@_check
def _ruhe_inequality(ctx, rng):
    fails = 0
    for _ in range(1000):
        dim = int(rng.integers(2, 7))
        a = _random_psd(rng, dim)
        b = _random_psd(rng, dim)
        if not regression.ruhe_check(a, b):
            fails += 1
    return PropertyResult("ruhe_inequality", fails == 0, float(fails), "== 0",
                          "failures among 1000 random PSD pairs, dims 2-6")


@_check
def _min_eig_inequality(ctx, rng):
    fails = 0
    for _ in range(1000):
        dim = int(rng.integers(2, 7))
        a = _random_symmetric(rng, dim)
        b = _random_symmetric(rng, dim)
        if not regression.min_eig_bound_check(a, b):
            fails += 1
    return PropertyResult("min_eig_inequality", fails == 0, float(fails), "== 0",
                          "failures among 1000 random symmetric pairs, dims 2-6")


@_check
def _dispersion_monotone(ctx, rng):
    cache = GaussianCache(ctx.cache_size, rng)
    v = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]])
    violations = 0
    for _ in range(40):
        b = rng.normal(0.0, 1.5, size=3)
        base = dispersion_prob(v, b, cache)
        for axis in range(3):
            bumped = b.copy()
            bumped[axis] += abs(rng.normal(0.0, 0.5)) + 0.01
            if dispersion_prob(v, bumped, cache) < base:
                violations += 1
    return PropertyResult("dispersion_monotone", violations == 0, float(violations),
                          "== 0", "orthant probability nondecreasing in each coordinate")


@_check
def _info_density_rate(ctx, rng):
    src = ctx.source
    worst = 0.0
    for d in (4.0, 8.0, 12.0):
        ch = test_channel.params_from_distortion(src.sigma2, d)
        samples = sample_info_loss(src, ch, 200, ctx.info_loss_samples, rng)
        moments = estimate_moments(samples)
        total = samples.v1 + samples.v2
        se = float(np.std(total, ddof=1) / math.sqrt(len(samples)))
        target = test_channel.rates(src.sigma2, ch).r_wz
        worst = max(worst, abs(float(moments.j[0] + moments.j[1]) - target) / (3 * se))
    return PropertyResult("info_density_rate", worst <= 1.0, worst, "<= 1",
                          "max |J1 + J2 - r_wz| / (3 stderr) over D in {4, 8, 12}")


def _random_psd(rng, dim):
    a = rng.normal(size=(dim, dim))
    return a @ a.T


def _random_symmetric(rng, dim):
    a = rng.normal(size=(dim, dim))
    return 0.5 * (a + a.T)


def _ks_statistic(sorted_samples: np.ndarray, cdf: Callable) -> float:
    n = sorted_samples.shape[0]
    theo = np.asarray(cdf(sorted_samples), dtype=float)
    hi = np.max(np.arange(1, n + 1) / n - theo)
    lo = np.max(theo - np.arange(0, n) / n)
    return float(max(hi, lo))


def _cdf_v(source: PolynomialSource, v: np.ndarray) -> np.ndarray:
    """P(V <= v) from the sublevel sets of the quadratic on [-1, 1].

    Root-geometry based, independent of the density formula: the sublevel
    set {y : p(y) <= v} is the interval between the quadratic's roots, so its
    intersection with [-1, 1] gives the probability directly.
    """
    b0, b1, b2 = source.beta
    v = np.asarray(v, dtype=float)
    disc = b1 * b1 + 4.0 * b2 * (v - b0)
    pos = disc > 0
    root = np.sqrt(np.where(pos, disc, 0.0))
    y1 = (-b1 - root) / (2 * b2)
    y2 = (-b1 + root) / (2 * b2)
    lo = np.clip(y1, -1.0, 1.0)
    hi = np.clip(y2, -1.0, 1.0)
    return np.where(pos, np.maximum(hi - lo, 0.0) / 2.0, 0.0)
