"""Polynomial source with decoder side information.

The data model: side information ``Y`` with ``E[Y] = 0``, a coefficient
vector ``beta`` of length ``k``, and

    X = beta' [Y^0, ..., Y^(k-1)] + N,      N ~ Normal(0, sigma2).

This module owns the joint law: sampling of (X, Y) pairs, the analytic
second-moment matrix of the regressor vector, and the analytic densities of
V = beta'Y* and of the coded observation U used in the finite-blocklength
analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.integrate import quad

from .errors import InvalidInputError, NumericalFailureError, UnsupportedModelError

__all__ = [
    "UniformSymmetric",
    "GaussianSideInfo",
    "PolynomialSource",
    "SampleBatch",
    "VSupport",
    "features",
    "design_matrix",
    "sample_pairs",
    "moment_matrix",
    "v_support",
    "density_v",
    "density_u",
    "UDensityRule",
]

_QUAD_ABS_TOL = 1e-8


@dataclass(frozen=True)
class UniformSymmetric:
    """Side information Y uniform on [-half_width, half_width]."""

    half_width: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise InvalidInputError("half_width must be finite and positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        a = self.half_width
        return rng.uniform(-a, a, size=size)

    def moment(self, m: int) -> float:
        """E[Y^m]; a^m / (m+1) for even m, 0 for odd m."""
        if m % 2:
            return 0.0
        return self.half_width**m / (m + 1)


@dataclass(frozen=True)
class GaussianSideInfo:
    """Side information Y ~ Normal(0, variance)."""

    variance: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise InvalidInputError("variance must be finite and positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(0.0, math.sqrt(self.variance), size=size)

    def moment(self, m: int) -> float:
        """E[Y^m]; sigma_y^m (m-1)!! for even m, 0 for odd m."""
        if m % 2:
            return 0.0
        out = 1.0
        for j in range(1, m, 2):  # (m-1)!! = 1*3*...*(m-1)
            out *= j
        return self.variance ** (m // 2) * out


SideInfoLaw = Union[UniformSymmetric, GaussianSideInfo]


@dataclass(frozen=True, eq=False)
class PolynomialSource:
    """Joint law of (X, Y): coefficients, noise variance, and the Y law.

    ``sigma2 = 0`` is accepted as the noiseless degenerate case; it is valid
    for sampling but not for rate computations (which require 0 < D < sigma2).
    """

    k: int
    beta: np.ndarray
    sigma2: float
    y_dist: SideInfoLaw = field(default_factory=UniformSymmetric)

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("k must be >= 1")
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (self.k,):
            raise InvalidInputError(f"beta must have shape ({self.k},), got {beta.shape}")
        if not np.all(np.isfinite(beta)):
            raise InvalidInputError("beta entries must be finite")
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise InvalidInputError("sigma2 must be finite and >= 0")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def regression_mean(self, y: np.ndarray) -> np.ndarray:
        """beta' y* evaluated at each y."""
        return design_matrix(np.asarray(y, dtype=float), self.k) @ self.beta


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """n i.i.d. (x, y) pairs drawn from a PolynomialSource."""

    x: np.ndarray
    y: np.ndarray
    n: int

    def __post_init__(self):
        if len(self.x) != self.n or len(self.y) != self.n:
            raise InvalidInputError("x and y must both have length n")


def features(y: float, k: int) -> np.ndarray:
    """Regressor vector [y^0, y^1, ..., y^(k-1)] for a scalar y."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    y = float(y)
    if not math.isfinite(y):
        raise InvalidInputError("y must be finite")
    return y ** np.arange(k, dtype=float)


def design_matrix(y: np.ndarray, k: int) -> np.ndarray:
    """Stacked regressor vectors, shape (n, k); row i is features(y[i], k)."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("y entries must be finite")
    return np.vander(y, k, increasing=True)


def sample_pairs(source: PolynomialSource, n: int, rng: np.random.Generator) -> SampleBatch:
    """Draw n i.i.d. pairs: y from the side-info law, x = beta'y* + noise.

    Draw order is fixed (all y first, then all noise) so results are
    reproducible for a given stream.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    y = source.y_dist.sample(rng, n)
    noise = rng.normal(0.0, math.sqrt(source.sigma2), size=n)
    x = source.regression_mean(y) + noise
    return SampleBatch(x=x, y=y, n=n)


def moment_matrix(source: PolynomialSource) -> np.ndarray:
    """Analytic k x k matrix with entry (i, j) = E[Y^(i+j)]."""
    k = source.k
    idx = np.arange(k)
    m = idx[:, None] + idx[None, :]
    return np.vectorize(source.y_dist.moment, otypes=[float])(m)


# ---------------------------------------------------------------------------
# Analytic density of V = beta' Y*  (quadratic case, Y uniform on [-1, 1])
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VSupport:
    """Support [lo, hi] of V with quadrature breakpoints.

    ``singular_lo`` marks an inverse-square-root endpoint singularity at
    ``lo`` (present when the parabola's vertex falls inside [-1, 1]).
    """

    lo: float
    hi: float
    breakpoints: tuple
    singular_lo: bool


def _require_quadratic_uniform(source: PolynomialSource) -> None:
    if source.k != 3:
        raise UnsupportedModelError("analytic density of V implemented only for k = 3")
    if not isinstance(source.y_dist, UniformSymmetric) or source.y_dist.half_width != 1.0:
        raise UnsupportedModelError("analytic density of V requires Y uniform on [-1, 1]")
    if not source.beta[2] > 0:
        raise UnsupportedModelError("analytic density of V requires beta_2 > 0")


def v_support(source: PolynomialSource) -> VSupport:
    """Range of b0 + b1 y + b2 y^2 over y in [-1, 1], with breakpoints."""
    _require_quadratic_uniform(source)
    b0, b1, b2 = source.beta
    p_lo = b0 - b1 + b2  # value at y = -1
    p_hi = b0 + b1 + b2  # value at y = +1
    vertex_y = -b1 / (2 * b2)
    lo_edge, hi_edge = min(p_lo, p_hi), max(p_lo, p_hi)
    if abs(vertex_y) <= 1.0:
        lo = b0 - b1 * b1 / (4 * b2)  # vertex value, minimum since b2 > 0
        pts = sorted({lo, lo_edge, hi_edge})
        return VSupport(lo=lo, hi=hi_edge, breakpoints=tuple(pts), singular_lo=True)
    return VSupport(lo=lo_edge, hi=hi_edge, breakpoints=(lo_edge, hi_edge), singular_lo=False)


def density_v(source: PolynomialSource, v) -> Union[float, np.ndarray]:
    """Density of V = b0 + b1 Y + b2 Y^2 by change of variables.

    Each root of the quadratic that lands in [-1, 1] contributes
    (1/2) / sqrt(b1^2 + 4 b2 (v - b0)); zero where the discriminant is
    negative or no root is in range.  Scalar in, scalar out.
    """
    _require_quadratic_uniform(source)
    b0, b1, b2 = source.beta
    v_arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v_arr)):
        raise InvalidInputError("v must be finite")
    disc = b1 * b1 + 4.0 * b2 * (v_arr - b0)
    pos = disc > 0
    root = np.sqrt(np.where(pos, disc, 1.0))
    y1 = (-b1 - root) / (2 * b2)
    y2 = (-b1 + root) / (2 * b2)
    in1 = np.abs(y1) <= 1.0
    in2 = np.abs(y2) <= 1.0
    out = np.where(
        pos & in1 & in2,
        1.0 / root,
        np.where(pos & (in1 ^ in2), 0.5 / root, 0.0),
    )
    if np.isscalar(v) or v_arr.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Density of the coded observation U = alpha (V + N + Phi)
# ---------------------------------------------------------------------------


def density_u(source: PolynomialSource, channel, u: float) -> float:
    """P_U(u) by adaptive quadrature of the convolution integral

        (1 / (alpha sqrt(2 pi (sigma2 + sigma_phi2))))
            * integral of P_V(v) exp(-(u/alpha - v)^2 / (2 (sigma2 + sigma_phi2))) dv

    over the compact support of P_V, split at its breakpoints.
    """
    u = float(u)
    if not math.isfinite(u):
        raise InvalidInputError("u must be finite")
    sup = v_support(source)
    s2 = source.sigma2 + channel.sigma_phi2
    alpha = channel.alpha
    center = u / alpha

    def integrand(v):
        return density_v(source, v) * math.exp(-((center - v) ** 2) / (2 * s2))

    interior = [p for p in sup.breakpoints if sup.lo < p < sup.hi]
    val, err = quad(
        integrand, sup.lo, sup.hi, points=interior or None, limit=200, epsabs=_QUAD_ABS_TOL
    )
    if err > _QUAD_ABS_TOL:
        raise NumericalFailureError(
            f"P_U quadrature error estimate {err:.3e} exceeds {_QUAD_ABS_TOL:.0e}"
        )
    return val / (alpha * math.sqrt(2 * math.pi * s2))


class UDensityRule:
    """Fixed quadrature rule for evaluating P_U on large batches.

    Precomputes composite Gauss-Legendre nodes and weights on the support of
    P_V (with a t^2 substitution absorbing the inverse-square-root endpoint
    singularity when present), so a batch of m points costs one
    (m x nodes) kernel evaluation instead of m adaptive quadratures.  The
    rule is validated against :func:`density_u` at construction.
    """

    def __init__(self, source: PolynomialSource, channel, *, panels: int = 18,
                 order: int = 16, validate: bool = True):
        self.source = source
        self.channel = channel
        sup = v_support(source)
        self._sup = sup
        self._s2 = source.sigma2 + channel.sigma_phi2
        nodes, weights = [], []
        segs = list(zip(sup.breakpoints[:-1], sup.breakpoints[1:]))
        for i, (a, b) in enumerate(segs):
            if i == 0 and sup.singular_lo:
                # v = lo + t^2 kills the 1/sqrt(v - lo) singularity
                t, wt = _composite_gauss(0.0, math.sqrt(b - a), panels, order)
                nodes.append(a + t * t)
                weights.append(2.0 * t * wt)
            else:
                x, w = _composite_gauss(a, b, panels, order)
                nodes.append(x)
                weights.append(w)
        self._nodes = np.concatenate(nodes)
        self._wpv = np.concatenate(weights) * density_v(source, self._nodes)
        if validate:
            self._validate()

    def _validate(self) -> None:
        sup = self._sup
        alpha = self.channel.alpha
        sd = math.sqrt(self._s2)
        lo = alpha * (sup.lo - 6 * sd)
        hi = alpha * (sup.hi + 6 * sd)
        for u in np.linspace(lo, hi, 9):
            ref = density_u(self.source, self.channel, u)
            got = float(self(np.array([u]))[0])
            if abs(got - ref) > 1e-9:
                raise NumericalFailureError(
                    f"fixed P_U rule disagrees with adaptive quadrature at u={u:.6g}: "
                    f"|{got:.12e} - {ref:.12e}| > 1e-9"
                )

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        alpha = self.channel.alpha
        out = np.empty(u.shape[0])
        norm = 1.0 / (alpha * math.sqrt(2 * math.pi * self._s2))
        chunk = max(1, 4_000_000 // self._nodes.size)
        for start in range(0, u.shape[0], chunk):
            centers = u[start:start + chunk, None] / alpha
            kern = np.exp(-((centers - self._nodes[None, :]) ** 2) / (2 * self._s2))
            out[start:start + chunk] = norm * (kern @ self._wpv)
        return out


def _composite_gauss(a: float, b: float, panels: int, order: int):
    """Gauss-Legendre nodes/weights on [a, b] split into equal panels."""
    xs, ws = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    nodes = edges[:-1, None] + half[:, None] * (xs[None, :] + 1.0)
    weights = half[:, None] * ws[None, :]
    return nodes.ravel(), weights.ravel()
