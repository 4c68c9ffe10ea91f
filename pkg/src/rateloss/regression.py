"""Least-squares regression on coded observations and its error analysis.

The decoder regresses u = alpha (x + phi) on the powers of the side
information.  Because E[U | Y] = alpha beta' Y*, the scaled least-squares
solution alpha^-1 (Y*'Y*)^-1 Y*' u is unbiased for beta, and the
generalization error of the fitted predictor admits closed forms in terms of
the analytic moment matrix and the empirical Gram matrix.  This module
provides the single-fit operations, the eigenvalue inequalities used to bound
the error, and a vectorized replicate simulator for Monte Carlo studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    IllConditionedDesignError,
    InsufficientDataError,
    InvalidInputError,
)
from .source_model import PolynomialSource, design_matrix, moment_matrix, sample_pairs
from .test_channel import TestChannelParams, apply

__all__ = [
    "CONDITION_LIMIT",
    "TrainedPredictor",
    "GenErrorReport",
    "ReplicateBatch",
    "ols_fit",
    "conditional_cov",
    "gen_error_conditional",
    "expected_gen_error",
    "gen_error_upper_bound",
    "eigenvalue_margin",
    "ruhe_check",
    "min_eig_bound_check",
    "simulate_replicates",
    "gen_error_report",
]

CONDITION_LIMIT = 1e12  # gate on cond of the empirical Gram matrix
_EIG_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TrainedPredictor:
    """Fitted coefficient vector with its training metadata."""

    beta_hat: np.ndarray
    n_train: int
    channel: TestChannelParams

    def predict(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return design_matrix(y, self.beta_hat.shape[0]) @ self.beta_hat


@dataclass(frozen=True)
class GenErrorReport:
    """Generalization-error summary for one trained predictor."""

    mc_estimate: float
    mc_std_error: float
    closed_form_conditional: float
    expected_closed_form: float
    upper_bound: float


def ols_fit(u: np.ndarray, y: np.ndarray, channel: TestChannelParams, k: int) -> TrainedPredictor:
    """Least-squares fit beta_hat = alpha^-1 (Y*'Y*)^-1 Y*' u.

    Solved through an orthogonal factorization (SVD least squares), never by
    inverting the Gram matrix.  Rejects n < k and designs whose Gram matrix
    condition number exceeds ``CONDITION_LIMIT``.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise InvalidInputError("u and y must be 1-d arrays of equal length")
    n = u.shape[0]
    if n < k:
        raise InsufficientDataError(f"need at least k={k} samples, got {n}")
    design = design_matrix(y, k)
    sol, _, rank, sv = np.linalg.lstsq(design, u, rcond=None)
    if rank < k or (sv[0] / sv[-1]) ** 2 >= CONDITION_LIMIT:
        raise IllConditionedDesignError(
            f"Gram matrix condition number {(sv[0] / sv[-1]) ** 2:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )
    return TrainedPredictor(beta_hat=sol / channel.alpha, n_train=n, channel=channel)


def conditional_cov(y: np.ndarray, channel: TestChannelParams, sigma2: float,
                    k: int) -> np.ndarray:
    """Covariance of beta_hat given the design: (sigma2 + sigma_phi2) (Y*'Y*)^-1.

    The conditional variance of U given Y is alpha^2 (sigma2 + sigma_phi2),
    and the alpha^-2 of the estimator cancels it.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] < k:
        raise InsufficientDataError(f"need at least k={k} samples, got {y.shape[0]}")
    design = design_matrix(y, k)
    gram = design.T @ design
    _gate_condition(gram / y.shape[0])
    return (sigma2 + channel.sigma_phi2) * np.linalg.inv(gram)


def gen_error_conditional(predictor: TrainedPredictor, beta: np.ndarray,
                          moment: np.ndarray, sigma2: float) -> float:
    """Exact conditional generalization error (beta - beta_hat)' M (beta - beta_hat) + sigma2."""
    beta = np.asarray(beta, dtype=float)
    moment = np.asarray(moment, dtype=float)
    diff = beta - predictor.beta_hat
    if moment.shape != (diff.shape[0], diff.shape[0]):
        raise InvalidInputError("moment matrix shape does not match coefficient length")
    return float(diff @ moment @ diff + sigma2)


def expected_gen_error(n: int, sigma2: float, channel: TestChannelParams,
                       moment: np.ndarray, empirical_sigma: np.ndarray) -> float:
    """Expected generalization error sigma2 + ((sigma2 + sigma_phi2)/n) tr(M S^-1).

    ``empirical_sigma`` is the realized Gram matrix (1/n) Y*'Y*; passing the
    analytic moment matrix itself gives sigma2 + (sigma2 + sigma_phi2) k / n.
    """
    moment = np.asarray(moment, dtype=float)
    empirical_sigma = np.asarray(empirical_sigma, dtype=float)
    if moment.shape != empirical_sigma.shape:
        raise InvalidInputError("moment and empirical matrices must have equal shape")
    _gate_condition(empirical_sigma)
    trace = float(np.trace(np.linalg.solve(empirical_sigma, moment)))
    return sigma2 + (sigma2 + channel.sigma_phi2) / n * trace


def gen_error_upper_bound(n: int, k: int, sigma2: float, channel: TestChannelParams,
                          moment: np.ndarray) -> float:
    """Asymptotic bound sigma2 + ((sigma2 + sigma_phi2)/n) k C with C = lmax/lmin of M."""
    moment = np.asarray(moment, dtype=float)
    eig = np.linalg.eigvalsh(moment)
    if eig[0] <= 0:
        raise InvalidInputError("moment matrix must be positive definite")
    c = eig[-1] / eig[0]
    return sigma2 + (sigma2 + channel.sigma_phi2) / n * k * c


def eigenvalue_margin(moment: np.ndarray, empirical_sigma: np.ndarray) -> float:
    """Diagnostic denominator lmin(M) - ||M - S||_2 from the finite-sample bound.

    Positive values certify that the realized Gram matrix is close enough to
    the analytic moment matrix for the trace bound to hold with the
    asymptotic constant.
    """
    moment = np.asarray(moment, dtype=float)
    empirical_sigma = np.asarray(empirical_sigma, dtype=float)
    lmin = float(np.linalg.eigvalsh(moment)[0])
    return lmin - float(np.linalg.norm(moment - empirical_sigma, 2))


def ruhe_check(a: np.ndarray, b: np.ndarray) -> bool:
    """Trace inequality tr(AB) <= sum_i l_i(A) l_i(B), eigenvalues sorted descending."""
    a, b = _require_symmetric_pair(a, b)
    ea = np.sort(np.linalg.eigvalsh(a))[::-1]
    eb = np.sort(np.linalg.eigvalsh(b))[::-1]
    return float(np.trace(a @ b)) <= float(ea @ eb) + _EIG_TOL


def min_eig_bound_check(a: np.ndarray, b: np.ndarray) -> bool:
    """Perturbation inequality lmin(A) >= lmin(B) - ||A - B||_2."""
    a, b = _require_symmetric_pair(a, b)
    lhs = float(np.linalg.eigvalsh(a)[0])
    rhs = float(np.linalg.eigvalsh(b)[0]) - float(np.linalg.norm(a - b, 2))
    return lhs >= rhs - _EIG_TOL


# ---------------------------------------------------------------------------
# Vectorized replicate simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReplicateBatch:
    """Per-replicate results from simulating the train-through-channel pipeline.

    ``gen_error`` is the conditional closed form for each fitted predictor;
    ``expected_given_design`` is the trace closed form evaluated with each
    replicate's realized Gram matrix.
    """

    beta_hat: np.ndarray            # (m, k)
    gen_error: np.ndarray           # (m,)
    expected_given_design: np.ndarray  # (m,)
    n_train: int


def simulate_replicates(source: PolynomialSource, channel: TestChannelParams,
                        n: int, m: int, rng: np.random.Generator,
                        *, chunk: int = 0) -> ReplicateBatch:
    """Simulate m independent trainings of length n through the channel.

    Each replicate draws its own side information and noise, codes the
    observations, and solves the scaled least-squares problem.  Replicates
    are processed in fixed-size chunks; the chunk Gram systems are solved in
    a stacked LU factorization, which at k <= 8 and the gated conditioning is
    numerically equivalent to the orthogonal route of :func:`ols_fit`
    (verified in the test suite).
    """
    if n < source.k:
        raise InsufficientDataError(f"need at least k={source.k} samples, got {n}")
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    k = source.k
    beta = source.beta
    moment = moment_matrix(source)
    sig_tot = source.sigma2 + channel.sigma_phi2
    if chunk <= 0:
        chunk = max(1, min(m, 4_000_000 // n))

    beta_hat = np.empty((m, k))
    gen_err = np.empty(m)
    expected = np.empty(m)
    for start in range(0, m, chunk):
        b = min(chunk, m - start)
        y = source.y_dist.sample(rng, (b, n))
        x = _poly_eval(beta, y) + rng.normal(0.0, math.sqrt(source.sigma2), size=(b, n))
        u = channel.alpha * (x + rng.normal(0.0, math.sqrt(channel.sigma_phi2), size=(b, n)))
        design = _stacked_design(y, k)
        gram = np.einsum("bni,bnj->bij", design, design)
        rhs = np.einsum("bni,bn->bi", design, u)
        sigma_emp = gram / n
        _gate_condition_stacked(sigma_emp)
        bh = np.linalg.solve(gram, rhs[..., None])[..., 0] / channel.alpha
        diff = beta[None, :] - bh
        beta_hat[start:start + b] = bh
        gen_err[start:start + b] = (
            np.einsum("bi,ij,bj->b", diff, moment, diff) + source.sigma2
        )
        traces = np.trace(
            np.linalg.solve(sigma_emp, np.broadcast_to(moment, (b, k, k))),
            axis1=1, axis2=2,
        )
        expected[start:start + b] = source.sigma2 + sig_tot / n * traces
    return ReplicateBatch(beta_hat=beta_hat, gen_error=gen_err,
                          expected_given_design=expected, n_train=n)


def gen_error_report(predictor: TrainedPredictor, source: PolynomialSource,
                     mc_pairs: int, rng: np.random.Generator) -> GenErrorReport:
    """Monte Carlo and closed-form error summary for one trained predictor."""
    moment = moment_matrix(source)
    batch = sample_pairs(source, mc_pairs, rng)
    losses = (batch.x - predictor.predict(batch.y)) ** 2
    mc = float(np.mean(losses))
    se = float(np.std(losses, ddof=1) / math.sqrt(mc_pairs))
    cond = gen_error_conditional(predictor, source.beta, moment, source.sigma2)
    expected = expected_gen_error(predictor.n_train, source.sigma2, predictor.channel,
                                  moment, moment)
    bound = gen_error_upper_bound(predictor.n_train, source.k, source.sigma2,
                                  predictor.channel, moment)
    return GenErrorReport(mc_estimate=mc, mc_std_error=se, closed_form_conditional=cond,
                          expected_closed_form=expected, upper_bound=bound)


def _poly_eval(beta: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    for c in beta[::-1]:
        out = out * y + c
    return out


def _stacked_design(y: np.ndarray, k: int) -> np.ndarray:
    cols = [np.ones_like(y)]
    for _ in range(1, k):
        cols.append(cols[-1] * y)
    return np.stack(cols, axis=-1)


def _require_symmetric_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("matrices must be square and of equal shape")
    for mat in (a, b):
        scale = max(1.0, float(np.abs(mat).max()))
        if np.abs(mat - mat.T).max() > 1e-10 * scale:
            raise InvalidInputError("matrix is not symmetric")
    return a, b


def _gate_condition(sigma: np.ndarray) -> None:
    eig = np.linalg.eigvalsh(sigma)
    if eig[0] <= 0 or eig[-1] / eig[0] >= CONDITION_LIMIT:
        raise IllConditionedDesignError(
            "empirical Gram matrix failed the conditioning gate"
        )


def _gate_condition_stacked(sigma: np.ndarray) -> None:
    eig = np.linalg.eigvalsh(sigma)
    bad = (eig[:, 0] <= 0) | (eig[:, -1] / np.maximum(eig[:, 0], 1e-300) >= CONDITION_LIMIT)
    if np.any(bad):
        raise IllConditionedDesignError(
            f"{int(bad.sum())} replicate designs failed the conditioning gate"
        )
