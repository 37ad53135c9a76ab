"""Population-regime theory: retraining recursion, fixed point, risk expansions.

With unlimited data the retraining recursion is deterministic,

    theta_k = (Sigma + lam I)^{-1} (Sigma theta_star + Sigma D theta_{k-1}),

and converges geometrically to theta_inf = (I + lam Sigma^{-1} - D)^{-1} theta_star.
Averaging the excess risk of theta_inf over theta_star gives the exact trace
formula implemented by :func:`exact_avg_risk`; expanding it in powers of
F = D - lam Sigma^{-1} yields the first-order quadratic (whose vertex is the
closed-form optimal penalty) and the second-order cubic refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidInput, SingularBlock, SingularSystem
from .model import BlockCovariance, ModelSpec, PerformativeEffect, assemble_sigma, schur_offdiag, schur_predictive
from .optimize import grid_then_golden

__all__ = [
    "PopulationRiskReport",
    "OptimalPopulation",
    "population_step",
    "fixed_point",
    "iterations_to_tolerance",
    "exact_avg_risk",
    "risk_first_order",
    "risk_second_order",
    "f_opnorm_bound",
    "f_opnorm_exact",
    "optimal_population",
    "second_order_optimal_lambda",
    "numeric_optimal_lambda",
    "population_risk_report",
]

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]

# Explicit inverses are only formed below this half-dimension; larger systems
# would need factorization reuse that the d~100 scale here never requires.
MAX_EXPLICIT_INVERSE_D = 2000


def _solve_psd(m: Matrix, rhs: Vector | Matrix, context: str) -> Vector | Matrix:
    """Solve m x = rhs with a symmetric factorization, m expected PD."""
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"{context}: matrix is not positive definite") from exc
    y = np.linalg.solve(c, rhs)
    return np.linalg.solve(c.T, y)


def population_step(spec: ModelSpec, lam: float, theta_prev: Vector) -> Vector:
    """One exact retraining round on the distribution induced by ``theta_prev``."""
    sigma = assemble_sigma(spec.cov)
    p = spec.p
    theta_prev = np.asarray(theta_prev, dtype=np.float64)
    reg = sigma + lam * np.eye(p)
    rhs = sigma @ (spec.theta_star + spec.effect.diag() * theta_prev)
    return np.asarray(_solve_psd(reg, rhs, "population_step"))


def fixed_point(spec: ModelSpec, lam: float) -> Vector:
    """The limit of the retraining recursion, (I + lam Sigma^{-1} - D)^{-1} theta_star."""
    sigma = assemble_sigma(spec.cov)
    p = spec.p
    # equivalent form without Sigma^{-1}: (Sigma + lam I - Sigma D)^{-1} Sigma theta_star
    m = sigma + lam * np.eye(p) - sigma * spec.effect.diag()[np.newaxis, :]
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystem(f"fixed point system condition {cond:.3e} too large")
    # also reject indefinite Sigma + lam I, where the recursion itself is undefined
    if lam < 0 and spec.cov.min_eig() + lam <= 0:
        raise SingularSystem(f"Sigma + lam I is not positive definite at lam={lam}")
    try:
        return np.linalg.solve(m, sigma @ spec.theta_star)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("fixed point system is singular") from exc


def iterations_to_tolerance(spec: ModelSpec, lam: float, epsilon: float) -> int:
    """Iterations needed for relative error <= epsilon when starting from zero.

    Uses the contraction factor ||Sigma||/(||Sigma|| + lam) * max(||b||_inf, ||c||_inf).
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidInput(f"epsilon must lie in (0, 1), got {epsilon}")
    if lam < 0:
        raise InvalidInput("the convergence bound requires lam >= 0")
    dmax = max(
        float(np.abs(spec.effect.b).max(initial=0.0)),
        float(np.abs(spec.effect.c).max(initial=0.0)),
    )
    if dmax == 0.0:
        return 1
    op = spec.cov.opnorm()
    factor = op / (op + lam) * dmax
    if factor >= 1.0:
        raise InvalidInput(f"contraction factor {factor} >= 1; bound does not apply")
    return max(1, math.ceil(math.log(1.0 / epsilon) / math.log(1.0 / factor)))


def _shift_matrix(cov: BlockCovariance, effect: PerformativeEffect, lam: float) -> Matrix:
    """A = (Sigma + lam I - Sigma D)^{-1} Sigma - I, so theta_inf - theta_star = A theta_star."""
    sigma = assemble_sigma(cov)
    p = cov.p
    m = sigma + lam * np.eye(p) - sigma * np.concatenate([effect.b, effect.c])[np.newaxis, :]
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystem(f"risk system condition {cond:.3e} too large at lam={lam}")
    return np.linalg.solve(m, sigma) - np.eye(p)


def exact_avg_risk(cov: BlockCovariance, effect: PerformativeEffect, lam: float) -> float:
    """Exact theta_star-averaged excess risk of the fixed point: Tr[(A^T Sigma A)_1] / d."""
    a = _shift_matrix(cov, effect, lam)
    d = cov.d
    sa = assemble_sigma(cov) @ a
    q = a.T @ sa
    return float(np.trace(q[:d, :d]) / d)


def risk_first_order(cov: BlockCovariance, effect: PerformativeEffect, lam: float) -> float:
    """Quadratic approximation: Tr[diag(b^2) Sigma1]/d - 2 lam bbar + lam^2 Tr(S1)/d."""
    d = cov.d
    s1 = schur_predictive(cov)
    b = effect.b
    return float(
        np.sum(b * b * np.diag(cov.sigma1)) / d
        - 2.0 * lam * effect.bbar
        + lam * lam * np.trace(s1) / d
    )


def _second_order_coeffs(
    cov: BlockCovariance, effect: PerformativeEffect
) -> tuple[float, float, float, float]:
    """Coefficients (alpha, beta, gamma, delta) of the cubic
    -2 alpha lam^3 + beta lam^2 - gamma lam + delta approximating the risk."""
    d = cov.d
    if d > MAX_EXPLICIT_INVERSE_D:
        raise InvalidInput(f"second-order expansion limited to d <= {MAX_EXPLICIT_INVERSE_D}")
    b, c = effect.b, effect.c
    s1 = schur_predictive(cov)
    s21 = schur_offdiag(cov)
    sigma = assemble_sigma(cov)
    prec = np.linalg.inv(sigma)
    prec2_1 = (prec @ prec)[:d, :d]
    sig1 = cov.sigma1
    sig12 = cov.sigma12
    alpha = float(np.trace(prec2_1)) / d
    beta = float(np.trace(s1) + 6.0 * np.trace(b[:, None] * s1)) / d
    gamma = (
        float(
            2.0 * np.trace((b[:, None] * sig1) @ (b[:, None] * s1))
            + 2.0 * np.trace((b[:, None] * sig12) @ (c[:, None] * s21))
        )
        + 2.0 * d * effect.bbar
        + 4.0 * float(np.sum(b * b))
    ) / d
    delta = float(np.sum(b * b * np.diag(sig1)) + 2.0 * np.trace((b**3)[:, None] * sig1)) / d
    return alpha, beta, gamma, delta


def risk_second_order(cov: BlockCovariance, effect: PerformativeEffect, lam: float) -> float:
    """Cubic approximation of the averaged risk, including the b-c cross term."""
    alpha, beta, gamma, delta = _second_order_coeffs(cov, effect)
    return -2.0 * alpha * lam**3 + beta * lam**2 - gamma * lam + delta


def second_order_optimal_lambda(cov: BlockCovariance, effect: PerformativeEffect) -> float:
    """Local minimizer of the second-order cubic (smaller root of its derivative).

    The cubic decreases without bound as lam grows, so only the local minimum
    is meaningful; it is the stationary point with positive curvature.
    """
    alpha, beta, gamma, _ = _second_order_coeffs(cov, effect)
    # derivative: -6 alpha lam^2 + 2 beta lam - gamma = 0
    disc = beta * beta - 6.0 * alpha * gamma
    if disc < 0:
        raise SingularSystem("second-order risk has no local minimum in lam")
    return float((beta - math.sqrt(disc)) / (6.0 * alpha))


def f_opnorm_exact(cov: BlockCovariance, effect: PerformativeEffect, lam: float) -> float:
    """Operator norm of F = D - lam Sigma^{-1} (symmetric part is exact here)."""
    sigma = assemble_sigma(cov)
    f = np.diag(effect.diag()) - lam * np.linalg.inv(sigma)
    eigs = np.linalg.eigvalsh(0.5 * (f + f.T))
    return float(max(abs(eigs[0]), abs(eigs[-1])))


def f_opnorm_bound(cov: BlockCovariance, effect: PerformativeEffect, lam: float) -> float:
    """Weyl upper bound on ||F||_op; tight when Sigma and D commute."""
    entries = effect.diag()
    top = float(entries.max())
    bot = float(entries.min())
    return max(
        abs(top - lam / cov.opnorm()),
        abs(bot - lam / cov.min_eig()),
    )


@dataclass(frozen=True)
class OptimalPopulation:
    """Closed-form optimum of the first-order risk quadratic."""

    lambda_star: float
    risk_star: float


def optimal_population(cov: BlockCovariance, effect: PerformativeEffect) -> OptimalPopulation:
    """Vertex of the first-order quadratic: lam* = bbar d / Tr(S1)."""
    d = cov.d
    tr_s1 = float(np.trace(schur_predictive(cov)))
    if tr_s1 <= 0:
        raise SingularBlock(f"Tr(S1) = {tr_s1} must be positive")
    lam_star = effect.bbar * d / tr_s1
    risk_star = float(np.sum(effect.b**2 * np.diag(cov.sigma1)) / d) - effect.bbar**2 * d / tr_s1
    return OptimalPopulation(lambda_star=lam_star, risk_star=risk_star)


def numeric_optimal_lambda(
    cov: BlockCovariance,
    effect: PerformativeEffect,
    lam_grid: NDArray[np.float64] | list[float],
) -> tuple[float, float]:
    """Numeric minimum of the exact averaged risk: grid scan + golden section.

    Grid points where the fixed point degenerates are skipped (reported by
    raising only if every point fails).
    """
    x, fx, _ = grid_then_golden(
        lambda lam: exact_avg_risk(cov, effect, lam),
        lam_grid,
        width=1e-8,
        skip_errors=(SingularSystem,),
    )
    return x, fx


@dataclass(frozen=True)
class PopulationRiskReport:
    """Risk of the fixed point at one lam, exact and approximate."""

    lam: float
    exact_risk: float
    first_order: float
    second_order: float
    f_opnorm_bound: float


def population_risk_report(
    cov: BlockCovariance, effect: PerformativeEffect, lam: float
) -> PopulationRiskReport:
    return PopulationRiskReport(
        lam=lam,
        exact_risk=exact_avg_risk(cov, effect, lam),
        first_order=risk_first_order(cov, effect, lam),
        second_order=risk_second_order(cov, effect, lam),
        f_opnorm_bound=f_opnorm_bound(cov, effect, lam),
    )
