"""Over-parameterized regime: effective regularization and risk equivalents.

The random excess risk of the per-p-normalized ridge iterate concentrates
around a deterministic expression in which the sample geometry enters only
through tau, the unique positive solution of

    1/kappa - lam/tau = (1/p) Tr[(Sigma + tau I)^{-1} Sigma].

This module solves that equation, evaluates the risk equivalents (for a given
theta_star, for the one- and two-step iterates, and averaged over theta_star),
and provides the closed forms and expansion coefficients available when Sigma
is the isotropic two-block matrix [[I, rho I], [rho I, I]]:

    Rtilde(D, lam, rho) = R0(lam, rho) + bbar * A1(lam) + cbar * rho^2 * A2(lam)

with optimal-penalty and optimal-risk shifts
lam* = lam*_{D=0} + bbar*B1 + cbar*rho^2*C1 and R* = R*_{D=0} + bbar*B2 +
cbar*rho^2*C2, all functions of (sigma, kappa) through tau0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateDenominator, InvalidInput, NoBracket
from .model import BlockCovariance, PerformativeEffect, assemble_sigma
from .optimize import grid_then_golden

__all__ = [
    "TauSolution",
    "EquivRiskInputs",
    "IsotropicExpansion",
    "Theorem3Coefficients",
    "OptimalEquiv",
    "solve_tau",
    "r_eq",
    "r_eq_one_step",
    "r_eq_two_step",
    "expected_r_eq",
    "closed_form_isotropic",
    "tau0",
    "theorem3_coefficients",
    "sigma_b1_root",
    "optimal_lambda_eq",
]

Vector = NDArray[np.float64]

BRACKET = (1e-12, 1e12)
BISECT_TOL = 1e-8
NEWTON_TOL = 1e-13
RESIDUAL_LIMIT = 1e-12


@lru_cache(maxsize=16)
def _spectrum(cov: BlockCovariance) -> Vector:
    return cov.spectrum()


@dataclass(frozen=True)
class TauSolution:
    """Solved effective regularization with solver diagnostics."""

    tau: float
    lam: float
    kappa: float
    residual: float
    iterations: int


def _validate_regime(lam: float, kappa: float) -> None:
    if lam <= 0:
        raise InvalidInput(
            f"lam must be > 0 (the ridgeless case is not supported), got {lam}"
        )
    if kappa <= 1:
        raise InvalidInput(f"kappa must be > 1 (over-parameterized regime), got {kappa}")


def solve_tau(cov: BlockCovariance, kappa: float, lam: float) -> TauSolution:
    """Solve 1/kappa - lam/tau = Tr[(Sigma+tau I)^{-1} Sigma]/p for tau > 0.

    The left-minus-right residual g(tau) is strictly increasing, so a sign
    change bracket plus monotone bisection is safe; a Newton polish brings the
    residual below 1e-12.
    """
    _validate_regime(lam, kappa)
    eigs = _spectrum(cov)
    p = eigs.size

    def g(tau: float) -> float:
        return 1.0 / kappa - lam / tau - float(np.sum(eigs / (eigs + tau))) / p

    def gprime(tau: float) -> float:
        return lam / tau**2 + float(np.sum(eigs / (eigs + tau) ** 2)) / p

    lo, hi = BRACKET
    if not (g(lo) < 0.0 < g(hi)):
        raise NoBracket(
            f"no sign change of the tau equation in [{lo:g}, {hi:g}] "
            f"(lam={lam}, kappa={kappa})"
        )
    iterations = 0
    while hi - lo > BISECT_TOL * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        iterations += 1
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    for _ in range(50):
        res = g(tau)
        if abs(res) <= NEWTON_TOL:
            break
        step = res / gprime(tau)
        nxt = tau - step
        if not lo <= nxt <= hi:
            nxt = 0.5 * (lo + hi)
        if g(nxt) < 0.0:
            lo = nxt
        else:
            hi = nxt
        tau = nxt
        iterations += 1
    return TauSolution(tau=float(tau), lam=lam, kappa=kappa, residual=g(tau), iterations=iterations)


@dataclass(frozen=True, eq=False)
class EquivRiskInputs:
    """Validated parameter bundle for the risk-equivalent evaluators."""

    cov: BlockCovariance
    effect: PerformativeEffect
    lam: float
    kappa: float
    noise_std: float

    def __post_init__(self) -> None:
        _validate_regime(self.lam, self.kappa)
        if self.noise_std < 0:
            raise InvalidInput(f"noise_std must be >= 0, got {self.noise_std}")
        if self.effect.d != self.cov.d:
            raise InvalidInput("effect and covariance dimensions disagree")

    def tau(self) -> TauSolution:
        return solve_tau(self.cov, self.kappa, self.lam)


def _trace_ratio(cov: BlockCovariance, kappa: float, tau: float) -> tuple[float, float]:
    """Return (kappa * Tr[Sigma^2 (Sigma+tau)^-2], denominator p - that trace)."""
    eigs = _spectrum(cov)
    t = kappa * float(np.sum((eigs / (eigs + tau)) ** 2))
    den = eigs.size - t
    if den <= 0:
        raise DegenerateDenominator(
            f"p - kappa Tr[Sigma^2 (Sigma+tau I)^-2] = {den:.3e} <= 0"
        )
    return t, den


def _sigma_quad(cov: BlockCovariance, x: Vector) -> float:
    """x^T Sigma x without assembling Sigma when the structure allows."""
    d = cov.d
    if cov.rho is not None:
        u, v = x[:d], x[d:]
        return float(u @ u + v @ v + 2.0 * cov.rho * (u @ v))
    sigma = assemble_sigma(cov)
    return float(x @ (sigma @ x))


class _ResolventOps:
    """Apply Sigma and (Sigma + tau I)^{-1} to vectors, exploiting isotropy."""

    def __init__(self, cov: BlockCovariance, tau: float):
        self.cov = cov
        self.tau = tau
        if cov.rho is None:
            self._sigma = assemble_sigma(cov)
            self._chol = np.linalg.cholesky(self._sigma + tau * np.eye(cov.p))
        else:
            self._sigma = None
            self._chol = None

    def sigma_dot(self, x: Vector) -> Vector:
        if self._sigma is not None:
            return self._sigma @ x
        d, rho = self.cov.d, self.cov.rho
        return np.concatenate([x[:d] + rho * x[d:], rho * x[:d] + x[d:]])

    def resolvent_dot(self, x: Vector) -> Vector:
        if self._chol is not None:
            y = np.linalg.solve(self._chol, x)
            return np.linalg.solve(self._chol.T, y)
        d, rho = self.cov.d, self.cov.rho
        u = 1.0 + self.tau
        det = u * u - rho * rho
        return np.concatenate(
            [(u * x[:d] - rho * x[d:]) / det, (-rho * x[:d] + u * x[d:]) / det]
        )


def r_eq(inputs: EquivRiskInputs, theta_star: Vector) -> float:
    """Deterministic equivalent of the fixed-point excess risk for a given theta_star."""
    tau = inputs.tau().tau
    ops = _ResolventOps(inputs.cov, tau)
    dvec = inputs.effect.diag()
    u = ops.resolvent_dot(np.asarray(theta_star, dtype=np.float64))
    su = ops.sigma_dot(u)
    # first summand: tau^2 u^T Sigma u - 2 tau (Sigma^2 R^-1 u)^T D (Sigma u)
    w = ops.resolvent_dot(u)
    s2w = ops.sigma_dot(ops.sigma_dot(w))
    term1 = tau * tau * float(u @ su) - 2.0 * tau * float(s2w @ (dvec * su))
    t, den = _trace_ratio(inputs.cov, inputs.kappa, tau)
    sw = ops.sigma_dot(w)
    num = inputs.noise_std**2 + tau * tau * (float(u @ su) + 2.0 * float(sw @ (dvec * su)))
    return term1 + t * num / den


def r_eq_one_step(inputs: EquivRiskInputs, theta0: Vector, theta_star: Vector) -> float:
    """Equivalent of the risk after one retraining round started from theta0."""
    tau = inputs.tau().tau
    ops = _ResolventOps(inputs.cov, tau)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    trained = theta_star + inputs.effect.diag() * np.asarray(theta0, dtype=np.float64)
    rt = ops.resolvent_dot(trained)
    fit = ops.sigma_dot(rt) - theta_star
    t, den = _trace_ratio(inputs.cov, inputs.kappa, tau)
    num = inputs.noise_std**2 + tau * tau * _sigma_quad(inputs.cov, rt)
    return _sigma_quad(inputs.cov, fit) + t * num / den


def r_eq_two_step(inputs: EquivRiskInputs, theta0: Vector, theta_star: Vector) -> float:
    """Equivalent of the risk after two retraining rounds (four-term expression)."""
    tau = inputs.tau().tau
    cov, kappa = inputs.cov, inputs.kappa
    ops = _ResolventOps(cov, tau)
    dvec = inputs.effect.diag()
    theta_star = np.asarray(theta_star, dtype=np.float64)
    trained = theta_star + dvec * np.asarray(theta0, dtype=np.float64)

    rt = ops.resolvent_dot(trained)
    srt = ops.sigma_dot(rt)
    # first term: || R^-1 Sigma D R^-1 Sigma (theta*+D theta0) - tau R^-1 theta* ||_Sigma^2
    # (Sigma and R^-1 commute, so the nested applications below realize it)
    vec = ops.resolvent_dot(ops.sigma_dot(dvec * srt)) - tau * ops.resolvent_dot(theta_star)
    term1 = _sigma_quad(cov, vec)

    t, den = _trace_ratio(cov, kappa, tau)
    base_num = inputs.noise_std**2 + tau * tau * _sigma_quad(cov, rt)

    if cov.rho is not None:
        tr_heavy = _iso_cross_trace(cov.rho, tau, inputs.effect, power=3)
        tr_light = _iso_cross_trace(cov.rho, tau, inputs.effect, power=1)
    else:
        sigma = assemble_sigma(cov)
        resolvent = np.linalg.inv(sigma + tau * np.eye(cov.p))
        r2 = resolvent @ resolvent
        m1 = (sigma @ r2) * dvec[np.newaxis, :]
        m3 = ((sigma @ sigma @ sigma) @ r2) * dvec[np.newaxis, :]
        tr_heavy = float(np.einsum("ij,ji->", m1, m3))
        tr_light = float(np.einsum("ij,ji->", m1, m1))

    term2 = kappa * tr_heavy * base_num / den
    shifted = theta_star + dvec * srt
    rshift = ops.resolvent_dot(shifted)
    term3 = t * (inputs.noise_std**2 + tau * tau * _sigma_quad(cov, rshift)) / den
    term4 = kappa * tau * tau * t * tr_light * base_num / (den * den)
    return term1 + term2 + term3 + term4


def _iso_cross_trace(rho: float, tau: float, effect: PerformativeEffect, power: int) -> float:
    """Tr[Sigma (Sigma+tau)^-2 D Sigma^power (Sigma+tau)^-2 D] for the isotropic case.

    With Sigma = K (x) I_d and D = diag(b, c), the trace reduces to block sums:
    writing F = K (K+tau)^-2 = [[f11, f12], [f12, f11]] and
    G = K^power (K+tau)^-2 = [[g11, g12], [g12, g11]],
    Tr = f11 g11 (|b|^2 + |c|^2) + 2 f12 g12 <b, c>  ... with vector dot products.
    """
    u = 1.0 + tau
    det = u * u - rho * rho
    # (K+tau)^-2 entries
    a2 = (u * u + rho * rho) / det**2
    b2 = -2.0 * rho * u / det**2
    # K entries
    k11, k12 = 1.0, rho
    f11 = k11 * a2 + k12 * b2
    f12 = k11 * b2 + k12 * a2
    # K^power entries
    if power == 1:
        g11k, g12k = k11, k12
    elif power == 3:
        # K^2 = [[1+rho^2, 2 rho], [2 rho, 1+rho^2]], K^3 = K^2 K
        g11k = (1 + rho * rho) * 1 + 2 * rho * rho
        g12k = (1 + rho * rho) * rho + 2 * rho * 1
    else:
        raise InvalidInput(f"unsupported power {power}")
    g11 = g11k * a2 + g12k * b2
    g12 = g11k * b2 + g12k * a2
    b, c = effect.b, effect.c
    # block markers: D = [[diag(b),0],[0,diag(c)]]; Tr[F D G D] over blocks
    return float(
        f11 * g11 * (b @ b + c @ c) + 2.0 * f12 * g12 * (b @ c)
    )


def _iso_traces(rho: float, tau: float) -> tuple[float, float, float, float, float, float]:
    """Per-d closed forms of the four block traces of the averaged equivalent.

    Returns (trA, trT, trB_b, trB_c, trC_b, trC_c) where
      trA   = Tr[(Sigma (Sigma+tau)^-2)_1] / d
      trT   = Tr[Sigma^2 (Sigma+tau)^-2] / d
      trB_* = coefficients of bbar, cbar in Tr[((Sigma+tau)^-2 Sigma^2 D (Sigma+tau)^-1 Sigma)_1] / d
      trC_* = same for Tr[((Sigma+tau)^-2 Sigma D (Sigma+tau)^-1 Sigma)_1] / d
    """
    u = 1.0 + tau
    r2 = rho * rho
    det = u * u - r2
    trA = (u * u - r2 * (1.0 + 2.0 * tau)) / det**2
    trT = 2.0 * ((u - r2) ** 2 + r2 * tau * tau) / det**2
    trB_b = (u - r2) * ((u - r2) ** 2 + r2 * tau * tau) / det**3
    trB_c = 2.0 * (u - r2) * r2 * tau * tau / det**3
    trC_b = (u - r2) * (u * (u - r2) - r2 * tau) / det**3
    trC_c = r2 * tau * (r2 + tau * tau - 1.0) / det**3
    return trA, trT, trB_b, trB_c, trC_b, trC_c


def expected_r_eq(inputs: EquivRiskInputs) -> float:
    """theta_star-averaged risk equivalent (expectation over a ~ N(0, I_d/d))."""
    tau = inputs.tau().tau
    cov, kappa = inputs.cov, inputs.kappa
    bbar, cbar = inputs.effect.bbar, inputs.effect.cbar
    sigma2 = inputs.noise_std**2
    if cov.rho is not None:
        trA, trT, trB_b, trB_c, trC_b, trC_c = _iso_traces(cov.rho, tau)
        den_per_d = 2.0 - kappa * trT
        if den_per_d <= 0:
            raise DegenerateDenominator(
                f"p - kappa Tr[Sigma^2 (Sigma+tau I)^-2] = {den_per_d:.3e} * d <= 0"
            )
        frac = kappa * trT / den_per_d
        trB = bbar * trB_b + cbar * trB_c
        trC = bbar * trC_b + cbar * trC_c
        return (
            tau * tau * trA
            + frac * (sigma2 + tau * tau * trA)
            - 2.0 * tau * trB
            + 2.0 * tau * tau * frac * trC
        )
    d = cov.d
    sigma = assemble_sigma(cov)
    resolvent = np.linalg.inv(sigma + tau * np.eye(cov.p))
    r2 = resolvent @ resolvent
    dvec = inputs.effect.diag()
    trA = float(np.trace((sigma @ r2)[:d, :d])) / d
    t, den = _trace_ratio(cov, kappa, tau)
    mB = ((r2 @ sigma @ sigma) * dvec[np.newaxis, :]) @ (resolvent @ sigma)
    mC = ((r2 @ sigma) * dvec[np.newaxis, :]) @ (resolvent @ sigma)
    trB = float(np.trace(mB[:d, :d])) / d
    trC = float(np.trace(mC[:d, :d])) / d
    return (
        tau * tau * trA
        + t * (sigma2 + tau * tau * trA) / den
        - 2.0 * tau * trB
        + 2.0 * tau * tau * t * trC / den
    )


@dataclass(frozen=True)
class IsotropicExpansion:
    """R0 + bbar A1 + cbar rho^2 A2 and its pieces, at the solved tau."""

    r_tilde: float
    r0: float
    a1: float
    a2: float
    tau: float


def _r0_a1_a2(tau: float, kappa: float, sigma: float, rho: float) -> tuple[float, float, float]:
    u = 1.0 + tau
    u2 = u * u
    gap = u2 - kappa
    if gap <= 0:
        raise DegenerateDenominator(f"(1+tau)^2 - kappa = {gap:.3e} <= 0")
    noise = sigma * sigma + tau * tau / u2
    r0 = tau * tau / u2 + kappa / gap * noise + rho * rho * (
        tau * tau * (1.0 - 2.0 * tau) / u2**2
        + kappa * tau * tau * (1.0 - 2.0 * tau) / (u2**2 * gap)
        + kappa * tau * (tau - 2.0) / gap**2 * noise
    )
    a1 = -2.0 * tau / u**3 + 2.0 * kappa * tau * tau / (u**3 * gap)
    a2 = -4.0 * tau**3 / u**5 + 2.0 * kappa * tau**3 * (tau * tau - 1.0) / (u**6 * gap)
    return r0, a1, a2


def closed_form_isotropic(
    rho: float, effect: PerformativeEffect, lam: float, kappa: float, sigma: float
) -> IsotropicExpansion:
    """Second-order-in-rho expansion of the averaged equivalent, explicit pieces."""
    if not -1.0 < rho < 1.0:
        raise InvalidInput(f"rho must lie in (-1, 1), got {rho}")
    cov = BlockCovariance.isotropic(max(effect.d, 1), rho)
    tau = solve_tau(cov, kappa, lam).tau
    r0, a1, a2 = _r0_a1_a2(tau, kappa, sigma, rho)
    r_tilde = r0 + effect.bbar * a1 + effect.cbar * rho * rho * a2
    return IsotropicExpansion(r_tilde=r_tilde, r0=r0, a1=a1, a2=a2, tau=tau)


def tau0(kappa: float, sigma: float) -> float:
    """Optimal tau of the rho=0, D=0 risk: largest root of
    (1+tau)^2 - (1+kappa+kappa sigma^2)(1+tau) + kappa = 0."""
    if kappa <= 1:
        raise InvalidInput(f"kappa must be > 1, got {kappa}")
    if sigma < 0:
        raise InvalidInput(f"sigma must be >= 0, got {sigma}")
    s = 1.0 + kappa + kappa * sigma * sigma
    return (s + math.sqrt(s * s - 4.0 * kappa)) / 2.0 - 1.0


@dataclass(frozen=True)
class Theorem3Coefficients:
    """First-order optimal-penalty/risk shifts and their tau-space versions."""

    kappa: float
    sigma: float
    rho: float
    tau0: float
    b1: float
    c1: float
    b2: float
    c2: float
    b3: float
    c3: float
    lambda_eq_d0: float
    risk_eq_star: float


def theorem3_coefficients(kappa: float, sigma: float, rho: float = 0.0) -> Theorem3Coefficients:
    """Evaluate the expansion coefficients at tau0(kappa, sigma).

    lambda_eq_d0 and risk_eq_star are truncated at order rho^2; the remaining
    coefficients are the rho-independent leading terms.
    """
    t = tau0(kappa, sigma)
    u = 1.0 + t
    u2 = u * u
    gap = u2 - kappa
    nb = 2.0 * u**4 - 3.0 * (kappa + 1.0) * u**3 + 4.0 * kappa * u2 + kappa * (kappa + 1.0) * u - 2.0 * kappa**2
    nc = (
        4.0 * t**4
        + (6.0 - 3.0 * kappa) * t**3
        - (6.0 + 3.0 * kappa) * t**2
        + (kappa**2 + 9.0 * kappa - 14.0) * t
        - 3.0 * kappa**2
        + 9.0 * kappa
        - 6.0
    )
    b1 = -nb / (kappa * u**4)
    c1 = -(t * t * nc) / (kappa * u**6)
    b2 = -2.0 * t / u**3 + 2.0 * kappa * t * t / (u**3 * gap)
    c2 = -4.0 * t**3 / u**5 + 2.0 * kappa * t**3 * (t * t - 1.0) / (u**6 * gap)
    b3 = -nb / (u2 * gap)
    c3 = -(t * t * nc) / (u**4 * gap)
    lam_d0 = t * (1.0 / kappa - 1.0 / u) + rho * rho * (
        t * (1.0 / u2 - 1.0 / u**3)
        - (1.0 / kappa - 1.0 / u2) * kappa * t * t / (u * gap)
    )
    noise = sigma * sigma + t * t / u2
    risk_star = t * t / u2 + kappa / gap * noise + rho * rho * (
        t * t * (1.0 - 2.0 * t) / u2**2
        + kappa * t * t * (1.0 - 2.0 * t) / (u2**2 * gap)
        + kappa * t * (t - 2.0) / gap**2 * noise
    )
    return Theorem3Coefficients(
        kappa=kappa,
        sigma=sigma,
        rho=rho,
        tau0=t,
        b1=b1,
        c1=c1,
        b2=b2,
        c2=c2,
        b3=b3,
        c3=c3,
        lambda_eq_d0=lam_d0,
        risk_eq_star=risk_star,
    )


def sigma_b1_root(kappa: float, tol: float = 1e-10) -> float:
    """Unique positive zero of sigma -> B1(sigma, kappa), located by bisection."""
    if kappa <= 1:
        raise InvalidInput(f"kappa must be > 1, got {kappa}")

    def b1(sigma: float) -> float:
        return theorem3_coefficients(kappa, sigma).b1

    lo, hi = 0.0, 1.0
    while b1(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise NoBracket(f"B1 stayed positive up to sigma = {hi}")
    if b1(lo) <= 0:
        raise NoBracket("B1(0) is not positive; no sign change to bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if b1(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class OptimalEquiv:
    """Expansion-predicted and numerically optimized penalty/risk pairs."""

    lambda_expansion: float
    risk_expansion: float
    lambda_numeric: float
    risk_numeric: float


def optimal_lambda_eq(
    effect: PerformativeEffect,
    rho: float,
    kappa: float,
    sigma: float,
    lam_bounds: tuple[float, float] = (1e-3, 6.0),
    grid_points: int = 100,
) -> OptimalEquiv:
    """Optimal penalty and risk: Theorem-3 expansion vs direct minimization.

    The expansion is first order in (bbar, cbar) and second order in rho; the
    numeric pair minimizes the closed-form isotropic risk over a lam grid with
    golden-section refinement, for cross-validation of the expansion.
    """
    coef = theorem3_coefficients(kappa, sigma, rho)
    lam_exp = coef.lambda_eq_d0 + effect.bbar * coef.b1 + effect.cbar * rho * rho * coef.c1
    risk_exp = coef.risk_eq_star + effect.bbar * coef.b2 + effect.cbar * rho * rho * coef.c2
    grid = np.linspace(lam_bounds[0], lam_bounds[1], grid_points)
    lam_num, risk_num, _ = grid_then_golden(
        lambda lam: closed_form_isotropic(rho, effect, lam, kappa, sigma).r_tilde,
        grid,
        width=1e-8,
    )
    return OptimalEquiv(
        lambda_expansion=float(lam_exp),
        risk_expansion=float(risk_exp),
        lambda_numeric=float(lam_num),
        risk_numeric=float(risk_num),
    )
