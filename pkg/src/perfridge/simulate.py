"""Monte-Carlo engine: sampling, ridge fits, the retraining loop, sweeps.

Randomness discipline: every draw is keyed by (master_seed, trial, step,
purpose) through counter-based Philox streams, so a sweep is a pure function
of its master seed, trials can run in any order or concurrently, and the
lambda grid shares one set of draws per (trial, step) -- common random
numbers across the grid and across performative-effect variants.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import blas as scipy_blas
from scipy.linalg.lapack import dposv

from .errors import DimensionMismatch, InvalidCovariance, InvalidInput, SingularSystem
from .model import (
    BlockCovariance,
    EffectRecipe,
    ModelSpec,
    Normalization,
    PerformativeEffect,
    RidgeConfig,
    assemble_sigma,
    sample_theta_star,
)
from .rng import Purpose, substream

__all__ = [
    "TrialOutcome",
    "SweepResult",
    "sample_features",
    "gen_labels",
    "ridge_fit",
    "rrm_run",
    "monte_carlo_sweep",
    "monte_carlo_sweep_multi",
]

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]

# Above this many dual systems per step, one eigendecomposition shared by the
# whole grid beats a Cholesky factorization per lambda.
EIGH_SYSTEM_THRESHOLD = 10
RESIDUAL_TOL = 1e-10


def sample_features(
    cov: BlockCovariance,
    n: int,
    rng: np.random.Generator,
    chol: Matrix | None = None,
) -> Matrix:
    """Draw n i.i.d. rows from N(0, Sigma) as (standard normal) @ L^T.

    Pass ``chol`` (the lower factor of Sigma) to reuse a factorization across
    deployments; the isotropic case needs no factorization at all.
    """
    if n < 0:
        raise InvalidInput(f"n must be >= 0, got {n}")
    p = cov.p
    z = rng.standard_normal((n, p))
    if cov.rho is not None:
        rho = cov.rho
        if rho == 0.0:
            return z
        d = cov.d
        x = np.empty_like(z)
        x[:, :d] = z[:, :d]
        x[:, d:] = rho * z[:, :d] + np.sqrt(1.0 - rho * rho) * z[:, d:]
        return x
    if chol is None:
        try:
            chol = cov.cholesky_lower()
        except np.linalg.LinAlgError as exc:
            raise InvalidCovariance("covariance is not positive definite") from exc
    return z @ chol.T


def gen_labels(
    spec: ModelSpec, x: Matrix, theta_deployed: Vector, rng: np.random.Generator
) -> Vector:
    """y = X theta_star + X D theta_deployed + noise."""
    theta_deployed = np.asarray(theta_deployed, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.p or theta_deployed.shape != (spec.p,):
        raise DimensionMismatch(
            f"X must be (n, {spec.p}) and theta_deployed ({spec.p},); "
            f"got {x.shape} and {theta_deployed.shape}"
        )
    signal = x @ (spec.theta_star + spec.effect.diag() * theta_deployed)
    noise = spec.noise_std * rng.standard_normal(x.shape[0])
    return signal + noise


def _gram(x: Matrix, scale: float, dual: bool) -> Matrix:
    """Symmetric X X^T / scale (dual) or X^T X / scale (primal)."""
    return (x @ x.T if dual else x.T @ x) / scale


def _posv_solve(g: Matrix, lam: float, rhs: Matrix | Vector, context: str) -> Matrix | Vector:
    a = g.copy()
    a[np.diag_indices_from(a)] += lam
    rhs2 = rhs if rhs.ndim == 2 else rhs[:, np.newaxis]
    _, sol, info = dposv(a, rhs2, lower=1, overwrite_a=1, overwrite_b=0)
    if info != 0:
        raise SingularSystem(f"{context}: regularized Gram matrix is not positive definite")
    return sol if rhs.ndim == 2 else sol[:, 0]


def ridge_fit(x: Matrix, y: Vector, config: RidgeConfig) -> Vector:
    """Solve the regularized least-squares normal equations for one round.

    Per-n:  theta = (X^T X / n + lam I)^{-1} X^T y / n
    Per-p:  theta = (1/p) (X^T X / p + lam I)^{-1} X^T y

    The solve goes through the p x p system when p <= n and through the dual
    n x n system otherwise; both satisfy the same normal equations, and the
    solved system's residual is verified against 1e-10 times the data scale.
    """
    y = np.asarray(y, dtype=np.float64)
    n, p = x.shape
    if y.shape != (n,):
        raise DimensionMismatch(f"y must have shape ({n},), got {y.shape}")
    if (n, p) != (config.n, config.p):
        raise DimensionMismatch(f"design is {x.shape}, config says ({config.n}, {config.p})")
    scale = float(config.n if config.normalization == Normalization.PER_N else config.p)
    if p <= n:
        g = _gram(x, scale, dual=False)
        rhs = x.T @ y / scale
        theta = _posv_solve(g, config.lam, rhs, "ridge_fit")
        resid = float(np.linalg.norm(g @ theta + config.lam * theta - rhs))
        ref = float(np.linalg.norm(rhs))
    else:
        g = _gram(x, scale, dual=True)
        u = _posv_solve(g, config.lam, y, "ridge_fit")
        theta = x.T @ u / scale
        resid = float(np.linalg.norm(g @ u + config.lam * u - y))
        ref = float(np.linalg.norm(y))
    if resid > RESIDUAL_TOL * max(ref, 1e-300):
        raise SingularSystem(
            f"ridge_fit residual {resid:.3e} exceeds {RESIDUAL_TOL:.0e} * {ref:.3e}"
        )
    return theta


@dataclass(frozen=True)
class TrialOutcome:
    """One retraining trajectory: final iterate and the risk after each round."""

    theta_final: Vector
    risks_per_step: list[float]
    seed_path: tuple[int, int]


@dataclass(frozen=True)
class SweepResult:
    """Mean/std excess risk over trials per grid point, CSV-ready."""

    lambda_grid: list[float]
    mean_risk: list[float]
    std_risk: list[float]
    n_trials: int
    theory_overlay: list[float] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        k = len(self.lambda_grid)
        if len(self.mean_risk) != k or len(self.std_risk) != k:
            raise DimensionMismatch("sweep columns must all have the grid length")
        if self.theory_overlay is not None and len(self.theory_overlay) != k:
            raise DimensionMismatch("theory overlay must have the grid length")


def _excess_risk_rows(cov: BlockCovariance, thetas: Matrix, theta_star: Vector) -> Vector:
    """Excess risk for each row-stacked parameter vector."""
    diff = thetas - theta_star[np.newaxis, :]
    d = cov.d
    if cov.rho is not None:
        u, v = diff[:, :d], diff[:, d:]
        return (
            np.einsum("ij,ij->i", u, u)
            + np.einsum("ij,ij->i", v, v)
            + 2.0 * cov.rho * np.einsum("ij,ij->i", u, v)
        )
    sigma = assemble_sigma(cov)
    return np.einsum("ij,ij->i", diff @ sigma, diff)


def _run_trial(
    cov: BlockCovariance,
    effects: Sequence[PerformativeEffect],
    noise_std: float,
    theta_star: Vector,
    config: RidgeConfig,
    lam_grid: Sequence[float],
    steps: int,
    master_seed: int,
    trial: int,
    theta0: Vector,
) -> tuple[np.ndarray, np.ndarray]:
    """Trajectories for every (effect variant, lambda) pair on shared draws.

    Returns (risks, theta_final) with shapes (V, L, steps) and (V, L, p).
    Per (trial, step) the feature matrix, its Gram factorizations, and the
    noise vector are computed once and shared by all V * L parameter chains.
    """
    lam_arr = np.asarray(lam_grid, dtype=np.float64)
    n, p = config.n, config.p
    L, V = lam_arr.size, len(effects)
    scale = float(config.n if config.normalization == Normalization.PER_N else config.p)
    dmat = np.stack([e.diag() for e in effects])  # V x p
    theta = np.tile(np.asarray(theta0, dtype=np.float64), (V, L, 1))
    risks = np.empty((V, L, steps))
    chol = None if cov.rho is not None else cov.cholesky_lower()
    dual = p > n
    use_eigh = V * L > EIGH_SYSTEM_THRESHOLD
    for step in range(steps):
        x = sample_features(cov, n, substream(master_seed, trial, step, Purpose.FEATURES), chol)
        w = noise_std * substream(master_seed, trial, step, Purpose.NOISE).standard_normal(n)
        trained = theta * dmat[:, np.newaxis, :] + theta_star[np.newaxis, np.newaxis, :]
        flat = trained.reshape(V * L, p)
        if not dual:
            g = _gram(x, scale, dual=False)
            xw = x.T @ w / scale
            rhs = flat @ g + xw[np.newaxis, :]
            if use_eigh:
                eigvals, eigvecs = np.linalg.eigh(g)
                shift = eigvals[:, np.newaxis] + np.repeat(lam_arr, V)[np.newaxis, :]
                if shift.min() <= 0:
                    raise SingularSystem("rrm primal system is not positive definite")
                # columns ordered lambda-major to mirror rhs row order
                order = np.concatenate([np.arange(j, V * L, L) for j in range(L)])
                u = (eigvecs.T @ rhs[order].T) / shift
                new_flat = np.empty_like(flat)
                new_flat[order] = (eigvecs @ u).T
                theta = new_flat.reshape(V, L, p)
            else:
                new_flat = np.empty_like(flat)
                for j, lam in enumerate(lam_arr):
                    idx = np.arange(j, V * L, L)
                    new_flat[idx] = _posv_solve(g, float(lam), rhs[idx].T, "rrm primal solve").T
                theta = new_flat.reshape(V, L, p)
        else:
            g = _gram(x, scale, dual=True)
            y = x @ flat.T + w[:, np.newaxis]  # n x (V*L)
            if use_eigh:
                eigvals, eigvecs = np.linalg.eigh(g)
                shift = eigvals[:, np.newaxis] + np.tile(lam_arr, V)[np.newaxis, :]
                if shift.min() <= 0:
                    raise SingularSystem("rrm dual system is not positive definite")
                u = eigvecs @ ((eigvecs.T @ y) / shift)
            else:
                u = np.empty_like(y)
                for j, lam in enumerate(lam_arr):
                    idx = np.arange(j, V * L, L)
                    u[:, idx] = _posv_solve(g, float(lam), y[:, idx], "rrm dual solve")
            theta = (x.T @ u).T.reshape(V, L, p) / scale
        risks[:, :, step] = _excess_risk_rows(
            cov, theta.reshape(V * L, p), theta_star
        ).reshape(V, L)
    return risks, theta


def rrm_run(
    spec: ModelSpec,
    config: RidgeConfig,
    steps: int,
    theta0: Vector | None = None,
    master_seed: int = 0,
    trial: int = 0,
) -> TrialOutcome:
    """Run one retraining trajectory: draw, fit on the induced labels, deploy, repeat."""
    if steps < 1:
        raise InvalidInput(f"steps must be >= 1, got {steps}")
    theta0 = np.zeros(spec.p) if theta0 is None else np.asarray(theta0, dtype=np.float64)
    risks, thetas = _run_trial(
        spec.cov, [spec.effect], spec.noise_std, spec.theta_star,
        config, [config.lam], steps, master_seed, trial, theta0,
    )
    return TrialOutcome(
        theta_final=thetas[0, 0],
        risks_per_step=[float(r) for r in risks[0, 0]],
        seed_path=(master_seed, trial),
    )


def _worker_count() -> int:
    env = os.environ.get("PERFRIDGE_THREADS", "0")
    try:
        k = int(env)
    except ValueError:
        k = 0
    if k > 0:
        return k
    # auto: BLAS already threads inside each trial, so run trials serially
    return 1


def monte_carlo_sweep(
    spec_template: ModelSpec,
    config: RidgeConfig,
    lambda_grid: Sequence[float],
    n_trials: int,
    steps: int,
    master_seed: int,
    resample_theta_star: bool = True,
    b_recipe: EffectRecipe | None = None,
    c_recipe: EffectRecipe | None = None,
    outer_b_trials: int | None = None,
    theory_overlay: Sequence[float] | None = None,
    theta0: Vector | None = None,
) -> SweepResult:
    """Mean/std of the final-round excess risk over independent trials.

    ``b_recipe`` with ``outer_b_trials`` redraws the performative vectors in an
    outer loop, matching the figure protocol of grouping trials as (b draw) x
    (theta_star/data draws).  Deterministic in ``master_seed``, independent of
    scheduling; per-point solve failures are recorded, not fatal.
    """
    results = monte_carlo_sweep_multi(
        spec_template,
        [spec_template.effect],
        config,
        lambda_grid,
        n_trials,
        steps,
        master_seed,
        resample_theta_star=resample_theta_star,
        b_recipe=b_recipe,
        c_recipe=c_recipe,
        outer_b_trials=outer_b_trials,
        theta0=theta0,
    )
    result = results[0]
    if theory_overlay is not None:
        result = SweepResult(
            lambda_grid=result.lambda_grid,
            mean_risk=result.mean_risk,
            std_risk=result.std_risk,
            n_trials=result.n_trials,
            theory_overlay=[float(v) for v in theory_overlay],
            meta=result.meta,
        )
    return result


def monte_carlo_sweep_multi(
    spec_template: ModelSpec,
    effect_variants: Sequence[PerformativeEffect],
    config: RidgeConfig,
    lambda_grid: Sequence[float],
    n_trials: int,
    steps: int,
    master_seed: int,
    resample_theta_star: bool = True,
    b_recipe: EffectRecipe | None = None,
    c_recipe: EffectRecipe | None = None,
    outer_b_trials: int | None = None,
    theta0: Vector | None = None,
    keep_trial_risks: bool = False,
) -> list[SweepResult]:
    """Sweep several performative-effect variants on shared draws.

    Variant v and variant v' see identical feature matrices, noise, and
    theta_star per (trial, step) -- a paired design that sharpens comparisons
    of optima across effect strengths and amortizes the Gram factorizations.
    """
    lam_list = [float(v) for v in lambda_grid]
    if not lam_list:
        raise InvalidInput("lambda grid must be nonempty")
    if n_trials < 1 or (outer_b_trials is not None and outer_b_trials < 1):
        raise InvalidInput("trial counts must be >= 1")
    if not effect_variants:
        raise InvalidInput("need at least one effect variant")
    if b_recipe is not None and len(effect_variants) != 1:
        raise InvalidInput("b resampling and explicit effect variants are exclusive")
    outer = outer_b_trials if (outer_b_trials and b_recipe is not None) else 1
    total = outer * n_trials
    theta0 = np.zeros(spec_template.p) if theta0 is None else np.asarray(theta0, dtype=np.float64)
    V = len(effect_variants)

    def effects_for(outer_idx: int) -> list[PerformativeEffect]:
        if b_recipe is None:
            return list(effect_variants)
        rng_b = substream(master_seed, outer_idx, 0, Purpose.B_RESAMPLE)
        return [PerformativeEffect.from_recipes(spec_template.d, b_recipe, c_recipe, rng_b)]

    all_risks = np.full((V, total, len(lam_list)), np.nan)

    def run_one(t: int) -> None:
        outer_idx = t // n_trials
        effects = effects_for(outer_idx)
        theta_star = spec_template.theta_star
        if resample_theta_star:
            theta_star = sample_theta_star(
                spec_template.d, substream(master_seed, t, 0, Purpose.THETA_STAR)
            )
        try:
            risks, _ = _run_trial(
                spec_template.cov, effects, spec_template.noise_std, theta_star,
                config, lam_list, steps, master_seed, t, theta0,
            )
            all_risks[:, t, :] = risks[:, :, -1]
        except SingularSystem:
            pass  # leave NaN; counted in metadata

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_one, range(total)))
    else:
        for t in range(total):
            run_one(t)

    results = []
    for v in range(V):
        risks_v = all_risks[v]
        mean = np.nanmean(risks_v, axis=0)
        std = np.nanstd(risks_v, axis=0, ddof=1) if total > 1 else np.zeros(len(lam_list))
        meta = {
            "master_seed": master_seed,
            "n_trials": n_trials,
            "outer_b_trials": outer,
            "steps": steps,
            "resample_theta_star": resample_theta_star,
            "normalization": config.normalization,
            "n": config.n,
            "p": config.p,
            "failed_points": int(np.isnan(risks_v).sum()),
        }
        if keep_trial_risks:
            meta["trial_risks"] = risks_v.copy()
        results.append(
            SweepResult(
                lambda_grid=lam_list,
                mean_risk=[float(x) for x in mean],
                std_risk=[float(x) for x in std],
                n_trials=total,
                meta=meta,
            )
        )
    return results
