"""Data-generating process: block covariance, performative effect, labels model.

Features are N(0, Sigma) with Sigma carrying a 2x2 block structure over the
predictive (first d) and spurious (last d) coordinates::

    Sigma = [[Sigma1,   Sigma12],
             [Sigma12^T, Sigma2]]

Labels react to the deployed parameter ``theta`` through the diagonal operator
``D = diag(b, c)``:  y = x^T theta_star + x^T D theta + noise.  The ground
truth loads only on the predictive block: theta_star = (a, 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DimensionMismatch,
    InvalidCovariance,
    InvalidInput,
    SingularBlock,
)
from .rng import Purpose, substream

__all__ = [
    "BlockCovariance",
    "PerformativeEffect",
    "EffectRecipe",
    "ModelSpec",
    "Normalization",
    "RidgeConfig",
    "assemble_sigma",
    "schur_predictive",
    "schur_offdiag",
    "excess_risk",
    "sample_theta_star",
]

# Relative eigenvalue floor for positive-definiteness checks.
PD_FLOOR = 1e-10
# Condition-number ceiling above which a block is declared singular.
COND_LIMIT = 1e12

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]


def _as_symmetric(m: Any, d: int, name: str) -> Matrix:
    arr = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if arr.shape != (d, d):
        raise DimensionMismatch(f"{name} must be {d}x{d}, got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class BlockCovariance:
    """The population covariance with its predictive/spurious block split.

    ``rho`` is set when the instance was built through :meth:`isotropic`, in
    which case Sigma1 = Sigma2 = I and Sigma12 = rho*I; several downstream
    routines exploit that structure (analytic spectrum, O(n p) sampling).
    """

    d: int
    sigma1: Matrix
    sigma2: Matrix
    sigma12: Matrix
    rho: float | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise InvalidInput(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "sigma1", _as_symmetric(self.sigma1, self.d, "sigma1"))
        object.__setattr__(self, "sigma2", _as_symmetric(self.sigma2, self.d, "sigma2"))
        object.__setattr__(self, "sigma12", _as_symmetric(self.sigma12, self.d, "sigma12"))
        for name in ("sigma1", "sigma2"):
            m = getattr(self, name)
            if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(m).max()))):
                raise InvalidCovariance(f"{name} is not symmetric")
        if self.rho is not None and not -1.0 < self.rho < 1.0:
            raise InvalidCovariance(f"isotropic rho must lie in (-1, 1), got {self.rho}")
        self._check_positive_definite()

    @classmethod
    def isotropic(cls, d: int, rho: float = 0.0) -> "BlockCovariance":
        """Sigma1 = Sigma2 = I_d with cross-block rho*I_d."""
        eye = np.eye(d)
        return cls(d=d, sigma1=eye, sigma2=eye.copy(), sigma12=rho * eye, rho=float(rho))

    @property
    def p(self) -> int:
        return 2 * self.d

    def _check_positive_definite(self) -> None:
        if self.rho is not None:
            # eigenvalues are 1 +/- |rho|, each with multiplicity d
            if 1.0 - abs(self.rho) <= PD_FLOOR * (1.0 + abs(self.rho)):
                raise InvalidCovariance(
                    f"isotropic covariance with rho={self.rho} is not positive definite"
                )
            return
        sigma = self._assemble()
        eigs = np.linalg.eigvalsh(sigma)
        if eigs[0] <= PD_FLOOR * eigs[-1]:
            raise InvalidCovariance(
                f"covariance smallest eigenvalue {eigs[0]:.3e} below floor "
                f"{PD_FLOOR:.0e} * opnorm ({eigs[-1]:.3e})"
            )

    def _assemble(self) -> Matrix:
        top = np.hstack([self.sigma1, self.sigma12])
        bot = np.hstack([self.sigma12.T, self.sigma2])
        return np.vstack([top, bot])

    def spectrum(self) -> Vector:
        """Eigenvalues of the full Sigma in ascending order."""
        if self.rho is not None:
            r = abs(self.rho)
            return np.concatenate([np.full(self.d, 1.0 - r), np.full(self.d, 1.0 + r)])
        return np.linalg.eigvalsh(self._assemble())

    def opnorm(self) -> float:
        return float(self.spectrum()[-1])

    def min_eig(self) -> float:
        return float(self.spectrum()[0])

    def cholesky_lower(self) -> Matrix:
        """Dense lower Cholesky factor of the full Sigma."""
        return np.linalg.cholesky(assemble_sigma(self))


def assemble_sigma(cov: BlockCovariance) -> Matrix:
    """Return the full p x p covariance, symmetric to machine precision."""
    sigma = cov._assemble()
    return 0.5 * (sigma + sigma.T)


def _solve_block(sigma2: Matrix, rhs: Matrix) -> Matrix:
    cond = np.linalg.cond(sigma2)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularBlock(f"spurious block condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
    return np.linalg.solve(sigma2, rhs)


def schur_predictive(cov: BlockCovariance) -> Matrix:
    """S1 = (Sigma1 - Sigma12 Sigma2^{-1} Sigma21)^{-1}, the predictive precision block."""
    if cov.rho is not None:
        return np.eye(cov.d) / (1.0 - cov.rho**2)
    sigma21 = cov.sigma12.T
    comp = cov.sigma1 - cov.sigma12 @ _solve_block(cov.sigma2, sigma21)
    cond = np.linalg.cond(comp)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularBlock(f"Schur complement condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
    return np.linalg.inv(comp)


def schur_offdiag(cov: BlockCovariance) -> Matrix:
    """S21, the lower-left block of Sigma^{-1}:  S21 = -Sigma2^{-1} Sigma21 S1."""
    s1 = schur_predictive(cov)
    if cov.rho is not None:
        return -cov.rho / (1.0 - cov.rho**2) * np.eye(cov.d)
    return -_solve_block(cov.sigma2, cov.sigma12.T @ s1)


def excess_risk(cov: BlockCovariance, theta: Vector, theta_star: Vector) -> float:
    """Quadratic excess risk (theta - theta_star)^T Sigma (theta - theta_star).

    Equals the test error on the unshifted distribution minus the Bayes noise.
    """
    theta = np.asarray(theta, dtype=np.float64)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    p = cov.p
    if theta.shape != (p,) or theta_star.shape != (p,):
        raise DimensionMismatch(
            f"theta and theta_star must have shape ({p},), got {theta.shape} and {theta_star.shape}"
        )
    diff = theta - theta_star
    d = cov.d
    if cov.rho is not None:
        u, v = diff[:d], diff[d:]
        return float(u @ u + v @ v + 2.0 * cov.rho * (u @ v))
    sigma = assemble_sigma(cov)
    return float(diff @ (sigma @ diff))


def sample_theta_star(d: int, rng: np.random.Generator) -> Vector:
    """Draw theta_star = (a, 0) with a ~ N(0, I_d / d); E||theta_star||^2 = 1."""
    if d < 1:
        raise InvalidInput(f"d must be >= 1, got {d}")
    a = rng.standard_normal(d) / np.sqrt(d)
    return np.concatenate([a, np.zeros(d)])


@dataclass(frozen=True)
class EffectRecipe:
    """Named generator for the entries of a performative vector.

    kinds:
      ``constant``        all entries equal to ``mean``
      ``uniform_span``    uniform on [min(0, 2*mean), max(0, 2*mean)]
      ``uniform_meanstd`` uniform on [mean - std*sqrt(3), mean + std*sqrt(3)]
      ``explicit``        entries given verbatim in ``values``
    """

    kind: str
    mean: float = 0.0
    std: float = 0.0
    values: tuple[float, ...] | None = None

    def sample(self, d: int, rng: np.random.Generator | None = None) -> Vector:
        if self.kind == "constant":
            return np.full(d, self.mean)
        if self.kind == "explicit":
            if self.values is None:
                raise InvalidInput("explicit recipe requires values")
            arr = np.asarray(self.values, dtype=np.float64)
            if arr.shape != (d,):
                raise DimensionMismatch(f"explicit values must have length {d}")
            return arr
        if rng is None:
            raise InvalidInput(f"recipe kind {self.kind!r} requires a random stream")
        if self.kind == "uniform_span":
            lo, hi = min(0.0, 2.0 * self.mean), max(0.0, 2.0 * self.mean)
            return rng.uniform(lo, hi, size=d) if hi > lo else np.zeros(d)
        if self.kind == "uniform_meanstd":
            half = self.std * np.sqrt(3.0)
            return rng.uniform(self.mean - half, self.mean + half, size=d)
        raise InvalidInput(f"unknown effect recipe kind {self.kind!r}")

    def to_json_dict(self) -> dict[str, Any]:
        params: dict[str, Any] = {"mean": self.mean}
        if self.kind == "uniform_meanstd":
            params["std"] = self.std
        if self.kind == "explicit":
            params = {"values": list(self.values or ())}
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "EffectRecipe":
        params = dict(doc.get("params", {}))
        values = params.get("values")
        return cls(
            kind=doc["kind"],
            mean=float(params.get("mean", 0.0)),
            std=float(params.get("std", 0.0)),
            values=tuple(values) if values is not None else None,
        )


@dataclass(frozen=True, eq=False)
class PerformativeEffect:
    """The diagonal performative operator D = diag(b, c), with ||b||_inf, ||c||_inf < 1."""

    b: Vector
    c: Vector

    def __post_init__(self) -> None:
        b = np.asarray(self.b, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if b.ndim != 1 or c.ndim != 1 or b.shape != c.shape:
            raise DimensionMismatch("b and c must be one-dimensional with equal length")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        for name, v in (("b", b), ("c", c)):
            if v.size and float(np.abs(v).max()) >= 1.0:
                raise InvalidInput(f"||{name}||_inf must be < 1, got {np.abs(v).max()}")

    @classmethod
    def from_recipes(
        cls,
        d: int,
        b_recipe: EffectRecipe,
        c_recipe: EffectRecipe | None = None,
        rng: np.random.Generator | None = None,
    ) -> "PerformativeEffect":
        c_recipe = c_recipe or EffectRecipe("constant", 0.0)
        return cls(b=b_recipe.sample(d, rng), c=c_recipe.sample(d, rng))

    @property
    def d(self) -> int:
        return self.b.size

    @property
    def bbar(self) -> float:
        return float(self.b.mean()) if self.b.size else 0.0

    @property
    def cbar(self) -> float:
        return float(self.c.mean()) if self.c.size else 0.0

    def diag(self) -> Vector:
        """Concatenated diagonal of D."""
        return np.concatenate([self.b, self.c])


class Normalization:
    """Objective scaling for the ridge fit: 1/(2n) (PerN) or 1/(2p) (PerP)."""

    PER_N = "per_n"
    PER_P = "per_p"


@dataclass(frozen=True)
class RidgeConfig:
    """Regularization and sample geometry of one retraining round."""

    lam: float
    n: int
    p: int
    normalization: str = Normalization.PER_N

    def __post_init__(self) -> None:
        if self.n < 0 or self.p < 1:
            raise InvalidInput(f"need n >= 0 and p >= 1, got n={self.n}, p={self.p}")
        if self.normalization not in (Normalization.PER_N, Normalization.PER_P):
            raise InvalidInput(f"unknown normalization {self.normalization!r}")
        if self.normalization == Normalization.PER_P and self.lam <= 0:
            raise InvalidInput(
                "per-p normalization requires lam > 0 (the p x p Gram matrix is "
                "rank deficient when p > n)"
            )

    @property
    def kappa(self) -> float:
        return self.p / self.n


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Complete specification of the performative data-generating process."""

    cov: BlockCovariance
    effect: PerformativeEffect
    noise_std: float
    theta_star: Vector
    theta_star_seed: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.noise_std < 0:
            raise InvalidInput(f"noise_std must be >= 0, got {self.noise_std}")
        if self.effect.d != self.cov.d:
            raise DimensionMismatch(
                f"effect dimension {self.effect.d} != covariance half-dimension {self.cov.d}"
            )
        ts = np.asarray(self.theta_star, dtype=np.float64)
        if ts.shape != (self.cov.p,):
            raise DimensionMismatch(f"theta_star must have shape ({self.cov.p},)")
        if np.any(ts[self.cov.d :] != 0.0):
            raise InvalidInput("the spurious half of theta_star must be exactly zero")
        object.__setattr__(self, "theta_star", ts)

    @property
    def d(self) -> int:
        return self.cov.d

    @property
    def p(self) -> int:
        return self.cov.p

    def to_json(self) -> str:
        if self.cov.rho is not None:
            sigma_doc: dict[str, Any] = {"kind": "isotropic_rho", "rho": self.cov.rho}
        else:
            sigma_doc = {
                "kind": "explicit",
                "blocks": {
                    "sigma1": self.cov.sigma1.tolist(),
                    "sigma2": self.cov.sigma2.tolist(),
                    "sigma12": self.cov.sigma12.tolist(),
                },
            }
        doc = {
            "d": self.cov.d,
            "sigma": sigma_doc,
            "b": {"kind": "explicit", "params": {"values": self.effect.b.tolist()}},
            "c": {"kind": "explicit", "params": {"values": self.effect.c.tolist()}},
            "sigma_noise": self.noise_std,
            "theta_star_seed": self.theta_star_seed,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"invalid ModelSpec JSON: {exc}") from exc
        d = int(doc["d"])
        sigma_doc = doc["sigma"]
        if sigma_doc["kind"] == "isotropic_rho":
            cov = BlockCovariance.isotropic(d, float(sigma_doc.get("rho", 0.0)))
        elif sigma_doc["kind"] == "explicit":
            blocks = sigma_doc["blocks"]
            cov = BlockCovariance(
                d=d,
                sigma1=np.asarray(blocks["sigma1"], dtype=np.float64),
                sigma2=np.asarray(blocks["sigma2"], dtype=np.float64),
                sigma12=np.asarray(blocks["sigma12"], dtype=np.float64),
            )
        else:
            raise InvalidInput(f"unknown sigma kind {sigma_doc['kind']!r}")
        seed = doc.get("theta_star_seed")
        b_recipe = EffectRecipe.from_json_dict(doc["b"])
        c_recipe = EffectRecipe.from_json_dict(doc["c"])
        rng = substream(seed, 0, 0, Purpose.B_RESAMPLE) if seed is not None else None
        effect = PerformativeEffect.from_recipes(d, b_recipe, c_recipe, rng)
        if seed is None:
            raise InvalidInput("ModelSpec JSON requires theta_star_seed")
        theta_star = sample_theta_star(d, substream(int(seed), 0, 0, Purpose.THETA_STAR))
        return cls(
            cov=cov,
            effect=effect,
            noise_std=float(doc["sigma_noise"]),
            theta_star=theta_star,
            theta_star_seed=int(seed),
        )
