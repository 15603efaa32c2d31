"""Perturbation families for perturbed utility models.

A perturbation ``Lambda`` is a convex penalty on the probability simplex.
Choice probabilities maximise ``p @ v - Lambda(p)``.  Four families are
supported: negative Shannon entropy (logit), the squared Euclidean norm
(sparsemax), the Cauchy log-cosine penalty and a non-separable quadratic
form ``(mu / 2) p' Q p``.

All array functions work on the last axis and broadcast over leading
dimensions, so a batch of ``N`` utility vectors is an ``(N, K)`` array.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Mapping

import numpy as np

# Entropy clamp keeps 0 * ln 0 == 0 exact.
_ENTROPY_FLOOR = 1e-300


class Family(str, enum.Enum):
    SHANNON = "shannon"
    QUADRATIC = "quadratic"
    CAUCHY = "cauchy"
    NONSEPARABLE_QUADRATIC = "nonseparable_quadratic"

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "logit": cls.SHANNON,
            "mnl": cls.SHANNON,
            "entropy": cls.SHANNON,
            "sparsemax": cls.QUADRATIC,
            "nonseparable": cls.NONSEPARABLE_QUADRATIC,
            "nonseparablequadratic": cls.NONSEPARABLE_QUADRATIC,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown perturbation family {name!r}") from None


@dataclass(frozen=True)
class ChoiceKernel:
    """Scalar kernel ``psi = (h')^-1`` of an additively separable family.

    ``scale`` sets the width of the initial root-finding bracket.
    """

    psi: Callable[[np.ndarray], np.ndarray]
    dpsi: Callable[[np.ndarray], np.ndarray]
    h_prime: Callable[[np.ndarray], np.ndarray]
    scale: float = 1.0


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Immutable description of a perturbation function.

    Parameters
    ----------
    family : Family
        Which perturbation.
    mu : float
        Dispersion, strictly positive.
    Q : ndarray, optional
        Symmetric positive-definite ``K x K`` matrix, required for (and only
        allowed with) the non-separable quadratic family.
    """

    family: Family
    mu: float = 1.0
    Q: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        fam = Family.parse(self.family) if isinstance(self.family, str) else self.family
        object.__setattr__(self, "family", Family(fam))
        mu = float(self.mu)
        if not (mu > 0 and math.isfinite(mu)):
            raise ValueError(f"mu must be positive and finite, got {self.mu}")
        object.__setattr__(self, "mu", mu)
        if self.family is Family.NONSEPARABLE_QUADRATIC:
            if self.Q is None:
                raise ValueError("non-separable quadratic perturbation needs a Q matrix")
            Q = np.array(self.Q, dtype=float)
            if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
                raise ValueError(f"Q must be square, got shape {Q.shape}")
            if not np.allclose(Q, Q.T, rtol=0, atol=1e-10 * max(1.0, np.abs(Q).max())):
                raise ValueError("Q must be symmetric")
            Q = 0.5 * (Q + Q.T)
            if np.linalg.eigvalsh(Q).min() <= 0:
                raise ValueError("Q must be positive definite")
            Q.setflags(write=False)
            object.__setattr__(self, "Q", Q)
        elif self.Q is not None:
            raise ValueError(f"Q is only meaningful for the non-separable family, not {self.family.value}")

    # constructors ---------------------------------------------------------

    @classmethod
    def shannon(cls, mu: float = 1.0) -> "Perturbation":
        return cls(Family.SHANNON, mu)

    @classmethod
    def quadratic(cls, mu: float = 1.0) -> "Perturbation":
        return cls(Family.QUADRATIC, mu)

    @classmethod
    def cauchy(cls, mu: float = 1.0) -> "Perturbation":
        return cls(Family.CAUCHY, mu)

    @classmethod
    def nonseparable(cls, Q, mu: float = 1.0) -> "Perturbation":
        return cls(Family.NONSEPARABLE_QUADRATIC, mu, np.asarray(Q, dtype=float))

    @classmethod
    def from_config(cls, record: Mapping[str, Any]) -> "Perturbation":
        """Build from ``{"family": str, "mu": float, "q_matrix": rows}``."""
        if "family" not in record:
            raise ValueError("perturbation config needs a 'family' entry")
        q = record.get("q_matrix")
        return cls(Family.parse(record["family"]), float(record.get("mu", 1.0)),
                   None if q is None else np.asarray(q, dtype=float))

    def to_config(self) -> dict:
        out = {"family": self.family.value, "mu": self.mu}
        if self.Q is not None:
            out["q_matrix"] = self.Q.tolist()
        return out

    # properties -----------------------------------------------------------

    @property
    def separable(self) -> bool:
        return self.family is not Family.NONSEPARABLE_QUADRATIC

    @property
    def full_support(self) -> bool:
        """True when the gradient of Lambda diverges on the simplex boundary."""
        return self.family in (Family.SHANNON, Family.CAUCHY)

    @cached_property
    def q_lambda_max(self) -> float:
        """Largest eigenvalue of ``Q`` by power iteration (1e-8 relative)."""
        if self.Q is None:
            return 1.0
        return power_iteration(self.Q)

    @cached_property
    def q_lambda_min(self) -> float:
        if self.Q is None:
            return 1.0
        return float(np.linalg.eigvalsh(self.Q)[0])

    @property
    def lambda_smoothness(self) -> float:
        """Lipschitz constant of grad Lambda on the simplex (inf if unbounded)."""
        if self.family is Family.QUADRATIC:
            return self.mu
        if self.family is Family.NONSEPARABLE_QUADRATIC:
            return self.mu * self.q_lambda_max
        return math.inf

    @property
    def surplus_curvature(self) -> float:
        """Upper bound on the spectral norm of the Hessian of the surplus."""
        if self.family is Family.SHANNON:
            return 0.5 / self.mu
        if self.family is Family.QUADRATIC:
            return 1.0 / self.mu
        if self.family is Family.CAUCHY:
            return 1.0 / (math.pi * self.mu)
        return 1.0 / (self.mu * self.q_lambda_min)

    @cached_property
    def kernel(self) -> ChoiceKernel:
        mu = self.mu
        if self.family is Family.SHANNON:
            return ChoiceKernel(
                psi=lambda z: np.exp(z / mu - 1.0),
                dpsi=lambda z: np.exp(z / mu - 1.0) / mu,
                h_prime=lambda p: mu * (np.log(p) + 1.0),
                scale=mu,
            )
        if self.family is Family.QUADRATIC:
            return ChoiceKernel(
                psi=lambda z: np.maximum(z, 0.0) / mu,
                dpsi=lambda z: (np.asarray(z) > 0) / mu,
                h_prime=lambda p: mu * p,
                scale=mu,
            )
        if self.family is Family.CAUCHY:
            return ChoiceKernel(
                psi=lambda z: 0.5 + np.arctan(z / mu) / math.pi,
                dpsi=lambda z: mu / (math.pi * (mu * mu + np.square(z))),
                h_prime=lambda p: mu * np.tan(math.pi * (p - 0.5)),
                scale=mu,
            )
        raise ValueError("the non-separable family has no scalar choice kernel")

    def check_dimension(self, K: int) -> None:
        if self.Q is not None and self.Q.shape[0] != K:
            raise ValueError(f"dimension mismatch: Q is {self.Q.shape[0]}x{self.Q.shape[0]}, vector has {K} entries")


def power_iteration(A: np.ndarray, rtol: float = 1e-8, max_iter: int = 100_000) -> float:
    """Dominant eigenvalue of a symmetric positive semi-definite matrix."""
    n = A.shape[0]
    x = np.ones(n) / math.sqrt(n) + np.linspace(0.0, 1e-3, n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = A @ x
        lam_new = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        x = y / norm
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def _as_simplex_array(pert: Perturbation, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        raise ValueError("probability vector must be at least one-dimensional")
    pert.check_dimension(p.shape[-1])
    return p


def lambda_value(pert: Perturbation, p):
    """Evaluate the perturbation ``Lambda(p)`` along the last axis.

    The Cauchy penalty is ``+inf`` on the simplex boundary; that is returned
    as a value, not raised.  Additive constants are fixed to zero.
    """
    p = _as_simplex_array(pert, p)
    mu = pert.mu
    fam = pert.family
    if fam is Family.SHANNON:
        out = mu * np.sum(p * np.log(np.clip(p, _ENTROPY_FLOOR, 1.0)), axis=-1)
    elif fam is Family.QUADRATIC:
        out = 0.5 * mu * np.sum(p * p, axis=-1)
    elif fam is Family.CAUCHY:
        inside = (p > 0.0) & (p < 1.0)
        c = np.cos(math.pi * (np.where(inside, p, 0.5) - 0.5))
        terms = np.where(inside, -np.log(c), np.inf)
        out = (mu / math.pi) * np.sum(terms, axis=-1)
    else:
        out = 0.5 * mu * np.einsum("...i,ij,...j->...", p, pert.Q, p)
    return float(out) if np.ndim(out) == 0 else out


def grad_lambda(pert: Perturbation, p) -> np.ndarray:
    """Gradient of ``Lambda`` at ``p``.

    Raises ``ValueError`` on boundary input for the Shannon and Cauchy
    families, whose gradient diverges there.
    """
    p = _as_simplex_array(pert, p)
    if pert.full_support and (np.any(p <= 0.0) or np.any(p >= 1.0)):
        raise ValueError("gradient diverges at boundary")
    return _grad_lambda_unchecked(pert, p)


def _grad_lambda_unchecked(pert: Perturbation, p: np.ndarray) -> np.ndarray:
    fam = pert.family
    if fam is Family.NONSEPARABLE_QUADRATIC:
        return pert.mu * p @ pert.Q
    return pert.kernel.h_prime(p)


# Interior margin used when gradient steps must touch the boundary.
_GRAD_CLAMP = 1e-12


def grad_lambda_clamped(pert: Perturbation, p: np.ndarray) -> np.ndarray:
    """Gradient of ``Lambda`` with boundary entries pulled into the interior.

    Used by projected first-order methods whose iterates may sit on a face of
    the simplex.
    """
    if pert.full_support:
        p = np.clip(p, _GRAD_CLAMP, 1.0 - _GRAD_CLAMP)
    return _grad_lambda_unchecked(pert, p)
