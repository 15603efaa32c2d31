"""Sandwich (robust) covariance of Fenchel-Young estimates."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..losses import ChoiceDataset, per_sample_gradients
from ..perturbation import Family, Perturbation
from ..pum import surplus_hessian
from ..simplex import SolverConfig

MAX_CONDITION = 1e12


class SandwichParts(NamedTuple):
    hessian: np.ndarray
    score_cov: np.ndarray
    covariance: np.ndarray
    hessian_may_be_singular: bool


def empirical_hessian(pert: Perturbation, data: ChoiceDataset, beta, cfg: SolverConfig | None = None,
                      method: str = "auto", step: float = 1e-5) -> np.ndarray:
    """``(1/N) sum_n X_n' [Hess Omega(V_n)] X_n``."""
    V = data.X @ np.asarray(beta, dtype=float)
    Hv = surplus_hessian(pert, V, cfg, method=method, step=step)
    return np.einsum("nkd,nkl,nle->de", data.X, Hv, data.X) / data.N


def score_covariance(pert: Perturbation, data: ChoiceDataset, beta, cfg: SolverConfig | None = None) -> np.ndarray:
    """``(1/N) sum_n g_n g_n'`` with ``g_n`` the per-observation gradient."""
    g = per_sample_gradients(pert, beta, data, cfg)
    return g.T @ g / data.N


def sandwich_parts(pert: Perturbation, data: ChoiceDataset, beta, cfg: SolverConfig | None = None,
                   method: str = "auto", step: float = 1e-5) -> SandwichParts:
    """Hessian, score covariance and ``H^-1 J H^-1 / N``.

    Families without a twice-differentiable surplus (sparsemax, and the
    non-separable quadratic) get a finite-difference Hessian that can be
    rank deficient where the probability map is flat; they are flagged
    with ``hessian_may_be_singular``.

    Raises
    ------
    numpy.linalg.LinAlgError
        "Hessian not positive definite" when its condition number exceeds 1e12.
    """
    H = empirical_hessian(pert, data, beta, cfg, method, step)
    J = score_covariance(pert, data, beta, cfg)
    ev = np.linalg.eigvalsh(H)
    if ev[0] <= 0 or ev[-1] / ev[0] > MAX_CONDITION:
        raise np.linalg.LinAlgError("Hessian not positive definite")
    Hinv = np.linalg.inv(H)
    cov = Hinv @ J @ Hinv / data.N
    flag = pert.family in (Family.QUADRATIC, Family.NONSEPARABLE_QUADRATIC)
    return SandwichParts(H, J, 0.5 * (cov + cov.T), flag)


def sandwich_covariance(pert: Perturbation, data: ChoiceDataset, beta, cfg: SolverConfig | None = None,
                        method: str = "auto", step: float = 1e-5) -> np.ndarray:
    """Estimated covariance matrix of ``beta`` (already divided by ``N``)."""
    return sandwich_parts(pert, data, beta, cfg, method, step).covariance


def wald_intervals(beta, cov, level: float = 0.95) -> np.ndarray:
    """Component-wise normal-theory intervals, shape ``(d, 2)``."""
    from scipy.stats import norm

    z = norm.ppf(0.5 + level / 2)
    se = np.sqrt(np.diag(cov))
    beta = np.asarray(beta, dtype=float)
    return np.stack([beta - z * se, beta + z * se], axis=1)
