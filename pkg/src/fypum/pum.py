"""Surplus function, choice probabilities and surplus curvature.

The surplus ``Omega`` is the convex conjugate of the perturbation and its
gradient is the choice-probability map.  Every function accepts a single
utility vector of shape ``(K,)`` or a batch ``(..., K)``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax

from .perturbation import Family, Perturbation, lambda_value
from .simplex import SolverConfig, normalize_batch, project_simplex, solve_primal_nonseparable


def _as_utilities(pert: Perturbation, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        raise ValueError("utility vector must be at least one-dimensional")
    if not np.all(np.isfinite(v)):
        raise ValueError("utilities must be finite")
    pert.check_dimension(v.shape[-1])
    return v


def _renormalize(p: np.ndarray) -> np.ndarray:
    p = np.maximum(p, 0.0)
    return p / p.sum(axis=-1, keepdims=True)


def choice_probabilities(pert: Perturbation, v, cfg: SolverConfig | None = None,
                         p0: np.ndarray | None = None) -> np.ndarray:
    """Choice probabilities ``p = grad Omega(v)``.

    Parameters
    ----------
    pert : Perturbation
    v : array_like, shape (..., K)
        Systematic utilities.
    cfg : SolverConfig, optional
        Tolerances for the Cauchy root-finder and the non-separable solver.
    p0 : ndarray, optional
        Warm start for the non-separable solver; ignored otherwise.

    Returns
    -------
    ndarray, shape (..., K)
        Non-negative rows summing to one.
    """
    v = _as_utilities(pert, v)
    cfg = cfg or SolverConfig()
    fam = pert.family
    if fam is Family.SHANNON:
        return softmax(v / pert.mu, axis=-1)
    if fam is Family.QUADRATIC:
        return _renormalize(project_simplex(v / pert.mu))
    if fam is Family.CAUCHY:
        kern = pert.kernel
        lam = normalize_batch(kern, v, tol=cfg.tol_root, max_iter=cfg.max_iter)
        return _renormalize(kern.psi(v - np.asarray(lam)[..., None]))
    return _renormalize(solve_primal_nonseparable(pert, v, cfg, p0=p0))


def surplus(pert: Perturbation, v, cfg: SolverConfig | None = None, p: np.ndarray | None = None):
    """Surplus ``Omega(v) = max_p p @ v - Lambda(p)``.

    Closed-form log-sum-exp for Shannon; otherwise evaluated at the optimal
    probabilities, which may be passed in as ``p`` to avoid a second solve.
    """
    v = _as_utilities(pert, v)
    if pert.family is Family.SHANNON:
        out = pert.mu * logsumexp(v / pert.mu, axis=-1)
    else:
        if p is None:
            p = choice_probabilities(pert, v, cfg)
        out = np.sum(p * v, axis=-1) - lambda_value(pert, p)
    return float(out) if np.ndim(out) == 0 else out


def surplus_hessian(pert: Perturbation, v, cfg: SolverConfig | None = None,
                    method: str = "auto", step: float = 1e-5) -> np.ndarray:
    """Hessian of the surplus, i.e. the Jacobian of the probability map.

    Parameters
    ----------
    method : {"auto", "analytic", "fd"}
        ``"auto"`` is analytic for Shannon and central differences otherwise.
        ``"analytic"`` is available for the separable families: with
        ``d = psi'(v - lam)`` the Jacobian is ``diag(d) - d d' / sum(d)``.
    step : float
        Central-difference step.

    Returns
    -------
    ndarray, shape (..., K, K)
    """
    v = _as_utilities(pert, v)
    if method == "auto":
        method = "analytic" if pert.family is Family.SHANNON else "fd"
    if method == "analytic":
        if pert.family is Family.SHANNON:
            p = choice_probabilities(pert, v)
            return (_diag(p) - p[..., :, None] * p[..., None, :]) / pert.mu
        if not pert.separable:
            raise ValueError("analytic Hessian needs a separable family")
        p = choice_probabilities(pert, v, cfg)
        if pert.family is Family.QUADRATIC:
            d = (p > 0) / pert.mu
        else:
            lam = normalize_batch(pert.kernel, v, tol=(cfg or SolverConfig()).tol_root)
            d = pert.kernel.dpsi(v - np.asarray(lam)[..., None])
        return _diag(d) - d[..., :, None] * d[..., None, :] / d.sum(axis=-1)[..., None, None]
    if method != "fd":
        raise ValueError(f"unknown Hessian method {method!r}")
    K = v.shape[-1]
    H = np.empty(v.shape + (K,))
    for k in range(K):
        e = np.zeros(K)
        e[k] = step
        H[..., :, k] = (choice_probabilities(pert, v + e, cfg) - choice_probabilities(pert, v - e, cfg)) / (2 * step)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _diag(a: np.ndarray) -> np.ndarray:
    out = np.zeros(a.shape + (a.shape[-1],))
    idx = np.arange(a.shape[-1])
    out[..., idx, idx] = a
    return out
