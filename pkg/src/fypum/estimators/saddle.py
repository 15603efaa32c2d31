"""Projected extragradient solvers for the lifted saddle-point problems.

The choice probabilities become explicit dual variables ``P`` (one simplex
vector per observation), so non-separable perturbations need no inner
solve.  Dual gradients are taken per observation (the ``1/N`` weight is
dropped) and the KKT residual uses the matching weighted norm

    r^2 = ||d_beta / tau||^2 + (1/N) sum_n ||d_p_n / sigma||^2,

where ``d`` is the displacement of the extrapolation step.
"""

from __future__ import annotations

import math

import numpy as np

from ..losses import ChoiceDataset
from ..perturbation import Perturbation, grad_lambda_clamped, lambda_value
from ..simplex import SolverConfig, project_simplex
from .dro import DroConfig, dro_objective
from .result import EstimateResult


def dual_smoothness(pert: Perturbation, K: int) -> float:
    """Lipschitz constant used for the gradient of Lambda in step sizes.

    Unbounded for Shannon and Cauchy; there the curvature at probability
    ``1 / (10 K)`` stands in.
    """
    if math.isfinite(pert.lambda_smoothness):
        return pert.lambda_smoothness
    return 10.0 * K * pert.mu


def coupling_norm(data: ChoiceDataset) -> float:
    """``max_n ||X_n||_F``, which bounds every per-observation coupling block."""
    return float(np.sqrt(np.einsum("nkd,nkd->n", data.X, data.X).max()))


def default_steps(coupling: float, L_lam: float, dual_share: float = 0.3) -> tuple[float, float]:
    """Primal and dual steps with ``sqrt(tau sigma) * coupling + sigma * L_lam <= 0.95``.

    ``dual_share`` of the budget goes to the dual curvature
    (``sigma = dual_share / L_lam``), the rest to the bilinear coupling.
    """
    if not 0 < dual_share < 0.95:
        raise ValueError("dual_share must lie in (0, 0.95)")
    sigma = dual_share / L_lam
    tau = (0.95 - dual_share) ** 2 / (sigma * coupling ** 2)
    return tau, sigma


def _lagrangian(pert, data, beta, P):
    V = data.X @ beta
    n = np.arange(data.N)
    return float(np.mean(np.sum(P * V, axis=1) - lambda_value(pert, P) - V[n, data.y]))


def _oscillation(obj: list[float], window: int = 100) -> float:
    tail = np.asarray(obj[-(window + 1):])
    return float(np.mean(np.abs(np.diff(tail)))) if tail.size > 1 else 0.0


def estimate_fy_extragradient(pert: Perturbation, data: ChoiceDataset, cfg: SolverConfig | None = None,
                              callback=None) -> EstimateResult:
    """Fenchel-Young estimator via the primal-dual saddle point.

    Solves ``min_beta max_P (1/N) sum_n [p_n' (V_n - V_{n y_n} 1) - Lambda(p_n)]``
    from ``beta = 0`` and uniform ``P``.  Default steps come from
    ``default_steps`` with coupling ``max_n ||X_n||_F``; ``cfg.tau`` and
    ``cfg.sigma`` override them.  ``objective_trace`` records the Lagrangian.
    ``callback(iteration, beta)``, if given, sees every recorded iterate.
    """
    cfg = cfg or SolverConfig()
    X, Y = data.X, data.Y
    N, K, d = X.shape
    pert.check_dimension(K)
    tau0, sigma0 = default_steps(coupling_norm(data), dual_smoothness(pert, K))
    tau = cfg.tau or tau0
    sigma = cfg.sigma or sigma0

    beta = np.zeros(d)
    P = np.full((N, K), 1.0 / K)
    obj, kkt = [], []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        V = X @ beta
        gb = np.einsum("nk,nkd->d", P - Y, X) / N
        beta_t = beta - tau * gb
        P_t = project_simplex(P + sigma * (V - grad_lambda_clamped(pert, P)))
        r = math.sqrt(np.sum((beta - beta_t) ** 2) / tau ** 2 + np.sum((P - P_t) ** 2) / (N * sigma ** 2))
        obj.append(_lagrangian(pert, data, beta, P))
        kkt.append(r)
        if callback is not None:
            callback(it, beta)
        if r <= cfg.tol_kkt:
            converged = True
            break
        V_t = X @ beta_t
        gb_t = np.einsum("nk,nkd->d", P_t - Y, X) / N
        beta = beta - tau * gb_t
        P = project_simplex(P + sigma * (V_t - grad_lambda_clamped(pert, P_t)))
    return EstimateResult(beta, np.array(obj), np.array(kkt), it, converged,
                          diagnostics={"tau": tau, "sigma": sigma, "probabilities": P})


def project_cone(beta: np.ndarray, gamma: float, c: float) -> tuple[np.ndarray, float]:
    """Euclidean projection onto ``{(beta, gamma): gamma >= c ||beta||}``."""
    nb = float(np.linalg.norm(beta))
    if c * nb <= gamma:
        return beta, gamma
    a = 1.0 / c
    if a * nb + gamma <= 0:
        return np.zeros_like(beta), 0.0
    g = (a * nb + gamma) / (1.0 + a * a)
    return beta * (a * g / nb), g


def estimate_dro_bilinear(pert: Perturbation, data: ChoiceDataset, dro: DroConfig,
                          cfg: SolverConfig | None = None, callback=None) -> EstimateResult:
    """Wasserstein-robust estimator via the bilinear saddle point.

    Primal ``(beta, gamma)`` lives in the cone ``gamma >= c_S ||beta||``; the
    duals are the prediction simplexes ``P`` and adversarial label
    simplexes ``Q``.  Every outer iteration first takes
    ``dro.inner_steps`` projected ascent steps on ``(P, Q)`` with the
    longer step ``sigma * inner_step_scale`` (capped at ``1 / L_Lambda`` for
    ``P``), then one extragradient step on all blocks.

    ``Q`` starts at the observed labels: started uniform, a large flip price
    pushes ``gamma`` far past its optimum in the first step.  Step defaults
    come from ``default_steps`` with coupling ``sqrt(2) max_n ||X_n||_F`` and a
    small dual share (0.1), since the inner steps already move the duals fast;
    the ``gamma``-``Q`` coupling (size ``kappa``) is left out so large
    ``kappa`` does not stall the run, and the resulting oscillation is
    reported instead.

    ``objective_trace`` is the safe-approximation objective at the current
    ``(beta, gamma)``; ``diagnostics["oscillation"]`` is the mean absolute
    objective change over the last 100 iterations.  ``callback(iteration,
    beta)``, if given, sees every recorded iterate.
    """
    cfg = cfg or SolverConfig()
    X, Y = data.X, data.Y
    N, K, d = X.shape
    pert.check_dimension(K)
    flip = 1.0 - Y
    kappa = dro.kappa
    frozen_q = dro.flips_forbidden
    L_lam = dual_smoothness(pert, K)
    tau0, sigma0 = default_steps(math.sqrt(2.0) * coupling_norm(data), L_lam, dual_share=0.1)
    tau = cfg.tau or tau0
    sigma = cfg.sigma or sigma0
    sig_in = sigma * dro.inner_step_scale
    sig_in_p = min(sig_in, 1.0 / L_lam)
    c = dro.c_s
    eps = dro.epsilon

    beta = np.zeros(d)
    gamma = 0.0
    P = np.full((N, K), 1.0 / K)
    Q = Y.copy()

    def grads(b, g, P_, Q_):
        V = X @ b
        gb = np.einsum("nk,nkd->d", P_ - Q_, X) / N
        if frozen_q:
            gg = eps
            gq = None
        else:
            gg = eps - kappa * np.sum(Q_ * flip) / N
            gq = -V - g * kappa * flip
        gp = V - grad_lambda_clamped(pert, P_)
        return gb, gg, gp, gq

    def ascend(P_, Q_, sp, sq, gp, gq):
        # one projection call for both dual blocks
        if frozen_q:
            return project_simplex(P_ + sp * gp), Q_
        both = project_simplex(np.concatenate([P_ + sp * gp, Q_ + sq * gq]))
        return both[:N], both[N:]

    obj, kkt = [], []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        V = X @ beta
        for _ in range(dro.inner_steps):
            gq_in = None if frozen_q else -V - gamma * kappa * flip
            P, Q = ascend(P, Q, sig_in_p, sig_in, V - grad_lambda_clamped(pert, P), gq_in)
        gb, gg, gp, gq = grads(beta, gamma, P, Q)
        beta_t, gamma_t = project_cone(beta - tau * gb, gamma - tau * gg, c)
        P_t, Q_t = ascend(P, Q, sigma, sigma, gp, gq)
        r2 = (np.sum((beta - beta_t) ** 2) + (gamma - gamma_t) ** 2) / tau ** 2
        r2 += (np.sum((P - P_t) ** 2) + np.sum((Q - Q_t) ** 2)) / (N * sigma ** 2)
        obj.append(dro_objective(pert, data, beta, gamma, dro, cfg))
        kkt.append(math.sqrt(r2))
        if callback is not None:
            callback(it, beta)
        if kkt[-1] <= cfg.tol_kkt:
            converged = True
            break
        gb, gg, gp, gq = grads(beta_t, gamma_t, P_t, Q_t)
        beta, gamma = project_cone(beta - tau * gb, gamma - tau * gg, c)
        P, Q = ascend(P, Q, sigma, sigma, gp, gq)
    return EstimateResult(beta, np.array(obj), np.array(kkt), it, converged, gamma=float(gamma),
                          diagnostics={"tau": tau, "sigma": sigma, "oscillation": _oscillation(obj)})
