"""The two limiting robust estimators and their hyperparameter scaling laws."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import lsq_linear

from ..losses import ChoiceDataset
from ..perturbation import Perturbation
from ..simplex import SolverConfig
from .result import EstimateResult
from .smooth import _stack, accelerated_stack, risk_grad_stack, smoothness_stack

REG_CONSTANT = 0.13
FLIP_CONSTANT = 2.9


def _difficulty(d: int, N: int, beta_norm: float) -> float:
    if d < 1 or N < 1:
        raise ValueError("d and N must be at least 1")
    if not beta_norm > 0:
        raise ValueError("beta_norm must be positive")
    return math.sqrt(d / N) / beta_norm


def scaling_law_reg(d: int, N: int, beta_norm: float) -> float:
    """Penalty weight ``0.13 * sqrt(d / N) / ||beta||`` for the l2 limit."""
    return REG_CONSTANT * _difficulty(d, N, beta_norm)


def scaling_law_flip(d: int, N: int, beta_norm: float) -> float:
    """Label-flip margin ``2.9 * ||beta|| / sqrt(d / N)`` for the hinge limit."""
    return FLIP_CONSTANT / _difficulty(d, N, beta_norm)


def _margins(V: np.ndarray, y: np.ndarray):
    """Largest chosen-minus-other utility gap and the other index attaining it."""
    other = V.copy()
    np.put_along_axis(other, y[..., None], np.inf, axis=-1)
    i_star = other.argmin(axis=-1)
    chosen = np.take_along_axis(V, y[..., None], axis=-1)[..., 0]
    return chosen - np.take_along_axis(V, i_star[..., None], axis=-1)[..., 0], i_star


def hinge_objective_stack(pert, B, X, y, tau, cfg=None):
    """Objective, one subgradient and the pieces needed for a KKT check."""
    J, G, _ = risk_grad_stack(pert, B, X, y, cfg)
    V = np.einsum("rnkd,rd->rnk", X, B)
    m, i_star = _margins(V, y)
    excess = m - tau[:, None]
    obj = J + np.maximum(0.0, excess).mean(axis=1)
    xy = np.take_along_axis(X, y[..., None, None], axis=2)[:, :, 0]
    xi = np.take_along_axis(X, i_star[..., None, None], axis=2)[:, :, 0]
    A = xy - xi  # (R, N, d): gradient of each margin
    return obj, G, A, excess


def _min_norm_subgradient(G, A, excess, kink_tol):
    """Smallest subgradient norm, letting near-kink terms take any weight in [0, 1]."""
    N = A.shape[0]
    on = excess > kink_tol
    near = np.abs(excess) <= kink_tol
    g = G + A[on].sum(axis=0) / N
    if not near.any():
        return float(np.linalg.norm(g))
    res = lsq_linear(A[near].T / N, -g, bounds=(0.0, 1.0), method="bvls")
    return float(np.linalg.norm(A[near].T @ res.x / N + g))


def hinge_stack(pert: Perturbation, X: np.ndarray, y: np.ndarray, tau, cfg: SolverConfig | None = None,
                beta0: np.ndarray | None = None, kink_tol: float = 1e-6,
                record_traces: bool = True) -> list[EstimateResult]:
    """Subgradient method for the margin (hinge) objective on stacked problems.

    Minimises ``J(beta) + mean_n max(0, max_{i != y_n}(V_{n y_n} - V_{ni}) - tau)``,
    which equals the mean of ``max{l(y_n), max_{i != y_n} l(e_i) - tau}``.
    Steps are ``alpha_k = 1 / (L sqrt(k))``; the returned point is the
    better (by objective) of the last iterate and the average of the second
    half of the iterates.  ``beta0`` defaults to the unregularised
    minimiser, which is already optimal when no margin term is active.
    The KKT trace holds the smallest subgradient norm when terms within
    ``kink_tol`` of their kink may take any weight in ``[0, 1]``; it is
    computed every 50 iterations and at the end.
    """
    cfg = cfg or SolverConfig()
    R, N, K, d = X.shape
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (R,)).copy()
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    if beta0 is None:
        beta0 = np.stack([r.beta for r in accelerated_stack(pert, X, y, cfg, record_traces=False)])
    beta = np.array(beta0, dtype=float).reshape(R, d)
    alpha0 = 1.0 / smoothness_stack(pert, X)
    n_iter = cfg.max_iter
    half = n_iter // 2

    obj_tr = [[] for _ in range(R)]
    kkt_tr = [[] for _ in range(R)]
    avg = np.zeros((R, d))
    n_avg = np.zeros(R)
    iters = np.zeros(R, dtype=int)
    converged = np.zeros(R, dtype=bool)
    active = np.arange(R)

    def check(idx, obj, G, A, excess):
        done = np.zeros(idx.size, dtype=bool)
        for j, r in enumerate(idx):
            k = _min_norm_subgradient(G[j], A[j], excess[j], kink_tol)
            kkt_tr[r].append(k)
            done[j] = k <= cfg.tol_kkt
        return done

    for k in range(1, n_iter + 1):
        if active.size == 0:
            break
        a = active
        obj, G, A, excess = hinge_objective_stack(pert, beta[a], X[a], y[a], tau[a], cfg)
        if record_traces:
            for j, r in enumerate(a):
                obj_tr[r].append(float(obj[j]))
        if k == 1 or k % 50 == 0:
            done = check(a, obj, G, A, excess)
            if done.any():
                converged[a[done]] = True
                keep = ~done
                a, obj, G, A, excess = a[keep], obj[keep], G[keep], A[keep], excess[keep]
                active = a
                if a.size == 0:
                    break
        sub = G + (A * (excess > 0)[..., None]).sum(axis=1) / N
        beta[a] -= (alpha0[a] / math.sqrt(k))[:, None] * sub
        iters[a] += 1
        if k > half:
            avg[a] += beta[a]
            n_avg[a] += 1

    out = []
    unfinished = np.flatnonzero(~converged)
    if unfinished.size:
        u = unfinished
        cand_avg = np.where(n_avg[u, None] > 0, avg[u] / np.maximum(n_avg[u], 1)[:, None], beta[u])
        f_last, *_ = hinge_objective_stack(pert, beta[u], X[u], y[u], tau[u], cfg)
        f_avg, *_ = hinge_objective_stack(pert, cand_avg, X[u], y[u], tau[u], cfg)
        pick = f_avg < f_last
        beta[u[pick]] = cand_avg[pick]
        obj, G, A, excess = hinge_objective_stack(pert, beta[u], X[u], y[u], tau[u], cfg)
        for j, r in enumerate(u):
            obj_tr[r].append(float(obj[j]))
        done = check(u, obj, G, A, excess)
        converged[u[done]] = True
    for r in range(R):
        if not obj_tr[r]:
            f, *_ = hinge_objective_stack(pert, beta[r:r + 1], X[r:r + 1], y[r:r + 1], tau[r:r + 1], cfg)
            obj_tr[r].append(float(f[0]))
        out.append(EstimateResult(beta[r].copy(), np.array(obj_tr[r]), np.array(kkt_tr[r]), int(iters[r]),
                                  bool(converged[r]), diagnostics={"tau": float(tau[r])}))
    return out


def estimate_hinge_limit(pert: Perturbation, data: ChoiceDataset, tau: float, cfg: SolverConfig | None = None,
                         beta0=None, record_traces: bool = True) -> EstimateResult:
    """Margin-regularised Fenchel-Young estimator with threshold ``tau``.

    ``tau = inf`` prices every flip out and returns the unregularised
    minimiser.
    """
    if not tau >= 0:
        raise ValueError("tau must be non-negative")
    X, y = _stack(data)
    if math.isinf(tau):
        res = accelerated_stack(pert, X, y, cfg, record_traces=record_traces)[0]
        res.diagnostics["tau"] = math.inf
        return res
    return hinge_stack(pert, X, y, np.array([tau]), cfg, beta0=beta0, record_traces=record_traces)[0]


def estimate_hinge_bilevel(pert: Perturbation, data: ChoiceDataset, nu: float, cfg: SolverConfig | None = None,
                           tau_max: float | None = None, tol: float = 1e-3) -> EstimateResult:
    """Outer golden-section search over ``tau`` for ``nu * tau + inner(tau)``.

    ``inner(tau)`` is the optimal hinge objective; it is convex and
    non-increasing in ``tau``, so the outer problem is unimodal on
    ``[0, tau_max]``.  ``tau_max`` defaults to the largest margin at the
    unregularised minimiser, beyond which ``inner`` is constant.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    X, y = _stack(data)
    base = accelerated_stack(pert, X, y, cfg, record_traces=False)[0]
    if tau_max is None:
        V = np.einsum("nkd,d->nk", X[0], base.beta)
        tau_max = max(float(_margins(V, y[0])[0].max()), 0.0) + 1.0
    cache: dict[float, EstimateResult] = {}

    def f(t):
        if t not in cache:
            cache[t] = hinge_stack(pert, X, y, np.array([t]), cfg, beta0=base.beta[None], record_traces=False)[0]
        return nu * t + cache[t].objective

    invphi = (math.sqrt(5) - 1) / 2
    a, b = 0.0, tau_max
    c, e = b - invphi * (b - a), a + invphi * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol * max(1.0, tau_max):
        if fc <= fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = f(e)
    best_tau = min(cache, key=f)
    out = cache[best_tau]
    out.diagnostics.update(tau=best_tau, nu=nu, outer_objective=f(best_tau), outer_evaluations=len(cache))
    return out
