"""Accelerated first-order solvers for the smooth and l2-penalised risks.

Both solvers work on a stack of ``R`` independent problems at once
(``X`` of shape ``(R, N, K, d)``) so Monte Carlo replications share numpy
calls.  Each problem keeps its own step size, momentum and stopping test,
and finished problems are frozen, so a stacked run returns what ``R``
separate runs would.
"""

from __future__ import annotations

import numpy as np

from ..losses import ChoiceDataset
from ..perturbation import Family, Perturbation
from ..pum import choice_probabilities, surplus
from ..simplex import SolverConfig
from .result import EstimateResult


def risk_grad_stack(pert: Perturbation, B: np.ndarray, X: np.ndarray, y: np.ndarray,
                    cfg: SolverConfig | None = None, p0: np.ndarray | None = None):
    """Risk, gradient and probabilities for stacked problems.

    Parameters
    ----------
    B : (R, d)
    X : (R, N, K, d)
    y : (R, N) int

    Returns
    -------
    J : (R,)
    G : (R, d)
    P : (R, N, K)
    """
    V = np.einsum("rnkd,rd->rnk", X, B)
    P = choice_probabilities(pert, V, cfg, p0=p0)
    chosen = np.take_along_axis(V, y[..., None], axis=-1)[..., 0]
    J = np.mean(surplus(pert, V, cfg, p=P) - chosen, axis=-1)
    Rsd = P.copy()
    np.put_along_axis(Rsd, y[..., None], np.take_along_axis(Rsd, y[..., None], axis=-1) - 1.0, axis=-1)
    G = np.einsum("rnk,rnkd->rd", Rsd, X) / X.shape[1]
    return J, G, P


def smoothness_stack(pert: Perturbation, X: np.ndarray) -> np.ndarray:
    """Lipschitz constant of the risk gradient for each stacked problem.

    The surplus Hessian annihilates the all-ones vector, so features are
    centred across alternatives before taking the largest eigenvalue of the
    averaged Gram matrix.
    """
    Xc = X - X.mean(axis=2, keepdims=True)
    M = np.einsum("rnkd,rnke->rde", Xc, Xc) / X.shape[1]
    lam = np.linalg.eigvalsh(M)[:, -1]
    return pert.surplus_curvature * np.maximum(lam, 1e-12)


def _stack(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, ChoiceDataset):
        return data.X[None], data.y[None]
    X, y = data
    return np.asarray(X, dtype=float), np.asarray(y)


class _Traces:
    """Per-problem trace buffers that only grow while a problem is active."""

    def __init__(self, R: int, record: bool):
        self.record = record
        self.obj = [[] for _ in range(R)] if record else None
        self.kkt = [[] for _ in range(R)] if record else None
        self.last_obj = np.full(R, np.nan)
        self.last_kkt = np.full(R, np.nan)

    def push(self, idx, obj, kkt):
        self.last_obj[idx] = obj
        self.last_kkt[idx] = kkt
        if self.record:
            for i, o, k in zip(idx, obj, kkt):
                self.obj[i].append(float(o))
                self.kkt[i].append(float(k))

    def get(self, r):
        if self.record:
            return np.array(self.obj[r]), np.array(self.kkt[r])
        return np.array([self.last_obj[r]]), np.array([self.last_kkt[r]])


def _block_shrink(Z: np.ndarray, thresh: np.ndarray) -> np.ndarray:
    """Prox of ``thresh * ||.||_2`` applied row-wise."""
    norm = np.linalg.norm(Z, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0, np.maximum(0.0, 1.0 - thresh[:, None] / norm), 0.0)
    return Z * scale


def accelerated_stack(pert: Perturbation, X: np.ndarray, y: np.ndarray, cfg: SolverConfig | None = None,
                      lam: np.ndarray | None = None, beta0: np.ndarray | None = None,
                      record_traces: bool = True, callback=None) -> list[EstimateResult]:
    """Accelerated (proximal) gradient on stacked problems.

    Minimises ``J(beta) + lam * ||beta||_2`` with step ``1 / L``.  With
    ``lam`` absent this is Nesterov's method on the smooth risk and the
    stopping test is ``||grad J|| <= tol_kkt``; otherwise the test is the
    prox-gradient residual ``||beta - prox(beta - grad J / L)|| * L``.
    Momentum restarts whenever the objective increases; the rejected step is
    replaced by a plain (prox-)gradient step from the previous iterate.
    ``callback(iteration, beta)`` receives the full ``(R, d)`` stack after
    the start point (iteration 0) and after every iteration.
    """
    cfg = cfg or SolverConfig()
    R, N, K, d = X.shape
    L = smoothness_stack(pert, X)
    eta = 1.0 / L
    has_pen = lam is not None
    lam = np.zeros(R) if lam is None else np.broadcast_to(np.asarray(lam, dtype=float), (R,)).copy()
    if np.any(lam < 0):
        raise ValueError("lambda_reg must be non-negative")
    nonsep = pert.family is Family.NONSEPARABLE_QUADRATIC

    beta = np.zeros((R, d)) if beta0 is None else np.array(beta0, dtype=float).reshape(R, d)
    J, G, P = risk_grad_stack(pert, beta, X, y, cfg)
    P_last = P if nonsep else None
    F = J + lam * np.linalg.norm(beta, axis=1)

    def residual(b, g, idx):
        if not has_pen:
            return np.linalg.norm(g, axis=1)
        step = _block_shrink(b - eta[idx, None] * g, eta[idx] * lam[idx])
        return np.linalg.norm(b - step, axis=1) / eta[idx]

    z = beta.copy()
    t = np.ones(R)
    traces = _Traces(R, record_traces)
    iters = np.zeros(R, dtype=int)
    converged = np.zeros(R, dtype=bool)
    res = residual(beta, G, np.arange(R))
    traces.push(np.arange(R), F, res)
    active = np.flatnonzero(res > cfg.tol_kkt)
    converged[res <= cfg.tol_kkt] = True
    if callback is not None:
        callback(0, beta)

    for it in range(1, cfg.max_iter + 1):
        if active.size == 0:
            break
        a = active
        p0 = P_last[a] if nonsep else None
        _, Gz, _ = risk_grad_stack(pert, z[a], X[a], y[a], cfg, p0=p0)
        bn = _block_shrink(z[a] - eta[a, None] * Gz, eta[a] * lam[a])
        Jn, Gn, Pn = risk_grad_stack(pert, bn, X[a], y[a], cfg, p0=p0)
        Fn = Jn + lam[a] * np.linalg.norm(bn, axis=1)
        worse = Fn > F[a]
        if worse.any():
            w = a[worse]
            bw = _block_shrink(beta[w] - eta[w, None] * G[w], eta[w] * lam[w])
            Jw, Gw, Pw = risk_grad_stack(pert, bw, X[w], y[w], cfg, p0=None if not nonsep else P_last[w])
            bn[worse], Jn[worse], Gn[worse], Pn[worse] = bw, Jw, Gw, Pw
            Fn[worse] = Jw + lam[w] * np.linalg.norm(bw, axis=1)
        t_cur = np.where(worse, 1.0, t[a])
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_cur ** 2))
        mom = np.where(worse, 0.0, (t_cur - 1.0) / t_new)
        z[a] = bn + mom[:, None] * (bn - beta[a])
        t[a] = np.where(worse, 1.0, t_new)
        beta[a], F[a], G[a] = bn, Fn, Gn
        if nonsep:
            P_last[a] = Pn
        iters[a] += 1
        res = residual(bn, Gn, a)
        traces.push(a, Fn, res)
        done = res <= cfg.tol_kkt
        converged[a[done]] = True
        active = a[~done]
        if callback is not None:
            callback(it, beta)

    out = []
    for r in range(R):
        obj, kkt = traces.get(r)
        out.append(EstimateResult(beta[r].copy(), obj, kkt, int(iters[r]), bool(converged[r]),
                                  diagnostics={"step": float(eta[r]),
                                               "lambda_reg": float(lam[r]) if has_pen else 0.0}))
    return out


def estimate_fy_nag(pert: Perturbation, data: ChoiceDataset, cfg: SolverConfig | None = None,
                    record_traces: bool = True, callback=None) -> EstimateResult:
    """Unregularised Fenchel-Young estimator by accelerated gradient.

    Starts from ``beta = 0``.  On perfectly separable data the minimiser does
    not exist; the run then stops at ``max_iter`` with ``converged=False``.
    """
    X, y = _stack(data)
    cb = None if callback is None else (lambda it, B: callback(it, B[0]))
    return accelerated_stack(pert, X, y, cfg, record_traces=record_traces, callback=cb)[0]


def estimate_l2_limit(pert: Perturbation, data: ChoiceDataset, lambda_reg: float,
                      cfg: SolverConfig | None = None, record_traces: bool = True,
                      callback=None) -> EstimateResult:
    """Minimise ``J(beta) + lambda_reg * ||beta||_2`` by proximal FISTA."""
    if not lambda_reg >= 0:
        raise ValueError("lambda_reg must be non-negative")
    X, y = _stack(data)
    cb = None if callback is None else (lambda it, B: callback(it, B[0]))
    return accelerated_stack(pert, X, y, cfg, lam=np.array([lambda_reg]), record_traces=record_traces,
                             callback=cb)[0]
