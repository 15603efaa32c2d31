"""Simplex projection, normalisation root-finding and the non-separable primal.

These are the inner solvers shared by every estimator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .perturbation import ChoiceKernel, Family, Perturbation

_MAX_BRACKET_DOUBLINGS = 200


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration limit before its tolerance."""


class RootMethod(str, enum.Enum):
    BISECTION = "bisection"
    NEWTON = "newton"
    GOLDEN_SECTION = "golden_section"


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, iteration cap and optional step sizes.

    ``tau`` and ``sigma`` are the primal and dual step sizes of the saddle
    point solvers; ``None`` lets the solver pick ``0.9 / L``.
    """

    tol_root: float = 1e-12
    tol_kkt: float = 1e-9
    max_iter: int = 10_000
    tau: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if not (self.tol_root > 0 and self.tol_kkt > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        for name in ("tau", "sigma"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class RootSolveReport:
    lam: float
    iterations: int
    residual: float
    method: RootMethod
    trace: tuple[float, ...] = ()


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (last axis).

    Sort-and-threshold: with ``u`` sorted decreasingly, the support size is
    the largest ``r`` with ``u_r > (sum_{j<=r} u_j - 1) / r``.
    """
    v = np.asarray(v, dtype=float)
    K = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ranks = np.arange(1, K + 1, dtype=float)
    # the support condition holds on a prefix of the sorted vector
    rho = np.count_nonzero(u - css / ranks > 0, axis=-1) - 1
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


def simplex_threshold(v) -> np.ndarray:
    """Threshold ``theta`` with ``project_simplex(v) = max(v - theta, 0)``."""
    v = np.asarray(v, dtype=float)
    K = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ranks = np.arange(1, K + 1, dtype=float)
    rho = np.count_nonzero(u - css / ranks > 0, axis=-1) - 1
    return np.take_along_axis(css, rho[..., None], axis=-1)[..., 0] / (rho + 1.0)


def _initial_bracket(kernel: ChoiceKernel, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    K = v.shape[-1]
    half = 10.0 * kernel.scale * math.tan(math.pi * (0.5 - 1.0 / (2 * K)))
    if half <= 0:
        half = 10.0 * kernel.scale
    return v.min(axis=-1) - half, v.max(axis=-1) + half


def solve_normalization(kernel: ChoiceKernel, v, cfg: SolverConfig | None = None,
                        method: RootMethod | str = RootMethod.BISECTION) -> RootSolveReport:
    """Solve ``sum_j psi(v_j - lam) = 1`` for the normalisation constant.

    ``G(lam) = sum_j psi(v_j - lam) - 1`` is decreasing, so bisection on an
    expanding bracket always converges.  Newton steps are taken only while
    they stay inside the current bracket.  Golden-section search minimises
    ``|G|`` and exists for cross-checking.

    Returns
    -------
    RootSolveReport
        ``trace`` holds the bracket residual ``max(|G(lo)|, |G(hi)|)`` after
        each iteration; it never increases.
    """
    cfg = cfg or SolverConfig()
    method = RootMethod(method)
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("utility vector must be non-empty and finite")

    # Work relative to max(v): lam shifts one-for-one with v, and small
    # coordinates keep the full float resolution of lam.
    shift = float(v.max())
    v = v - shift

    def G(lam):
        return float(np.sum(kernel.psi(v - lam)) - 1.0)

    lo, hi = (float(b) for b in _initial_bracket(kernel, v))
    g_lo, g_hi = G(lo), G(hi)
    width = hi - lo
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if g_lo >= 0:
            break
        lo -= width
        width *= 2
        g_lo = G(lo)
    else:
        raise ConvergenceError(f"bracket expansion failed below lam={lo}")
    width = hi - lo
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if g_hi <= 0:
            break
        hi += width
        width *= 2
        g_hi = G(hi)
    else:
        raise ConvergenceError(f"bracket expansion failed above lam={hi}")

    tol = cfg.tol_root
    trace: list[float] = []
    if method is RootMethod.GOLDEN_SECTION:
        rep = _golden(G, lo, hi, cfg, trace)
        return replace(rep, lam=rep.lam + shift)

    lam = 0.5 * (lo + hi)
    for it in range(1, cfg.max_iter + 1):
        if method is RootMethod.NEWTON and it > 1:
            slope = -float(np.sum(kernel.dpsi(v - lam)))
            cand = lam - g / slope if slope < 0 else math.nan
            lam = cand if lo < cand < hi else 0.5 * (lo + hi)
        else:
            lam = 0.5 * (lo + hi)
        g = G(lam)
        if g > 0:
            lo, g_lo = lam, g
        else:
            hi, g_hi = lam, g
        trace.append(max(abs(g_lo), abs(g_hi)))
        if abs(g) <= tol:
            return RootSolveReport(lam + shift, it, abs(g), method, tuple(trace))
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(lam)):
            # Bracket exhausted at float precision.
            best = lo if abs(g_lo) <= abs(g_hi) else hi
            res = min(abs(g_lo), abs(g_hi))
            if res <= tol:
                return RootSolveReport(best + shift, it, res, method, tuple(trace))
            raise ConvergenceError(
                f"normalisation stalled in bracket [{lo!r}, {hi!r}] with residual {res:.3e}")
    raise ConvergenceError(
        f"normalisation exceeded {cfg.max_iter} iterations; bracket [{lo!r}, {hi!r}], "
        f"last residual {abs(g):.3e}")


def _golden(G, lo, hi, cfg, trace) -> RootSolveReport:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = abs(G(c)), abs(G(d))
    for it in range(1, cfg.max_iter + 1):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = abs(G(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = abs(G(d))
        best, res = (c, fc) if fc < fd else (d, fd)
        trace.append(res)
        if res <= cfg.tol_root:
            return RootSolveReport(best, it, res, RootMethod.GOLDEN_SECTION, tuple(trace))
        if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(best)):
            break
    raise ConvergenceError(f"golden-section search stalled on [{a!r}, {b!r}] with residual {res:.3e}")


def normalize_batch(kernel: ChoiceKernel, V: np.ndarray, tol: float = 1e-12,
                    max_iter: int = 500) -> np.ndarray:
    """Vectorised safeguarded Newton/bisection for the normalisation constant.

    Solves one root per row of ``V`` (last axis = alternatives).
    """
    V = np.asarray(V, dtype=float)
    shift = V.max(axis=-1, keepdims=True)
    V = V - shift
    lo, hi = _initial_bracket(kernel, V)
    shape = V.shape[:-1]
    lo = np.array(lo, dtype=float).ravel()
    hi = np.array(hi, dtype=float).ravel()
    Vf = V.reshape(-1, V.shape[-1])
    lo, hi = lo.ravel(), hi.ravel()

    def G(lam, rows):
        return kernel.psi(Vf[rows] - lam[:, None]).sum(axis=-1) - 1.0

    rows_all = np.arange(Vf.shape[0])
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        bad = G(lo, rows_all) < 0
        if not bad.any():
            break
        lo = np.where(bad, lo - (hi - lo), lo)
    else:
        raise ConvergenceError("bracket expansion failed")
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        bad = G(hi, rows_all) > 0
        if not bad.any():
            break
        hi = np.where(bad, hi + (hi - lo), hi)
    else:
        raise ConvergenceError("bracket expansion failed")

    lam = 0.5 * (lo + hi)
    todo = rows_all
    g_last = np.full(lam.shape, np.inf)
    for _ in range(max_iter):
        r = todo
        z = Vf[r] - lam[r, None]
        g = kernel.psi(z).sum(axis=-1) - 1.0
        g_last[r] = g
        done = (np.abs(g) <= tol) | (hi[r] - lo[r] <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(lam[r])))
        pos = g > 0
        lo[r] = np.where(pos, lam[r], lo[r])
        hi[r] = np.where(pos, hi[r], lam[r])
        slope = -kernel.dpsi(z).sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = lam[r] - g / slope
        inside = (slope < 0) & (cand > lo[r]) & (cand < hi[r])
        new = np.where(inside, cand, 0.5 * (lo[r] + hi[r]))
        lam[r] = np.where(done, lam[r], new)
        todo = r[~done]
        if todo.size == 0:
            lam = lam.reshape(shape) + shift[..., 0]
            return lam if shape else float(lam)
    raise ConvergenceError(
        f"normalisation exceeded {max_iter} iterations; worst residual {np.abs(g_last[todo]).max():.3e}, "
        f"bracket widths up to {(hi[todo] - lo[todo]).max():.3e}")


def solve_primal_nonseparable(pert: Perturbation, v, cfg: SolverConfig | None = None,
                              p0: np.ndarray | None = None) -> np.ndarray:
    """Maximise ``p @ v - (mu / 2) p' Q p`` over the simplex.

    Accelerated projected gradient with step ``1 / (mu * lambda_max(Q))`` and
    gradient-based momentum restart.  Stops once the projected-gradient
    residual ``|p - P(p + eta (v - mu Q p))| / eta`` is at most ``tol_kkt``.
    Works row-wise on ``(..., K)`` input; ``p0`` warm-starts the iterates.
    """
    if pert.family is not Family.NONSEPARABLE_QUADRATIC:
        raise ValueError("solve_primal_nonseparable needs the non-separable quadratic family")
    cfg = cfg or SolverConfig()
    v = np.asarray(v, dtype=float)
    K = v.shape[-1]
    pert.check_dimension(K)
    shape = v.shape
    Vf = v.reshape(-1, K)
    MQ = pert.mu * pert.Q
    eta = 1.0 / (pert.mu * pert.q_lambda_max)

    if p0 is None:
        p = np.full_like(Vf, 1.0 / K)
    else:
        p = project_simplex(np.asarray(p0, dtype=float).reshape(-1, K))
    y = p.copy()
    t = np.ones(Vf.shape[0])
    todo = np.arange(Vf.shape[0])
    res = np.full(Vf.shape[0], np.inf)
    for _ in range(cfg.max_iter):
        r = todo
        pr = p[r]
        # residual at the current iterate
        step = project_simplex(pr + eta * (Vf[r] - pr @ MQ))
        res_r = np.linalg.norm(pr - step, axis=-1) / eta
        res[r] = res_r
        done = res_r <= cfg.tol_kkt
        r_act = r[~done]
        if r_act.size == 0:
            break
        ya = y[r_act]
        p_new = project_simplex(ya + eta * (Vf[r_act] - ya @ MQ))
        p_old = p[r_act]
        restart = np.einsum("ij,ij->i", ya - p_new, p_new - p_old) > 0
        ta = np.where(restart, 1.0, t[r_act])
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * ta * ta))
        mom = np.where(restart, 0.0, (ta - 1.0) / t_new)
        y[r_act] = p_new + mom[:, None] * (p_new - p_old)
        p[r_act] = p_new
        t[r_act] = t_new
        todo = r_act
    else:
        raise ConvergenceError(
            f"non-separable primal exceeded {cfg.max_iter} iterations; worst KKT residual {res[todo].max():.3e}")
    return p.reshape(shape)
