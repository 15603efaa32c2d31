"""Wasserstein-robust objective pieces and the brute-force exact oracle.

Features are compared in the flattened ``K * d`` space with the norm
``||u||_S = sqrt(u' S^-1 u)``; label flips cost ``kappa`` each.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..losses import ChoiceDataset, Observation, sample_losses
from ..perturbation import Perturbation
from ..pum import surplus
from ..simplex import SolverConfig

#: ``kappa`` value meaning label flips are never allowed.
KAPPA_INF = math.inf


class LipschitzMode(str, enum.Enum):
    EUCLID = "euclid"
    MAHALANOBIS = "mahalanobis"


@dataclass(frozen=True, eq=False)
class DroConfig:
    """Ambiguity-set and two-time-scale settings.

    Parameters
    ----------
    epsilon : float
        Transport budget.
    kappa : float
        Cost of flipping one label; ``KAPPA_INF`` forbids flips.
    metric_S : ndarray, optional
        Positive-definite ``Kd x Kd`` matrix; identity when omitted.
    c_s_mode : LipschitzMode
    inner_steps : int
        Dual ascent steps per outer iteration.
    inner_step_scale : float
        Dual step multiplier for those inner steps.
    """

    epsilon: float
    kappa: float = KAPPA_INF
    metric_S: np.ndarray | None = field(default=None, repr=False)
    c_s_mode: LipschitzMode = LipschitzMode.EUCLID
    inner_steps: int = 5
    inner_step_scale: float = 10.0

    def __post_init__(self):
        if not (self.epsilon >= 0 and self.kappa >= 0):
            raise ValueError("epsilon and kappa must be non-negative")
        object.__setattr__(self, "c_s_mode", LipschitzMode(self.c_s_mode))
        if self.inner_steps < 1 or not self.inner_step_scale > 1:
            raise ValueError("need inner_steps >= 1 and inner_step_scale > 1")
        if self.metric_S is not None:
            S = np.array(self.metric_S, dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1] or not np.allclose(S, S.T):
                raise ValueError("metric_S must be a symmetric square matrix")
            if np.linalg.eigvalsh(S)[0] <= 0:
                raise ValueError("metric_S must be positive definite")
            S.setflags(write=False)
            object.__setattr__(self, "metric_S", S)

    @property
    def flips_forbidden(self) -> bool:
        return math.isinf(self.kappa)

    @property
    def c_s(self) -> float:
        if self.c_s_mode is LipschitzMode.EUCLID or self.metric_S is None:
            return math.sqrt(2.0)
        return math.sqrt(2.0 * float(np.linalg.eigvalsh(self.metric_S)[-1]))

    def metric_inverse(self, D: int) -> np.ndarray:
        if self.metric_S is None:
            return np.eye(D)
        if self.metric_S.shape[0] != D:
            raise ValueError(f"metric_S is {self.metric_S.shape[0]}-dimensional, features have {D}")
        return np.linalg.inv(self.metric_S)


def lipschitz_constant(dro: DroConfig, beta) -> float:
    """``c_S * ||beta||_2``, a Lipschitz bound of the loss in the features."""
    return dro.c_s * float(np.linalg.norm(beta))


def flip_margins(beta, data: ChoiceDataset) -> np.ndarray:
    """``max_{i != y_n} (V_{n y_n} - V_{ni})`` per observation.

    The loss of a flipped label exceeds the nominal loss by exactly
    ``V_y - V_i``, so an adversarial flip pays off once this margin tops the
    flip price.
    """
    V = data.X @ np.asarray(beta, dtype=float)
    n = np.arange(data.N)
    chosen = V[n, data.y]
    other = V.copy()
    other[n, data.y] = np.inf
    return chosen - other.min(axis=1) if data.K > 1 else np.full(data.N, -np.inf)


def _price(gamma: float, kappa: float) -> float:
    if math.isinf(kappa):
        return math.inf
    return gamma * kappa


def robustified_loss(pert: Perturbation, beta, gamma: float, kappa: float, obs: Observation,
                     cfg: SolverConfig | None = None) -> float:
    """``max{l(y), max_{i != y} l(e_i) - gamma * kappa}`` for one observation."""
    if gamma < 0 or kappa < 0:
        raise ValueError("gamma and kappa must be non-negative")
    v = obs.x @ np.asarray(beta, dtype=float)
    omega = surplus(pert, v, cfg)
    nominal = omega - v[obs.y]
    price = _price(gamma, kappa)
    if math.isinf(price) or v.size == 1:
        return float(nominal)
    others = np.delete(v, obs.y)
    return float(max(nominal, omega - others.min() - price))


def robustified_losses(pert: Perturbation, beta, gamma: float, kappa: float, data: ChoiceDataset,
                       cfg: SolverConfig | None = None) -> np.ndarray:
    base = sample_losses(pert, beta, data, cfg)
    price = _price(gamma, kappa)
    if math.isinf(price):
        return base
    return base + np.maximum(0.0, flip_margins(beta, data) - price)


def dro_objective(pert: Perturbation, data: ChoiceDataset, beta, gamma: float, dro: DroConfig,
                  cfg: SolverConfig | None = None) -> float:
    """Safe-approximation objective ``gamma * eps + mean robustified loss``.

    Returns ``inf`` when ``gamma`` violates the cone ``gamma >= c_S ||beta||``.
    """
    if gamma < lipschitz_constant(dro, beta) * (1 - 1e-12) - 1e-15:
        return math.inf
    return float(gamma * dro.epsilon + np.mean(robustified_losses(pert, beta, gamma, dro.kappa, data, cfg)))


def optimal_gamma(pert: Perturbation, data: ChoiceDataset, beta, dro: DroConfig) -> float:
    """Exact minimiser over feasible ``gamma`` for fixed ``beta``.

    The objective is convex piecewise linear in ``gamma`` with breakpoints at
    ``margin_n / kappa``, so checking the cone boundary and every feasible
    breakpoint is exact.
    """
    lo = lipschitz_constant(dro, beta)
    if dro.flips_forbidden or dro.kappa == 0:
        return lo
    m = flip_margins(beta, data)
    cands = np.concatenate([[lo], m[m / dro.kappa > lo] / dro.kappa])
    vals = cands * dro.epsilon + np.maximum(0.0, m[None, :] - cands[:, None] * dro.kappa).mean(axis=1)
    return float(cands[np.argmin(vals)])


@dataclass(frozen=True)
class FeatureGrid:
    """Uniform grid over the observed-feature bounding box.

    ``margin`` widens the box by that many metric units along each axis.
    """

    points_per_axis: int = 101
    margin: float = 3.0
    max_points: int = 1_000_000


def exact_dro_oracle(pert: Perturbation, data: ChoiceDataset, beta, gamma: float, dro: DroConfig,
                     grid: FeatureGrid | None = None, cfg: SolverConfig | None = None) -> float:
    """Brute-force value of the exact worst-case objective at ``(beta, gamma)``.

    ``s_n`` maximises ``l(beta; x, e_i) - gamma ||x - x_n||_S - gamma kappa [i != y_n]``
    over labels and grid points (observed points included) and the result is
    ``gamma * eps + mean(s_n)``.  A finite grid only under-approximates the
    supremum, so this is a lower bound on the exact objective.  With
    ``epsilon == 0`` the ball is the empirical distribution itself and the
    nominal risk is returned.
    """
    grid = grid or FeatureGrid()
    if dro.epsilon == 0:
        # A zero-radius ball holds only the empirical distribution.
        return float(np.mean(sample_losses(pert, beta, data, cfg)))
    N, K, d = data.X.shape
    D = K * d
    total = grid.points_per_axis ** D
    if total > grid.max_points:
        raise ValueError(f"oracle restricted to desk scale: {grid.points_per_axis}^{D} = {total} grid points "
                         f"exceeds {grid.max_points}")
    beta = np.asarray(beta, dtype=float)
    Sinv = dro.metric_inverse(D)
    flat = data.X.reshape(N, D)
    # one metric unit along axis j is 1 / sqrt(Sinv_jj)
    unit = 1.0 / np.sqrt(np.diag(Sinv))
    lo = flat.min(axis=0) - grid.margin * unit
    hi = flat.max(axis=0) + grid.margin * unit
    axes = [np.linspace(lo[j], hi[j], grid.points_per_axis) for j in range(D)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, D)
    pts = np.concatenate([mesh, flat])

    V = pts.reshape(-1, K, d) @ beta
    loss_by_label = surplus(pert, V, cfg)[:, None] - V  # (G, K)
    price = _price(gamma, dro.kappa)
    s = np.empty(N)
    for n in range(N):
        diff = pts - flat[n]
        dist = np.sqrt(np.maximum(np.einsum("gi,ij,gj->g", diff, Sinv, diff), 0.0))
        pen = np.full(K, price)
        pen[data.y[n]] = 0.0
        cand = loss_by_label - pen[None, :] - gamma * dist[:, None]
        s[n] = cand.max()
    return float(gamma * dro.epsilon + s.mean())
