"""Choice datasets, the Fenchel-Young loss and its gradient.

The operational loss is ``Omega(V) - y @ V``; the constant ``Lambda(y)``
is omitted unless ``with_gap=True`` is requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .perturbation import Family, Perturbation, grad_lambda, lambda_value
from .pum import choice_probabilities, surplus
from .simplex import SolverConfig


@dataclass(frozen=True, eq=False)
class Observation:
    """One choice situation: ``x`` is ``K x d``, ``y`` the chosen index."""

    x: np.ndarray
    y: int

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"x must be a K x d matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        y = int(self.y)
        if not 0 <= y < x.shape[0]:
            raise ValueError(f"choice index {y} outside 0..{x.shape[0] - 1}")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True, eq=False)
class ChoiceDataset:
    """``N`` observations stored as dense arrays.

    Attributes
    ----------
    X : ndarray, shape (N, K, d)
    y : ndarray of int, shape (N,)
    ids : ndarray, optional
        Decision-maker identifiers, one per row.
    meta : dict
        Free-form provenance (scaler parameters, drop counts, ...).
    """

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 3:
            raise ValueError(f"X must have shape (N, K, d), got {X.shape}")
        if X.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y must have shape ({X.shape[0]},), got {y.shape}")
        if np.any(y < 0) or np.any(y >= X.shape[1]):
            raise ValueError("choice indices must lie in 0..K-1")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.ids is not None:
            ids = np.asarray(self.ids)
            if ids.shape != (X.shape[0],):
                raise ValueError("ids must have one entry per observation")
            ids = ids.copy()
            ids.setflags(write=False)
            object.__setattr__(self, "ids", ids)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation], ids=None, meta=None) -> "ChoiceDataset":
        if len(observations) == 0:
            raise ValueError("dataset needs at least one observation")
        shapes = {o.x.shape for o in observations}
        if len(shapes) != 1:
            raise ValueError(f"observations have inconsistent shapes {sorted(shapes)}")
        return cls(np.stack([o.x for o in observations]), np.array([o.y for o in observations]),
                   ids, dict(meta or {}))

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[2]

    @property
    def Y(self) -> np.ndarray:
        """One-hot labels, shape (N, K)."""
        out = np.zeros((self.N, self.K))
        out[np.arange(self.N), self.y] = 1.0
        return out

    def __len__(self) -> int:
        return self.N

    def __iter__(self) -> Iterator[Observation]:
        for n in range(self.N):
            yield Observation(self.X[n], int(self.y[n]))

    @property
    def observations(self) -> list[Observation]:
        return list(self)

    def take(self, index) -> "ChoiceDataset":
        index = np.asarray(index)
        return ChoiceDataset(self.X[index], self.y[index],
                             None if self.ids is None else self.ids[index], dict(self.meta))

    def with_meta(self, **extra: Any) -> "ChoiceDataset":
        return ChoiceDataset(self.X, self.y, self.ids, {**self.meta, **extra})


def _label_vector(y, K: int) -> np.ndarray:
    y_arr = np.asarray(y)
    if y_arr.ndim == 0:
        out = np.zeros(K)
        out[int(y_arr)] = 1.0
        return out
    if y_arr.shape != (K,):
        raise ValueError(f"soft label must have {K} entries")
    return y_arr.astype(float)


def fy_loss(pert: Perturbation, beta, obs: Observation, y=None, with_gap: bool = False,
            cfg: SolverConfig | None = None) -> float:
    """Fenchel-Young loss ``Omega(x beta) - y @ (x beta)`` of one observation.

    ``y`` overrides ``obs.y`` and may be a soft label on the simplex.  With
    ``with_gap=True`` the constant ``Lambda(y)`` is added so the result is
    the non-negative duality gap; that is infinite for the Cauchy family at
    a vertex and is refused.
    """
    v = obs.x @ np.asarray(beta, dtype=float)
    target = _label_vector(obs.y if y is None else y, v.shape[0])
    loss = surplus(pert, v, cfg) - float(target @ v)
    if with_gap:
        if pert.family is Family.CAUCHY and np.any((target <= 0) | (target >= 1)):
            raise ValueError("gap form is infinite for Cauchy at boundary labels")
        loss += lambda_value(pert, target)
    return float(loss)


def bregman_divergence(pert: Perturbation, y, p) -> float:
    """``Lambda(y) - Lambda(p) - (y - p) @ grad Lambda(p)``."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    return float(lambda_value(pert, y) - lambda_value(pert, p) - (y - p) @ grad_lambda(pert, p))


def sample_losses(pert: Perturbation, beta, data: ChoiceDataset, cfg: SolverConfig | None = None,
                  P: np.ndarray | None = None) -> np.ndarray:
    """Per-observation losses, shape (N,)."""
    V = data.X @ np.asarray(beta, dtype=float)
    return surplus(pert, V, cfg, p=P) - V[np.arange(data.N), data.y]


def empirical_risk(pert: Perturbation, beta, data: ChoiceDataset, cfg: SolverConfig | None = None) -> float:
    return float(np.mean(sample_losses(pert, beta, data, cfg)))


def fy_gradient(pert: Perturbation, beta, data: ChoiceDataset, cfg: SolverConfig | None = None) -> np.ndarray:
    """Mean of predicted minus observed features, ``(1/N) sum X_n'(p_n - y_n)``."""
    return risk_and_gradient(pert, beta, data, cfg)[1]


def risk_and_gradient(pert: Perturbation, beta, data: ChoiceDataset, cfg: SolverConfig | None = None,
                      p0: np.ndarray | None = None) -> tuple[float, np.ndarray, np.ndarray]:
    """Empirical risk, its gradient and the probabilities in one pass.

    Returns
    -------
    risk : float
    grad : ndarray, shape (d,)
    P : ndarray, shape (N, K)
    """
    beta = np.asarray(beta, dtype=float)
    V = data.X @ beta
    P = choice_probabilities(pert, V, cfg, p0=p0)
    risk = float(np.mean(surplus(pert, V, cfg, p=P) - V[np.arange(data.N), data.y]))
    R = P.copy()
    R[np.arange(data.N), data.y] -= 1.0
    grad = np.einsum("nk,nkd->d", R, data.X) / data.N
    return risk, grad, P


def per_sample_gradients(pert: Perturbation, beta, data: ChoiceDataset,
                         cfg: SolverConfig | None = None) -> np.ndarray:
    """Score contributions ``X_n'(p_n - y_n)``, shape (N, d)."""
    V = data.X @ np.asarray(beta, dtype=float)
    R = choice_probabilities(pert, V, cfg)
    R[np.arange(data.N), data.y] -= 1.0
    return np.einsum("nk,nkd->nd", R, data.X)
