from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class EstimateResult:
    """Estimated coefficients plus solver diagnostics.

    ``objective_trace`` and ``kkt_trace`` hold one entry per iteration.
    ``diagnostics`` carries estimator-specific extras (oscillation level,
    step sizes, flags).
    """

    beta: np.ndarray
    objective_trace: np.ndarray
    kkt_trace: np.ndarray
    iterations: int
    converged: bool
    gamma: float | None = None
    covariance: np.ndarray | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1]) if len(self.objective_trace) else float("nan")

    @property
    def kkt(self) -> float:
        return float(self.kkt_trace[-1]) if len(self.kkt_trace) else float("nan")

    def to_record(self) -> dict[str, Any]:
        """Flat key-value summary; traces are left out (see ``traces``)."""
        rec: dict[str, Any] = {f"beta_{j}": float(b) for j, b in enumerate(self.beta)}
        rec.update(iterations=self.iterations, converged=self.converged, objective=self.objective, kkt=self.kkt)
        if self.gamma is not None:
            rec["gamma"] = float(self.gamma)
        for k, v in self.diagnostics.items():
            if isinstance(v, (int, float, str, bool, np.floating, np.integer)):
                rec[k] = v.item() if hasattr(v, "item") else v
        return rec

    def traces(self) -> dict[str, np.ndarray]:
        return {"objective": np.asarray(self.objective_trace), "kkt": np.asarray(self.kkt_trace)}
