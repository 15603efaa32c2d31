"""Config-file loading and the small parsers shared by the experiment runners."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ..data import rng_for
from ..perturbation import Family, Perturbation
from ..simplex import SolverConfig


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def load_config(path) -> dict:
    """Read a JSON or YAML mapping; the format follows the file suffix."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a mapping at the top level")
    return cfg


def require(cfg: Mapping, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return cfg[key]


def derive_seed(root: int, *key: int) -> int:
    """Unsigned 64-bit seed for stream ``key`` under ``root``.

    Built from ``SeedSequence(root, spawn_key=key)``, so seeds depend only
    on their own key path.
    """
    parts = (int(root),) + tuple(int(k) for k in key)
    if min(parts) < 0:
        raise ConfigError(f"seed and key parts must be non-negative, got {parts}")
    words = np.random.SeedSequence(parts[0], spawn_key=parts[1:]).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def nonseparable_matrix(K: int, seed: int) -> np.ndarray:
    """``A'A + I`` with standard normal ``A`` drawn from stream ``seed``."""
    A = rng_for(seed).standard_normal((K, K))
    return A.T @ A + np.eye(K)


def parse_family(record, K: int | None = None) -> Perturbation:
    """Perturbation from a name or a mapping.

    A mapping takes ``name`` and ``mu``; the non-separable family also
    takes ``Q`` (explicit matrix) or ``q_seed`` (random ``A'A + I``, which
    needs ``K``).
    """
    if isinstance(record, str):
        record = {"name": record}
    if not isinstance(record, Mapping):
        raise ConfigError(f"family must be a name or mapping, got {record!r}")
    try:
        fam = Family.parse(require(record, "name", "family"))
        mu = float(record.get("mu", 1.0))
        if fam is Family.NONSEPARABLE_QUADRATIC:
            if "Q" in record:
                Q = np.asarray(record["Q"], dtype=float)
            else:
                if K is None:
                    raise ConfigError("non-separable family with q_seed needs K")
                Q = nonseparable_matrix(K, int(record.get("q_seed", 0)))
            return Perturbation.nonseparable(Q, mu)
        return Perturbation(fam, mu)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad family {record!r}: {exc}") from exc


def parse_solver(record: Mapping | None, **defaults) -> SolverConfig:
    fields = dict(defaults)
    fields.update(record or {})
    try:
        return SolverConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver settings {fields!r}: {exc}") from exc


def as_int_list(value, name: str) -> list[int]:
    try:
        out = [int(v) for v in (value if isinstance(value, (list, tuple)) else [value])]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be integers: {exc}") from exc
    if not out:
        raise ConfigError(f"{name} must not be empty")
    return out


def echo(cfg: Any) -> Any:
    """JSON-safe deep copy of a config (arrays become lists)."""
    if isinstance(cfg, Mapping):
        return {str(k): echo(v) for k, v in cfg.items()}
    if isinstance(cfg, (list, tuple)):
        return [echo(v) for v in cfg]
    if isinstance(cfg, np.ndarray):
        return cfg.tolist()
    if isinstance(cfg, (np.floating, np.integer)):
        return cfg.item()
    return cfg
