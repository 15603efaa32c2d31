"""Synthetic choice data, wide-format CSV input/output and subsampling.

Random numbers come from numpy's ``Philox`` (Philox-4x64-10) bit generator
seeded through ``SeedSequence``; child streams are addressed by integer
spawn keys (see ``rng_for``), so adding a stream never shifts another.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .losses import ChoiceDataset
from .perturbation import Perturbation
from .pum import choice_probabilities
from .simplex import SolverConfig

RNG_ALGORITHM = "numpy.Philox(4x64-10)+SeedSequence"


class DatasetError(ValueError):
    """Raised when a dataset file is missing, malformed or does not match its schema."""


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream ``key`` under root ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


# --------------------------------------------------------------------------- synthetic


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Data-generating process with known coefficients.

    Baseline features ``U(-s, s)`` are drawn once per alternative and
    attribute; each observation adds i.i.d. ``N(0, noise_sd^2)`` noise.
    Choices are sampled from the probabilities of ``family`` at
    ``V = x @ beta_true``.
    """

    N: int
    K: int
    d: int
    beta_true: np.ndarray
    family: Perturbation = field(default_factory=Perturbation.shannon)
    feature_base_scale: float = 1.0
    noise_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.N, self.K, self.d) < 1:
            raise ValueError("N, K and d must be at least 1")
        if self.noise_sd < 0 or self.feature_base_scale < 0:
            raise ValueError("noise_sd and feature_base_scale must be non-negative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        b = np.array(self.beta_true, dtype=float).reshape(-1)
        if b.size != self.d:
            raise ValueError(f"beta_true has {b.size} entries, expected d={self.d}")
        b.setflags(write=False)
        object.__setattr__(self, "beta_true", b)
        self.family.check_dimension(self.K)

    def with_(self, **changes) -> "SyntheticSpec":
        fields = dict(N=self.N, K=self.K, d=self.d, beta_true=self.beta_true, family=self.family,
                      feature_base_scale=self.feature_base_scale, noise_sd=self.noise_sd, seed=self.seed)
        fields.update(changes)
        return SyntheticSpec(**fields)


def _draw(spec: SyntheticSpec, rng: np.random.Generator):
    s = spec.feature_base_scale
    base = rng.uniform(-s, s, size=(spec.K, spec.d))
    X = base + rng.normal(0.0, 1.0, size=(spec.N, spec.K, spec.d)) * spec.noise_sd
    u = rng.uniform(size=spec.N)
    return X, u


def labels_from_uniforms(P: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw: the first index whose cumulative probability exceeds ``u``."""
    cdf = np.cumsum(P, axis=-1)[..., :-1]
    return np.count_nonzero(u[..., None] >= cdf, axis=-1)


def sample_choices(pert: Perturbation, V, rng: np.random.Generator, size: int | None = None,
                   cfg: SolverConfig | None = None) -> np.ndarray:
    """Draw choices from the model probabilities at utilities ``V``.

    With ``size`` given, ``V`` must be one utility vector and ``size``
    independent labels are returned.
    """
    P = choice_probabilities(pert, V, cfg)
    if size is not None:
        P = np.broadcast_to(P, (size, P.shape[-1]))
    return labels_from_uniforms(P, rng.uniform(size=P.shape[:-1]))


def generate_synthetic(spec: SyntheticSpec, cfg: SolverConfig | None = None) -> ChoiceDataset:
    """One dataset drawn from ``spec``; identical seeds give identical data."""
    X, u = _draw(spec, rng_for(spec.seed))
    y = labels_from_uniforms(choice_probabilities(spec.family, X @ spec.beta_true, cfg), u)
    return ChoiceDataset(X, y, meta={"seed": int(spec.seed), "rng": RNG_ALGORITHM})


def generate_synthetic_stack(spec: SyntheticSpec, seeds: Sequence[int],
                             cfg: SolverConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Replications stacked as ``X (R, N, K, d)`` and ``y (R, N)``.

    Replication ``r`` equals ``generate_synthetic(spec.with_(seed=seeds[r]))``;
    only the probability evaluation is batched.
    """
    draws = [_draw(spec, rng_for(s)) for s in seeds]
    X = np.stack([x for x, _ in draws])
    u = np.stack([v for _, v in draws])
    y = labels_from_uniforms(choice_probabilities(spec.family, X @ spec.beta_true, cfg), u)
    return X, y


# --------------------------------------------------------------------------- CSV

Attribute = Union[str, float, int]


@dataclass(frozen=True)
class CsvSchema:
    """Wide-format layout: one row per choice situation.

    Parameters
    ----------
    alternative_columns : mapping
        Alternative name to its attribute list, in a common order.  An
        entry is either a column name or a numeric constant (useful for
        alternative-specific constants and attributes an alternative lacks).
    choice_column : str
    id_column : str, optional
    availability_columns : mapping, optional
        Alternative name to a 0/1 column; rows with any unavailable
        alternative are dropped when filtering is on.
    choice_codes : mapping, optional
        Raw choice cell to alternative name.  By default a cell may hold the
        alternative name or its zero-based position.
    """

    alternative_columns: Mapping[str, Sequence[Attribute]]
    choice_column: str
    id_column: str | None = None
    availability_columns: Mapping[str, str] | None = None
    choice_codes: Mapping[str, str] | None = None

    def __post_init__(self):
        if not self.alternative_columns:
            raise ValueError("schema needs at least one alternative")
        counts = {len(v) for v in self.alternative_columns.values()}
        if len(counts) != 1 or 0 in counts:
            raise ValueError("every alternative must list the same, positive number of attributes")
        alts = set(self.alternative_columns)
        if self.availability_columns and not set(self.availability_columns) <= alts:
            raise ValueError("availability declared for unknown alternatives")
        if self.choice_codes and not set(self.choice_codes.values()) <= alts:
            raise ValueError("choice codes map onto undeclared alternatives")

    @property
    def alternatives(self) -> list[str]:
        return list(self.alternative_columns)

    @property
    def K(self) -> int:
        return len(self.alternative_columns)

    @property
    def d(self) -> int:
        return len(next(iter(self.alternative_columns.values())))

    def code_map(self) -> dict[str, int]:
        alts = self.alternatives
        if self.choice_codes:
            return {str(k): alts.index(v) for k, v in self.choice_codes.items()}
        out = {str(i): i for i in range(len(alts))}
        out.update({a: i for i, a in enumerate(alts)})
        return out

    def required_columns(self) -> list[str]:
        cols = [self.choice_column]
        if self.id_column:
            cols.append(self.id_column)
        for attrs in self.alternative_columns.values():
            cols.extend(a for a in attrs if isinstance(a, str))
        if self.availability_columns:
            cols.extend(self.availability_columns.values())
        return list(dict.fromkeys(cols))

    @classmethod
    def from_config(cls, record: Mapping) -> "CsvSchema":
        return cls(alternative_columns={k: list(v) for k, v in record["alternative_columns"].items()},
                   choice_column=record["choice_column"], id_column=record.get("id_column"),
                   availability_columns=record.get("availability_columns"),
                   choice_codes={str(k): v for k, v in record["choice_codes"].items()}
                   if record.get("choice_codes") else None)


def generic_schema(K: int, d: int, with_ids: bool = False) -> CsvSchema:
    """Schema used by ``write_csv`` when none is given: columns ``alt{k}_x{j}``."""
    return CsvSchema({f"alt{k}": [f"alt{k}_x{j}" for j in range(d)] for k in range(K)}, "choice",
                     id_column="id" if with_ids else None)


def swissmetro_schema() -> CsvSchema:
    """Column mapping for the public Swissmetro survey file.

    Attributes per alternative: constants for train and Swissmetro (car is
    the reference), travel time, cost, headway (car has none) and the GA
    season-ticket indicator, which only affects the public modes.  This is
    a common textbook model, not a unique standard.  Rows with the
    car unavailable, or with choice code 0 (unknown), are dropped.
    """
    return CsvSchema(
        alternative_columns={
            "TRAIN": [1.0, 0.0, "TRAIN_TT", "TRAIN_CO", "TRAIN_HE", "GA"],
            "SM": [0.0, 1.0, "SM_TT", "SM_CO", "SM_HE", "GA"],
            "CAR": [0.0, 0.0, "CAR_TT", "CAR_CO", 0.0, 0.0],
        },
        choice_column="CHOICE",
        id_column="ID",
        availability_columns={"TRAIN": "TRAIN_AV", "SM": "SM_AV", "CAR": "CAR_AV"},
        choice_codes={"1": "TRAIN", "2": "SM", "3": "CAR"},
    )


def _parse_float(cell: str, column: str, row: int) -> float:
    try:
        val = float(cell)
    except (TypeError, ValueError):
        raise DatasetError(f"non-numeric value {cell!r} in column {column!r} at data row {row}") from None
    if not math.isfinite(val):
        raise DatasetError(f"non-finite value {cell!r} in column {column!r} at data row {row}")
    return val


def load_csv(path, schema: CsvSchema, filter_availability: bool = True,
             standardize: bool = False) -> ChoiceDataset:
    """Read a wide-format CSV into a dataset.

    Rows with an unavailable alternative (when filtering) or an undeclared
    choice value are dropped and counted in ``meta["dropped"]``.  With
    ``standardize`` each attribute position is centred and scaled using
    all alternatives' values pooled, so utility differences keep their
    meaning; constant positions are left unscaled.  ``meta["scaler"]``
    holds ``mean`` and ``scale`` for the inverse transform
    ``x = z * scale + mean``.

    Raises
    ------
    DatasetError
        Unreadable file, missing column (named in the message) or a
        non-numeric attribute cell (row index in the message).
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in schema.required_columns():
            if col not in header:
                raise DatasetError(f"missing column {col!r} in {path.name}")
        codes = schema.code_map()
        alts = schema.alternatives
        rows_x, rows_y, rows_id = [], [], []
        dropped = {"unavailable": 0, "invalid_choice": 0}
        for i, rec in enumerate(reader):
            if filter_availability and schema.availability_columns:
                if any(_parse_float(rec[c], c, i) == 0 for c in schema.availability_columns.values()):
                    dropped["unavailable"] += 1
                    continue
            raw = rec[schema.choice_column].strip()
            if raw not in codes:
                try:
                    raw = str(int(float(raw)))
                except ValueError:
                    pass
            if raw not in codes:
                dropped["invalid_choice"] += 1
                continue
            x = [[a if not isinstance(a, str) else _parse_float(rec[a], a, i)
                  for a in schema.alternative_columns[alt]] for alt in alts]
            rows_x.append(x)
            rows_y.append(codes[raw])
            if schema.id_column:
                rows_id.append(rec[schema.id_column])
    if not rows_x:
        raise DatasetError(f"no usable rows in {path.name} (dropped {dropped})")
    X = np.array(rows_x, dtype=float)
    meta = {"source": str(path), "alternatives": alts, "dropped": dropped, "rows_read": len(rows_x) + sum(dropped.values())}
    if standardize:
        flat = X.reshape(-1, X.shape[2])
        mean = flat.mean(axis=0)
        scale = flat.std(axis=0)
        const = scale == 0
        mean[const] = 0.0
        scale[const] = 1.0
        X = (X - mean) / scale
        meta["scaler"] = {"mean": mean.tolist(), "scale": scale.tolist()}
    ids = None
    if schema.id_column:
        ids = np.array(rows_id)
        try:
            ids = ids.astype(np.int64)
        except ValueError:
            pass
    return ChoiceDataset(X, np.array(rows_y), ids, meta)


def write_csv(path, data: ChoiceDataset, schema: CsvSchema | None = None) -> CsvSchema:
    """Write ``data`` in wide format and return the schema that reads it back.

    Floats are written with ``repr``, the shortest string that parses back
    to the same double, so ``load_csv`` inverts this exactly.  A custom
    ``schema`` must name a column for every attribute.
    """
    schema = schema or generic_schema(data.K, data.d, with_ids=data.ids is not None)
    if schema.K != data.K or schema.d != data.d:
        raise ValueError("schema shape does not match the dataset")
    cols = [c for attrs in schema.alternative_columns.values() for c in attrs]
    if not all(isinstance(c, str) for c in cols):
        raise ValueError("write_csv needs a column name for every attribute")
    alts = schema.alternatives
    inv_codes = {v: k for k, v in schema.choice_codes.items()} if schema.choice_codes else None
    header = ([schema.id_column] if schema.id_column else []) + [schema.choice_column] + cols
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(data.N):
            lead = [str(data.ids[n])] if schema.id_column else []
            alt = alts[int(data.y[n])]
            choice = inv_codes[alt] if inv_codes else alt
            w.writerow(lead + [choice] + [repr(float(v)) for v in data.X[n].reshape(-1)])
    return schema


# --------------------------------------------------------------------------- subsampling


@dataclass(frozen=True)
class Rows:
    """Draw ``n`` rows uniformly without replacement."""

    n: int


@dataclass(frozen=True)
class DecisionMakers:
    """Draw ``k`` distinct decision makers and keep all of their rows."""

    k: int


def subsample(data: ChoiceDataset, mode: Rows | DecisionMakers, seed: int) -> ChoiceDataset:
    """Random subset of ``data``; deterministic in ``seed``.

    ``Rows`` returns rows in drawn order; ``DecisionMakers`` keeps the
    original row order of the selected ids.
    """
    rng = rng_for(seed)
    if isinstance(mode, Rows):
        if not 1 <= mode.n <= data.N:
            raise ValueError(f"cannot draw {mode.n} rows from {data.N}")
        return data.take(rng.permutation(data.N)[: mode.n])
    if isinstance(mode, DecisionMakers):
        if data.ids is None:
            raise ValueError("decision-maker sampling needs ids")
        uniq = np.unique(data.ids)
        if not 1 <= mode.k <= uniq.size:
            raise ValueError(f"cannot draw {mode.k} decision makers from {uniq.size}")
        chosen = rng.choice(uniq, size=mode.k, replace=False)
        return data.take(np.flatnonzero(np.isin(data.ids, chosen)))
    raise TypeError(f"unknown subsampling mode {mode!r}")
