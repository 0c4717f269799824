"""Entropy and statistic-mean discrepancy terms of the GRRM objective."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Union

import numpy as np
import pandas as pd

from grrm.errors import DataError, ObjectiveError, SpaceError
from grrm.finite import Distribution, Element, FiniteSpace, LossMatrix, joint_matrix

logger = logging.getLogger(__name__)

Embedding = Union[Mapping[Element, np.ndarray], Callable[[Element], np.ndarray]]


class NormChoice(str, enum.Enum):
    max_abs = "max-abs"
    sum_abs = "sum-abs"
    euclidean = "euclidean"

    @property
    def is_linear(self) -> bool:
        return self is not NormChoice.euclidean


class StatisticChoice(str, enum.Enum):
    indicator = "indicator"
    one_hot_affine = "one-hot-affine"
    csv = "csv"


@dataclass(frozen=True, eq=False)
class Statistic:
    """t(·): one real k-vector per element of ``space`` (rows of ``values``)."""

    space: FiniteSpace
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != len(self.space):
            raise ObjectiveError(
                f"statistic needs one row per element ({len(self.space)}), got shape {values.shape}"
            )
        if values.shape[1] < 1:
            raise ObjectiveError("statistic dimension must be at least 1")
        if not np.all(np.isfinite(values)):
            raise ObjectiveError("statistic entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row(self, element: Element) -> np.ndarray:
        return self.values[self.space.index(element)]


def zero_one_entropy(q: Distribution) -> float:
    """H(Q) = 1 − Σ_x max_y Q(x, y)."""
    return float(1.0 - joint_matrix(q).max(axis=1).sum())


def conditional_costs(q: Distribution, loss: LossMatrix) -> np.ndarray:
    """Matrix C[x, ŷ] = Σ_y L(ŷ, y) Q(x, y)."""
    matrix = joint_matrix(q)
    if loss.true != q.space.factors[1]:
        raise SpaceError("loss true-label space does not match the label factor")
    return matrix @ loss.values.T


def general_entropy(q: Distribution, loss: LossMatrix) -> float:
    """Minimum risk over all deterministic rules: Σ_x min_ŷ Σ_y L(ŷ, y) Q(x, y)."""
    return float(conditional_costs(q, loss).min(axis=1).sum())


def statistic_mean(q: Distribution, t: Statistic) -> np.ndarray:
    if q.space != t.space:
        raise SpaceError("distribution and statistic live on different spaces")
    return t.values.T @ q.mass


def norm_value(vector: np.ndarray, norm: NormChoice) -> float:
    norm = NormChoice(norm)
    vector = np.asarray(vector, dtype=float)
    if norm is NormChoice.max_abs:
        return float(np.max(np.abs(vector))) if vector.size else 0.0
    if norm is NormChoice.sum_abs:
        return float(np.sum(np.abs(vector)))
    return float(np.linalg.norm(vector))


def discrepancy(
    q1: Distribution, q2: Distribution, t: Statistic, norm: NormChoice = NormChoice.max_abs
) -> float:
    """ψ(Q1, Q2) = ‖E_{Q1} t − E_{Q2} t‖."""
    return norm_value(statistic_mean(q1, t) - statistic_mean(q2, t), norm)


def indicator_statistic(space: FiniteSpace) -> Statistic:
    return Statistic(space, np.eye(len(space)))


def one_hot_embedding(features: FiniteSpace) -> dict[Element, np.ndarray]:
    """One-hot code per categorical component of each feature value.

    Tuple-valued features are split into components; categories of a
    component are ordered by first appearance in the space.
    """
    elements = features.elements
    if features.is_factorized:
        categories = [list(f.elements) for f in features.factors]
        parts = {e: tuple(e) for e in elements}
    else:
        parts = {e: e if isinstance(e, tuple) else (e,) for e in elements}
        width = {len(p) for p in parts.values()}
        if len(width) != 1:
            raise ObjectiveError("feature tuples have inconsistent lengths")
        categories = [[] for _ in range(width.pop())]
        for p in parts.values():
            for position, value in enumerate(p):
                if value not in categories[position]:
                    categories[position].append(value)
    offsets = np.cumsum([0] + [len(c) for c in categories])
    lookup = [{value: i for i, value in enumerate(c)} for c in categories]
    embedding = {}
    for element, p in parts.items():
        vector = np.zeros(offsets[-1])
        for position, value in enumerate(p):
            vector[offsets[position] + lookup[position][value]] = 1.0
        embedding[element] = vector
    return embedding


def _split_feature_label(space: FiniteSpace) -> tuple[Callable[[Element], Element], FiniteSpace, list]:
    if not space.is_factorized or len(space.factors) < 2:
        raise SpaceError("expected a factorized (features..., label) space")
    labels = space.factors[-1]
    if len(space.factors) == 2:
        features = list(space.factors[0].elements)
        return (lambda e: e[0]), labels, features
    seen: dict = {}
    for e in space.elements:
        seen.setdefault(tuple(e[:-1]), None)
    return (lambda e: tuple(e[:-1])), labels, list(seen)


def _embed(embedding: Embedding, x: Element) -> np.ndarray:
    if isinstance(embedding, Mapping):
        try:
            return np.asarray(embedding[x], dtype=float)
        except KeyError:
            raise ObjectiveError(f"embedding is undefined on feature {x!r}") from None
    return np.asarray(embedding(x), dtype=float)


def one_hot_statistic(space: FiniteSpace, embedding: Embedding | None = None) -> Statistic:
    """t(x, y) = (θ−(y), θ−(y)·x, θ+(y), θ+(y)·x) for a binary label factor."""
    feature_of, labels, features = _split_feature_label(space)
    if len(labels) != 2:
        raise ObjectiveError("one-hot statistic needs a binary label space")
    if embedding is None:
        if len(space.factors) == 2:
            embedding = one_hot_embedding(space.factors[0])
        else:
            embedding = one_hot_embedding(FiniteSpace(tuple(features)))
    negative = labels.elements[0]
    rows = []
    for element in space.elements:
        x = _embed(embedding, feature_of(element))
        theta_minus = 1.0 if element[-1] == negative else 0.0
        theta_plus = 1.0 - theta_minus
        rows.append(np.concatenate([[theta_minus], theta_minus * x, [theta_plus], theta_plus * x]))
    return Statistic(space, np.vstack(rows))


def affine_statistic(space: FiniteSpace, embedding: Embedding | None = None) -> Statistic:
    """t(b) = (1, embed(b)) for bridges that carry no label, e.g. ℬ = 𝒳."""
    embedding = embedding if embedding is not None else one_hot_embedding(space)
    rows = [np.concatenate([[1.0], _embed(embedding, b)]) for b in space.elements]
    return Statistic(space, np.vstack(rows))


def statistic_from_csv(path: str | Path, space: FiniteSpace) -> Statistic:
    """Rows keyed by ``element_key`` in the first column, statistic components after."""
    frame = pd.read_csv(path, dtype=str)
    if frame.shape[1] < 2:
        raise DataError(f"{path}: statistic CSV needs a key column and at least one value column")
    frame = frame.set_index(frame.columns[0])
    missing = set(space.keys()) - set(frame.index)
    if missing:
        raise DataError(f"{path}: no statistic rows for {sorted(missing)}")
    return Statistic(space, frame.loc[space.keys()].astype(float).to_numpy())


def statistic_for(space: FiniteSpace, choice: StatisticChoice | str) -> Statistic:
    """Named statistic over a bridge space (CSV statistics are loaded by path instead)."""
    choice = StatisticChoice(choice)
    if choice is StatisticChoice.indicator:
        return indicator_statistic(space)
    if choice is StatisticChoice.one_hot_affine:
        if space.is_factorized and len(space.factors) >= 2 and len(space.factors[-1]) == 2:
            return one_hot_statistic(space)
        return affine_statistic(space)
    raise ObjectiveError("CSV statistics need a path; use statistic_from_csv")
