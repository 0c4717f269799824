from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from grrm.errors import DataError
from grrm.finite import FiniteSpace, make_space, product_space
from grrm.harness.config import DatasetSpec
from grrm.transitions import BINARY_LABELS

logger = logging.getLogger(__name__)


@dataclass
class TabularEncoder:
    """Categorical encoding fitted on a training split: quantile bins b1..bk for numeric columns."""

    spec: DatasetSpec
    feature_columns: list[str] = field(default_factory=list)
    edges: dict[str, np.ndarray] = field(default_factory=dict)
    categories: dict[str, list[str]] = field(default_factory=dict)
    fallback: dict[str, str] = field(default_factory=dict)
    label_values: tuple[str, str] = ("", "")

    def fit(self, frame: pd.DataFrame) -> TabularEncoder:
        spec = self.spec
        if spec.label_column not in frame.columns:
            raise DataError(f"label column {spec.label_column!r} is missing")
        columns = spec.feature_columns or [c for c in frame.columns if c != spec.label_column]
        missing = [c for c in columns + spec.numeric_columns if c not in frame.columns]
        if missing:
            raise DataError(f"columns {missing} are missing")
        self.feature_columns = list(columns)

        for column in spec.numeric_columns:
            values = pd.to_numeric(frame[column], errors="raise")
            _, edges = pd.qcut(values, q=spec.bins, retbins=True, duplicates="drop")
            self.edges[column] = edges

        binned = self._binned(frame)
        for column in self.feature_columns:
            counts = binned[column].value_counts()
            self.categories[column] = sorted(counts.index)
            self.fallback[column] = str(counts.sort_index().idxmax())

        labels = sorted(frame[spec.label_column].astype(str).unique())
        if len(labels) != 2:
            raise DataError(f"expected a binary label column, found values {labels}")
        if spec.positive_label is not None:
            if spec.positive_label not in labels:
                raise DataError(f"positive label {spec.positive_label!r} does not occur")
            negative = labels[0] if labels[1] == spec.positive_label else labels[1]
            self.label_values = (negative, spec.positive_label)
        else:
            self.label_values = (labels[0], labels[1])
        return self

    def _binned(self, frame: pd.DataFrame) -> pd.DataFrame:
        out = pd.DataFrame(index=frame.index)
        for column in self.feature_columns:
            if column in self.edges:
                edges = self.edges[column].copy()
                edges[0], edges[-1] = -np.inf, np.inf
                names = [f"b{k + 1}" for k in range(len(edges) - 1)]
                values = pd.to_numeric(frame[column], errors="coerce")
                out[column] = pd.cut(values, bins=edges, labels=names).astype(str)
            else:
                out[column] = frame[column].astype(str)
        return out

    def transform(self, frame: pd.DataFrame) -> list[tuple[tuple[str, ...], int]]:
        binned = self._binned(frame)
        unknown = 0
        for column in self.feature_columns:
            known = binned[column].isin(self.categories[column])
            unknown += int((~known).sum())
            binned.loc[~known, column] = self.fallback[column]
        if unknown:
            logger.warning("%d unknown categorical values mapped to their column fallback", unknown)
        labels = frame[self.spec.label_column].astype(str)
        bad = ~labels.isin(self.label_values)
        if bad.any():
            raise DataError(f"unknown label values {sorted(labels[bad].unique())}")
        y = np.where(labels == self.label_values[1], 1, -1)
        rows = binned[self.feature_columns].itertuples(index=False, name=None)
        return [(tuple(x), int(label)) for x, label in zip(rows, y)]


@dataclass(frozen=True, eq=False)
class IngestedData:
    feature_space: FiniteSpace
    test_space: FiniteSpace
    train: list
    test: list
    encoder: TabularEncoder


def read_table(path: str | Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None


def ingest_csv(path: str | Path, schema: DatasetSpec, train_rows: Sequence[int] | None = None) -> IngestedData:
    """Encode a CSV; bins and categories come from the training rows only.

    The feature space is the sorted set of distinct training feature tuples.
    Test tuples outside it stay as they are and fall to the rule's fallback label.
    """
    frame = read_table(path)
    if frame.empty:
        raise DataError(f"{path}: no rows")
    if train_rows is None:
        train_frame, test_frame = frame, frame.iloc[0:0]
    else:
        mask = np.zeros(len(frame), dtype=bool)
        mask[np.asarray(train_rows, dtype=int)] = True
        train_frame, test_frame = frame[mask], frame[~mask]
    encoder = TabularEncoder(schema).fit(train_frame)
    train = encoder.transform(train_frame)
    test = encoder.transform(test_frame) if len(test_frame) else []
    features = make_space(sorted({x for x, _ in train}))
    return IngestedData(features, product_space(features, BINARY_LABELS), train, test, encoder)


def inject_noise(
    samples: Sequence[tuple[tuple, int]],
    rho_minus: float,
    rho_plus: float,
    eta: float,
    rng: np.random.Generator | int,
    alphabet: Sequence[str] = ("x", "o", "b"),
) -> list[tuple[tuple, int]]:
    """Independent label flips (rate ρ− for −1, ρ+ for +1) and per-cell symbol flips at rate η.

    A flipped cell takes one of the other symbols uniformly, matching
    ``componentwise_noise``.
    """
    for rate in (rho_minus, rho_plus, eta):
        if not 0.0 <= rate <= 1.0:
            raise DataError(f"noise rates must lie in [0, 1], got {rate}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n = len(samples)
    if n == 0:
        return []
    labels = np.array([y for _, y in samples])
    flip_rate = np.where(labels == 1, rho_plus, rho_minus)
    flipped = rng.random(n) < flip_rate
    labels = np.where(flipped, -labels, labels)

    width = len(samples[0][0])
    cell_draws = rng.random((n, width))
    shifts = rng.integers(1, len(alphabet), size=(n, width)) if len(alphabet) > 1 else np.zeros((n, width), int)
    index = {symbol: k for k, symbol in enumerate(alphabet)}
    out = []
    for j, (x, _) in enumerate(samples):
        if eta > 0:
            cells = []
            for k, value in enumerate(x):
                if cell_draws[j, k] < eta:
                    value = alphabet[(index[value] + shifts[j, k]) % len(alphabet)]
                cells.append(value)
            x = tuple(cells)
        out.append((x, int(labels[j])))
    return out
