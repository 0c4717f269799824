"""Posterior-argmin classification from Q*, evaluation and sample-weight export."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from grrm.errors import DataError
from grrm.finite import Distribution, Element, FiniteSpace, LossMatrix, element_key
from grrm.objective import conditional_costs
from grrm.transitions import Transition

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PosteriorRule:
    feature_space: FiniteSpace
    label_space: FiniteSpace
    decision: dict
    fallback_label: Element

    def __call__(self, x: Element) -> Element:
        return self.decision.get(x, self.fallback_label)

    def predict(self, features: Sequence[Element]) -> list:
        return [self(x) for x in features]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "feature": [element_key(x) for x in self.feature_space.elements],
                "label": [self(x) for x in self.feature_space.elements],
            }
        )


def posterior_rule(q_star: Distribution, loss: LossMatrix) -> PosteriorRule:
    """decision(x) = argmin_ŷ Σ_y L(ŷ, y) Q*(x, y); the first label wins ties."""
    features, labels = q_star.space.factors
    costs = conditional_costs(q_star, loss)
    row_mass = q_star.mass.reshape(len(features), len(labels)).sum(axis=1)
    fallback = loss.predicted.elements[int(np.argmin(costs.sum(axis=0)))]
    decision = {}
    for row, x in enumerate(features.elements):
        if row_mass[row] > 0:
            decision[x] = loss.predicted.elements[int(np.argmin(costs[row]))]
        else:
            decision[x] = fallback
    return PosteriorRule(features, labels, decision, fallback)


@dataclass(frozen=True)
class EvaluationReport:
    n: int
    correct: int
    accuracy: float
    average_loss: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "metric": ["n", "correct", "accuracy", "average_loss"],
                "value": [self.n, self.correct, self.accuracy, self.average_loss],
            }
        )


def evaluate(rule: PosteriorRule, test_samples: Sequence[tuple], loss: LossMatrix) -> EvaluationReport:
    if len(test_samples) == 0:
        raise DataError("cannot evaluate on an empty test set")
    correct = 0
    total_loss = 0.0
    for x, y in test_samples:
        predicted = rule(x)
        correct += int(predicted == y)
        total_loss += loss(predicted, y)
    n = len(test_samples)
    return EvaluationReport(n=n, correct=correct, accuracy=correct / n, average_loss=total_loss / n)


def corrected_accuracy(
    rule: PosteriorRule, noisy_samples: Sequence[tuple], label_kernel: Transition
) -> float:
    """Unbiased clean-label accuracy from samples whose labels went through ``label_kernel``.

    Each hit indicator 1{ŷ = y} is replaced by row ŷ of K^{-T}, so its
    expectation over the observed label equals the hit on the clean label.
    """
    if len(noisy_samples) == 0:
        raise DataError("cannot evaluate on an empty test set")
    if label_kernel.source != label_kernel.target or len(label_kernel.source) != len(rule.label_space):
        raise DataError("the label kernel must map the label space onto itself")
    try:
        corrected = np.linalg.inv(label_kernel.kernel).T
    except np.linalg.LinAlgError as exc:
        raise DataError("the label kernel is not invertible") from exc
    labels = label_kernel.source
    total = 0.0
    for x, y in noisy_samples:
        total += corrected[labels.index(rule(x)), labels.index(y)]
    return float(total / len(noisy_samples))


@dataclass(frozen=True, eq=False)
class WeightTable:
    weights: np.ndarray
    outside_support: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"sample_index": np.arange(len(self.weights)), "weight": self.weights})


def export_weights(q_star: Distribution, samples: Sequence[Element]) -> WeightTable:
    """Per-sample weights Q*(z_j) / count(z_j), normalized to mean 1 over nonzero entries."""
    counts = Counter(samples)
    raw = np.zeros(len(samples))
    outside = 0
    for j, z in enumerate(samples):
        mass = q_star[z] if z in q_star.space else 0.0
        if mass <= 0:
            outside += 1
            continue
        raw[j] = mass / counts[z]
    if outside:
        logger.warning("%d of %d samples fall outside the support of Q*; their weight is 0", outside, len(samples))
    positive = raw > 0
    if positive.any():
        raw[positive] /= raw[positive].mean()
    return WeightTable(raw, outside)

