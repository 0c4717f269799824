"""Supervision schemes as bridge triples (ℬ_i, T_i, T̃_i) with attached data.

Each constructor encodes one row of the usual non-standard and heterogeneous
supervision tables: T_i maps test distributions over 𝒵 = 𝒳×𝒴 onto the bridge
ℬ_i, T̃_i maps training distributions over 𝒵̃_i onto the same bridge, and the
true distributions satisfy T_i(P) = T̃_i(P̃_i).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from grrm.errors import SchemeError
from grrm.finite import (
    Distribution,
    Element,
    FiniteSpace,
    LossMatrix,
    empirical_distribution,
    make_space,
    zero_one_loss,
)
from grrm.transitions import (
    SetMap,
    Transition,
    apply,
    deterministic,
    identity,
    label_noise,
    parallel,
    projection,
    set_valued,
)

logger = logging.getLogger(__name__)


def _test_factors(test_space: FiniteSpace) -> tuple[FiniteSpace, FiniteSpace]:
    if not test_space.is_factorized or len(test_space.factors) != 2:
        raise SchemeError("test space must be the product of a feature and a label space")
    return test_space.factors


@dataclass(frozen=True, eq=False)
class BridgeTriple:
    training_space: FiniteSpace
    bridge_space: FiniteSpace
    test_to_bridge: Transition
    train_to_bridge: Transition
    empirical: Distribution
    weight: float = 1.0
    sample_count: int = 1
    kind: str = "custom"

    def __post_init__(self) -> None:
        if self.test_to_bridge.target != self.bridge_space:
            raise SchemeError(f"{self.kind}: T does not map onto the bridge space")
        if self.train_to_bridge.target != self.bridge_space:
            raise SchemeError(f"{self.kind}: T̃ does not map onto the bridge space")
        if self.train_to_bridge.source != self.training_space:
            raise SchemeError(f"{self.kind}: T̃ source is not the training space")
        if self.empirical.space != self.training_space:
            raise SchemeError(f"{self.kind}: empirical distribution is not over the training space")
        if not self.weight > 0:
            raise SchemeError(f"{self.kind}: weight must be positive, got {self.weight}")
        if self.sample_count < 1:
            raise SchemeError(f"{self.kind}: sample count must be at least 1")

    @property
    def test_space(self) -> FiniteSpace:
        return self.test_to_bridge.source

    def bridged_data(self) -> Distribution:
        """T̃_i(P̃_{e_i}), the data term every discrepancy is measured against."""
        return apply(self.train_to_bridge, self.empirical)

    def equivalent(self, other: BridgeTriple, atol: float = 1e-12) -> bool:
        """Same spaces, kernels and data (kind labels and weights are ignored)."""
        return (
            self.training_space == other.training_space
            and self.bridge_space == other.bridge_space
            and self.test_to_bridge.equivalent(other.test_to_bridge, atol)
            and self.train_to_bridge.equivalent(other.train_to_bridge, atol)
            and self.empirical.allclose(other.empirical, atol)
        )


@dataclass(frozen=True, eq=False)
class SupervisionScheme:
    test_space: FiniteSpace
    triples: tuple[BridgeTriple, ...]
    loss: LossMatrix = field(default=None)

    def __post_init__(self) -> None:
        _, labels = _test_factors(self.test_space)
        triples = tuple(self.triples)
        if not triples:
            raise SchemeError("a supervision scheme needs at least one triple")
        for triple in triples:
            if triple.test_space != self.test_space:
                raise SchemeError(f"{triple.kind}: triple does not start from the scheme's test space")
        object.__setattr__(self, "triples", triples)
        if self.loss is None:
            object.__setattr__(self, "loss", zero_one_loss(labels))
        elif self.loss.true != labels or self.loss.predicted != labels:
            raise SchemeError("loss matrix must be indexed by the test label space")

    @property
    def feature_space(self) -> FiniteSpace:
        return self.test_space.factors[0]

    @property
    def label_space(self) -> FiniteSpace:
        return self.test_space.factors[1]

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.triples])

    def __len__(self) -> int:
        return len(self.triples)


def scheme(test_space: FiniteSpace, triples: Iterable[BridgeTriple], loss: LossMatrix | None = None) -> SupervisionScheme:
    return SupervisionScheme(test_space, tuple(triples), loss)


def _triple(kind, training_space, bridge_space, t, t_tilde, samples, weight=1.0) -> BridgeTriple:
    samples = list(samples)
    if not samples:
        raise SchemeError(f"{kind}: no training samples")
    return BridgeTriple(
        training_space=training_space,
        bridge_space=bridge_space,
        test_to_bridge=t,
        train_to_bridge=t_tilde,
        empirical=empirical_distribution(samples, training_space),
        weight=weight,
        sample_count=len(samples),
        kind=kind,
    )


def standard(test_space: FiniteSpace, samples: Sequence[Element]) -> BridgeTriple:
    _test_factors(test_space)
    eye = identity(test_space)
    return _triple("standard", test_space, test_space, eye, eye, samples)


def noisy_labels(
    test_space: FiniteSpace,
    rho_minus: float | None = None,
    rho_plus: float | None = None,
    samples: Sequence[Element] = (),
    label_kernel: Transition | None = None,
) -> BridgeTriple:
    """T = I ⊗ T_{Ỹ|Y}, T̃ = I, ℬ = 𝒵̃."""
    features, labels = _test_factors(test_space)
    if label_kernel is None:
        if rho_minus is None or rho_plus is None:
            raise SchemeError("noisy labels need either both rates or a label kernel")
        if len(labels) != 2:
            raise SchemeError("two-rate label noise needs binary labels; pass a label kernel instead")
        label_kernel = label_noise(rho_minus, rho_plus, labels)
    if label_kernel.source != labels:
        raise SchemeError("label kernel must start from the test label space")
    t = parallel(identity(features), label_kernel)
    training = t.target
    return _triple("noisy_labels", training, training, t, identity(training), samples)


def label_subsets_space(labels: FiniteSpace, sizes: Iterable[int] | None = None) -> FiniteSpace:
    """Nonempty label subsets as sorted tuples, ordered by size then label order."""
    sizes = sorted(sizes) if sizes is not None else range(1, len(labels) + 1)
    return make_space(c for k in sizes for c in combinations(labels.elements, k))


def multiple_labels_map(labels: FiniteSpace, coarse: FiniteSpace) -> SetMap:
    """y ↦ every subset in ``coarse`` that contains y."""
    return lambda y: [s for s in coarse.elements if y in s]


def weak_multilabel_map(coarse: FiniteSpace) -> SetMap:
    """Label set y ↦ its nonempty subsets present in ``coarse``."""
    return lambda y: [s for s in coarse.elements if set(s) <= set(y)]


def coarse_labels(
    test_space: FiniteSpace,
    coarse_space: FiniteSpace,
    samples: Sequence[Element],
    label_map: SetMap | None = None,
    label_kernel: Transition | None = None,
) -> BridgeTriple:
    """Multiple / weak multi-labels: T = I ⊗ T_{Ỹ|Y} with a set-valued or given kernel."""
    features, labels = _test_factors(test_space)
    if label_kernel is None:
        if label_map is None:
            label_map = multiple_labels_map(labels, coarse_space)
        label_kernel = set_valued(labels, coarse_space, label_map)
    if label_kernel.source != labels or label_kernel.target != coarse_space:
        raise SchemeError("label kernel must map test labels onto the coarse label space")
    t = parallel(identity(features), label_kernel)
    training = t.target
    return _triple("coarse_labels", training, training, t, identity(training), samples)


def privileged(
    test_space: FiniteSpace,
    extended_feature_space: FiniteSpace,
    samples: Sequence[Element],
    feature_kernel: Transition | None = None,
    keep: Sequence[int] = (0,),
    kind: str = "privileged",
) -> BridgeTriple:
    """T = I, T̃ = T_{X|X̃} ⊗ I, ℬ = 𝒵.

    Without a kernel, T_{X|X̃} is the projection of X̃ onto the components in
    ``keep`` (for X̃ = X × X^priv the default keeps X).
    """
    features, labels = _test_factors(test_space)
    if feature_kernel is None:
        feature_kernel = projection(extended_feature_space, keep)
        if feature_kernel.target != features:
            # a single kept component still feeds a one-component product space
            feature_kernel = deterministic(
                extended_feature_space, features, lambda e: tuple(e[k] for k in keep)
            )
    if feature_kernel.source != extended_feature_space or feature_kernel.target != features:
        raise SchemeError("feature kernel must map the training features onto the test features")
    t_tilde = parallel(feature_kernel, identity(labels))
    return _triple(kind, t_tilde.source, test_space, identity(test_space), t_tilde, samples)


def tes_corrupted(
    test_space: FiniteSpace,
    training_feature_space: FiniteSpace,
    denoise_kernel: Transition,
    samples: Sequence[Element],
) -> BridgeTriple:
    """Test-stage corrupted features: T̃ = T_{X|X̃} ⊗ I with a supplied de-noising kernel."""
    return privileged(
        test_space, training_feature_space, samples, feature_kernel=denoise_kernel, kind="tes_corrupted"
    )


def trs_corrupted(test_space: FiniteSpace, corruption: Transition, samples: Sequence[Element]) -> BridgeTriple:
    """T = T_{X̃|X} ⊗ I, T̃ = I, ℬ = 𝒵̃."""
    features, labels = _test_factors(test_space)
    if corruption.source != features:
        raise SchemeError("corruption kernel must start from the test feature space")
    t = parallel(corruption, identity(labels))
    training = t.target
    return _triple("trs_corrupted", training, training, t, identity(training), samples)


def representation_adaptation(
    test_space: FiniteSpace,
    training_space: FiniteSpace,
    repr_test: Transition,
    repr_train: Transition,
    samples: Sequence[Element],
) -> BridgeTriple:
    """T = T_{B|Z}, T̃ = T_{B|Z̃} onto a shared representation space ℬ."""
    _test_factors(test_space)
    if repr_test.source != test_space or repr_train.source != training_space:
        raise SchemeError("representation maps must start from the test and training spaces")
    if repr_test.target != repr_train.target:
        raise SchemeError("representation maps must share a target space")
    return _triple(
        "representation", training_space, repr_test.target, repr_test, repr_train, samples
    )


def combined(
    test_space: FiniteSpace,
    label_kernel: Transition,
    feature_kernel: Transition,
    samples: Sequence[Element],
) -> BridgeTriple:
    """ℬ = (X, Ỹ), T = I ⊗ T_{Ỹ|Y}, T̃ = T_{X|X̃} ⊗ I.

    Covers noisy labels at training together with features that are less
    precise at test than at training.
    """
    features, labels = _test_factors(test_space)
    if label_kernel.source != labels:
        raise SchemeError("label kernel must start from the test label space")
    if feature_kernel.target != features:
        raise SchemeError("feature kernel must end in the test feature space")
    t = parallel(identity(features), label_kernel)
    t_tilde = parallel(feature_kernel, identity(label_kernel.target))
    return _triple("combined", t_tilde.source, t.target, t, t_tilde, samples)


def precise_labels(test_space: FiniteSpace, refinement: Transition, samples: Sequence[Element]) -> BridgeTriple:
    """Training labels finer than test labels: ℬ = 𝒵, T = I, T̃ = I ⊗ T_{Y|Ỹ}."""
    features, labels = _test_factors(test_space)
    if refinement.target != labels:
        raise SchemeError("refinement kernel must end in the test label space")
    t_tilde = parallel(identity(features), refinement)
    return _triple("precise_labels", t_tilde.source, test_space, identity(test_space), t_tilde, samples)


def unlabeled(test_space: FiniteSpace, samples: Sequence[Element]) -> BridgeTriple:
    """ℬ = 𝒳, T = T_{X|Z}, T̃ = I."""
    features, _ = _test_factors(test_space)
    return _triple(
        "unlabeled", features, features, projection(test_space, (0,)), identity(features), samples
    )


def missing_feature(test_space: FiniteSpace, component: int, samples: Sequence[Element]) -> BridgeTriple:
    """ℬ = (X̄_i, Y), T = T_{X̄_i|X} ⊗ I, T̃ = I, with X̄_i dropping feature component ``component``."""
    features, labels = _test_factors(test_space)
    if not features.is_factorized or len(features.factors) < 2:
        raise SchemeError("missing features need a feature space with at least two components")
    count = len(features.factors)
    if not 0 <= component < count:
        raise SchemeError(f"feature component {component} out of range")
    kept = [k for k in range(count) if k != component]
    t = parallel(projection(features, kept), identity(labels))
    training = t.target
    return _triple(f"missing_feature_{component}", training, training, t, identity(training), samples)


def semi_supervised(
    test_space: FiniteSpace,
    labeled: Sequence[Element],
    unlabeled_samples: Sequence[Element] = (),
) -> SupervisionScheme:
    triples = [standard(test_space, labeled)]
    if len(unlabeled_samples):
        triples.append(unlabeled(test_space, unlabeled_samples))
    return scheme(test_space, triples)


def missing_features(
    test_space: FiniteSpace,
    missing_components: Sequence[int | None],
    sample_subsets: Sequence[Sequence[Element]],
) -> SupervisionScheme:
    """One triple per non-empty subset; ``None`` marks the complete (standard) subset."""
    if len(missing_components) != len(sample_subsets):
        raise SchemeError("one missing component (or None) is needed per sample subset")
    triples = []
    for component, samples in zip(missing_components, sample_subsets):
        if not len(samples):
            continue
        if component is None:
            triples.append(standard(test_space, samples))
        else:
            triples.append(missing_feature(test_space, component, samples))
    return scheme(test_space, triples)


def variable_quality(
    test_space: FiniteSpace,
    noise_rates: Sequence[tuple[float, float]],
    sample_subsets: Sequence[Sequence[Element]],
) -> SupervisionScheme:
    if len(noise_rates) != len(sample_subsets):
        raise SchemeError("one pair of noise rates is needed per sample subset")
    triples = [
        noisy_labels(test_space, rho_minus, rho_plus, samples)
        for (rho_minus, rho_plus), samples in zip(noise_rates, sample_subsets)
        if len(samples)
    ]
    return scheme(test_space, triples)


def default_weights(s: SupervisionScheme) -> SupervisionScheme:
    """w_i = √n_i / Σ_j √n_j."""
    roots = np.sqrt([t.sample_count for t in s.triples])
    weights = roots / roots.sum()
    return with_weights(s, weights)


def with_weights(s: SupervisionScheme, weights: Sequence[float]) -> SupervisionScheme:
    if len(weights) != len(s.triples):
        raise SchemeError(f"{len(weights)} weights for {len(s.triples)} triples")
    triples = tuple(replace(t, weight=float(w)) for t, w in zip(s.triples, weights))
    return replace(s, triples=triples)


def bridge_residuals(
    s: SupervisionScheme, p: Distribution, training_distributions: Sequence[Distribution]
) -> list[float]:
    """max-abs gap between T_i(P) and T̃_i(P̃_i) for analytic distributions."""
    if len(training_distributions) != len(s.triples):
        raise SchemeError("one training distribution is needed per triple")
    residuals = []
    for triple, p_tilde in zip(s.triples, training_distributions):
        lhs = apply(triple.test_to_bridge, p).mass
        rhs = apply(triple.train_to_bridge, p_tilde).mass
        residuals.append(float(np.max(np.abs(lhs - rhs))))
    return residuals


def describe(s: SupervisionScheme) -> list[dict]:
    """Bridge spaces and kernel shapes, one entry per triple."""
    return [
        {
            "index": i,
            "kind": t.kind,
            "training_size": len(t.training_space),
            "bridge_size": len(t.bridge_space),
            "test_to_bridge_shape": list(t.test_to_bridge.shape),
            "train_to_bridge_shape": list(t.train_to_bridge.shape),
            "sample_count": t.sample_count,
            "weight": t.weight,
        }
        for i, t in enumerate(s.triples)
    ]

