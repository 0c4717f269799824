"""Build supervision schemes and GRRM problems from validated JSON configs."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from grrm import schemes
from grrm.errors import DataError, SchemeError
from grrm.finite import Distribution, FiniteSpace, make_space, product_space
from grrm.harness.config import CoarseMap, SchemeSpec, SolveConfig, TripleKind, TripleSpec
from grrm.harness.data import read_table
from grrm.objective import statistic_for, statistic_from_csv
from grrm.solver import GrrmProblem
from grrm.transitions import (
    Transition,
    componentwise_noise,
    deterministic,
    from_csv,
    label_noise,
    parallel,
    identity,
    projection,
)

logger = logging.getLogger(__name__)


def _symbol(value: Any) -> Any:
    return tuple(value) if isinstance(value, list) else value


def _space(values: Sequence[Any]) -> FiniteSpace:
    return make_space(_symbol(v) for v in values)


def _key(raw: Any) -> str:
    if isinstance(raw, (list, tuple)):
        return "|".join(str(v) for v in raw)
    return str(raw)


def _lookup(space: FiniteSpace, raw: Any):
    return space.lookup(_key(raw))


def _rows(source: Path | list, base_dir: Path) -> list[list]:
    if isinstance(source, list):
        return source
    path = source if source.is_absolute() else base_dir / source
    return read_table(path).values.tolist()


def _resolve(path: Path | None, base_dir: Path) -> Path | None:
    if path is None:
        return None
    return path if path.is_absolute() else base_dir / path


def _labeled_samples(rows, feature_factors: Sequence[FiniteSpace], labels: FiniteSpace) -> list:
    width = len(feature_factors)
    samples = []
    for row in rows:
        if len(row) != width + 1:
            raise DataError(f"sample {row!r} should have {width} feature values and a label")
        x = tuple(_lookup(f, v) for f, v in zip(feature_factors, row[:width]))
        samples.append((x, _lookup(labels, row[width])))
    return samples


def _feature_samples(rows, feature_factors: Sequence[FiniteSpace]) -> list:
    width = len(feature_factors)
    out = []
    for row in rows:
        if len(row) != width:
            raise DataError(f"unlabeled sample {row!r} should have {width} feature values")
        out.append(tuple(_lookup(f, v) for f, v in zip(feature_factors, row)))
    return out


def _label_kernel(spec: TripleSpec, labels: FiniteSpace, target: FiniteSpace, base_dir: Path) -> Transition:
    if spec.label_kernel is not None:
        return from_csv(_resolve(spec.label_kernel, base_dir), labels, target)
    if spec.rho_minus is None or spec.rho_plus is None:
        raise SchemeError(f"{spec.kind.value}: needs rho_minus and rho_plus or a label_kernel file")
    return label_noise(spec.rho_minus, spec.rho_plus, labels)


def _training_factors(spec: TripleSpec, default: Sequence[FiniteSpace]) -> list[FiniteSpace]:
    if spec.training_components is None:
        return list(default)
    return [_space(c) for c in spec.training_components]


def build_triple(
    spec: TripleSpec, test_space: FiniteSpace, factors: Sequence[FiniteSpace], base_dir: Path
) -> schemes.BridgeTriple:
    features, labels = test_space.factors
    kind = spec.kind
    rows = _rows(spec.samples, base_dir)

    if kind is TripleKind.standard:
        return schemes.standard(test_space, _labeled_samples(rows, factors, labels))

    if kind is TripleKind.noisy_labels:
        kernel = _label_kernel(spec, labels, labels, base_dir)
        return schemes.noisy_labels(test_space, samples=_labeled_samples(rows, factors, labels), label_kernel=kernel)

    if kind is TripleKind.coarse_labels:
        coarse = (
            _space(spec.coarse_labels) if spec.coarse_labels is not None else schemes.label_subsets_space(labels)
        )
        samples = _labeled_samples(rows, factors, coarse)
        if spec.label_kernel is not None:
            kernel = from_csv(_resolve(spec.label_kernel, base_dir), labels, coarse)
            return schemes.coarse_labels(test_space, coarse, samples, label_kernel=kernel)
        label_map = (
            schemes.weak_multilabel_map(coarse)
            if spec.coarse_map is CoarseMap.weak
            else schemes.multiple_labels_map(labels, coarse)
        )
        return schemes.coarse_labels(test_space, coarse, samples, label_map=label_map)

    if kind in (TripleKind.privileged, TripleKind.tes_corrupted):
        extended = _training_factors(spec, factors)
        extended_space = product_space(*extended)
        samples = _labeled_samples(rows, extended, labels)
        if spec.feature_kernel is not None:
            kernel = from_csv(_resolve(spec.feature_kernel, base_dir), extended_space, features)
            if kind is TripleKind.tes_corrupted:
                return schemes.tes_corrupted(test_space, extended_space, kernel, samples)
            return schemes.privileged(test_space, extended_space, samples, feature_kernel=kernel)
        if kind is TripleKind.tes_corrupted:
            raise SchemeError("tes-corrupted needs a feature_kernel file")
        keep = spec.keep if spec.keep is not None else list(range(len(factors)))
        return schemes.privileged(test_space, extended_space, samples, keep=keep)

    if kind is TripleKind.trs_corrupted:
        if spec.feature_kernel is not None:
            noisy = product_space(*_training_factors(spec, factors))
            corruption = from_csv(_resolve(spec.feature_kernel, base_dir), features, noisy)
            noisy_factors = _training_factors(spec, factors)
        elif spec.eta is not None:
            corruption = componentwise_noise(features, spec.eta)
            noisy_factors = list(factors)
        else:
            raise SchemeError("trs-corrupted needs eta or a feature_kernel file")
        return schemes.trs_corrupted(test_space, corruption, _labeled_samples(rows, noisy_factors, labels))

    if kind is TripleKind.representation:
        train_factors = _training_factors(spec, factors)
        train_features = product_space(*train_factors)
        if spec.test_keep is None or spec.keep is None:
            raise SchemeError("representation needs test_keep and keep component lists")
        repr_test = parallel(projection(features, spec.test_keep), identity(labels))
        repr_train = parallel(projection(train_features, spec.keep), identity(labels))
        training_space = product_space(train_features, labels)
        samples = _labeled_samples(rows, train_factors, labels)
        return schemes.representation_adaptation(test_space, training_space, repr_test, repr_train, samples)

    if kind is TripleKind.combined:
        label_kernel = _label_kernel(spec, labels, labels, base_dir)
        train_factors = _training_factors(spec, factors)
        if spec.feature_kernel is not None:
            clean = product_space(*train_factors)
            feature_kernel = from_csv(_resolve(spec.feature_kernel, base_dir), clean, features)
        elif spec.eta is not None:
            feature_kernel = componentwise_noise(features, spec.eta)
            train_factors = list(factors)
        else:
            raise SchemeError("combined needs eta or a feature_kernel file")
        samples = _labeled_samples(rows, train_factors, labels)
        return schemes.combined(test_space, label_kernel, feature_kernel, samples)

    if kind is TripleKind.precise_labels:
        if spec.fine_labels is None:
            raise SchemeError("precise-labels needs the fine label list")
        fine = _space(spec.fine_labels)
        if spec.label_kernel is not None:
            refinement = from_csv(_resolve(spec.label_kernel, base_dir), fine, labels)
        elif spec.refinement is not None:
            mapping = {_lookup(fine, k): _lookup(labels, v) for k, v in spec.refinement.items()}
            refinement = deterministic(fine, labels, mapping)
        else:
            raise SchemeError("precise-labels needs a refinement map or a label_kernel file")
        return schemes.precise_labels(test_space, refinement, _labeled_samples(rows, factors, fine))

    if kind is TripleKind.unlabeled:
        return schemes.unlabeled(test_space, _feature_samples(rows, factors))

    if kind is TripleKind.missing_feature:
        if spec.component is None:
            raise SchemeError("missing-feature needs the missing component index")
        kept = [f for k, f in enumerate(factors) if k != spec.component]
        samples = _labeled_samples(rows, kept, labels)
        if len(kept) == 1:
            samples = [(x[0], y) for x, y in samples]
        return schemes.missing_feature(test_space, spec.component, samples)

    raise SchemeError(f"unsupported triple kind {kind!r}")


def build_scheme(spec: SchemeSpec, base_dir: Path = Path(".")) -> schemes.SupervisionScheme:
    factors = [_space(c) for c in spec.feature_components]
    labels = _space(spec.labels)
    test_space = product_space(product_space(*factors), labels)
    triples = [build_triple(t, test_space, factors, base_dir) for t in spec.triples]
    scheme = schemes.scheme(test_space, triples)
    if spec.weights == "auto":
        return schemes.default_weights(scheme)
    return schemes.with_weights(scheme, spec.weights)


def build_problem(config: SolveConfig, base_dir: Path = Path(".")) -> GrrmProblem:
    scheme = build_scheme(config.scheme, base_dir)
    if config.statistic_files:
        if len(config.statistic_files) != len(scheme.triples):
            raise DataError("one statistic file per triple is required")
        statistics = tuple(
            statistic_from_csv(_resolve(path, base_dir), t.bridge_space)
            for path, t in zip(config.statistic_files, scheme.triples)
        )
    else:
        statistics = tuple(statistic_for(t.bridge_space, config.statistic) for t in scheme.triples)
    pin = None
    if config.marginal_pin is not None:
        pin = Distribution(scheme.feature_space, np.asarray(config.marginal_pin, dtype=float))
    return GrrmProblem(
        scheme,
        config.lam,
        statistics,
        norm=config.norm,
        marginal_pin=pin,
        tolerance=config.tolerance,
        restrict_support=config.restrict_support,
    )


def _test_factors(spec: SchemeSpec) -> tuple[list[FiniteSpace], FiniteSpace]:
    return [_space(c) for c in spec.feature_components], _space(spec.labels)


def samples_in_test_space(spec: SchemeSpec, base_dir: Path = Path(".")) -> list:
    """Training samples that already live in the test space, in triple order.

    These are the samples of standard, noisy-labels, trs-corrupted and combined
    triples read with the test feature components.
    """
    factors, labels = _test_factors(spec)
    kinds = (TripleKind.standard, TripleKind.noisy_labels, TripleKind.trs_corrupted, TripleKind.combined)
    samples = []
    for t in spec.triples:
        if t.kind in kinds and t.training_components is None and t.feature_kernel is None:
            samples.extend(_labeled_samples(_rows(t.samples, base_dir), factors, labels))
    return samples


def load_test_samples(spec: SchemeSpec, path: Path) -> list:
    """Labeled test-space samples from a CSV (feature columns, then the label column)."""
    factors, labels = _test_factors(spec)
    return _labeled_samples(read_table(path).values.tolist(), factors, labels)
