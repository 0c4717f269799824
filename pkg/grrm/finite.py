"""Finite supports, distributions over them and the loss matrices that score rules.

Every vector in the library is indexed by the fixed element order of a
``FiniteSpace``; products are lexicographic with the first factor varying
slowest, which is also the index order ``numpy.kron`` produces.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import TYPE_CHECKING, Callable, Hashable, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from grrm.errors import DistributionError, SpaceError

if TYPE_CHECKING:
    from grrm.transitions import Transition

logger = logging.getLogger(__name__)

Element = Hashable
Rule = Union[Mapping[Element, Element], Callable[[Element], Element]]

MASS_TOLERANCE = 1e-12
SIGNED_TOLERANCE = 1e-9


def element_key(element: Element) -> str:
    """Text form of an element, used for CSV headers and JSON payloads."""
    if isinstance(element, tuple):
        return "|".join(_nested_key(part) for part in element)
    return str(element)


def _nested_key(element: Element) -> str:
    if isinstance(element, tuple):
        return "(" + ",".join(_nested_key(part) for part in element) + ")"
    return str(element)


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    elements: tuple
    factors: tuple[FiniteSpace, ...] | None = None
    _index: dict = field(init=False, repr=False)

    def __post_init__(self) -> None:
        elements = tuple(self.elements)
        if not elements:
            raise SpaceError("a finite space needs at least one element")
        index: dict = {}
        for position, element in enumerate(elements):
            if element in index:
                raise SpaceError(f"duplicate element {element!r}")
            index[element] = position
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "_index", index)
        if self.factors is not None:
            factors = tuple(self.factors)
            expected = int(np.prod([len(f) for f in factors]))
            if expected != len(elements):
                raise SpaceError(
                    f"factorization sizes multiply to {expected}, space has {len(elements)} elements"
                )
            for element in elements:
                if not isinstance(element, tuple) or len(element) != len(factors):
                    raise SpaceError(f"element {element!r} is not a tuple of its components")
                for part, factor in zip(element, factors):
                    if part not in factor:
                        raise SpaceError(f"component {part!r} of {element!r} is outside its factor")
            object.__setattr__(self, "factors", factors)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[Element]:
        return iter(self.elements)

    def __contains__(self, element: object) -> bool:
        try:
            return element in self._index
        except TypeError:
            return False

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteSpace):
            return NotImplemented
        return self is other or self.elements == other.elements

    def __hash__(self) -> int:
        return hash(self.elements)

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def is_factorized(self) -> bool:
        return self.factors is not None

    def index(self, element: Element) -> int:
        try:
            return self._index[element]
        except (KeyError, TypeError):
            raise SpaceError(f"{element!r} is not an element of the space") from None

    def indices(self, elements: Iterable[Element]) -> np.ndarray:
        return np.array([self.index(e) for e in elements], dtype=int)

    def component(self, position: int) -> FiniteSpace:
        if self.factors is None:
            raise SpaceError("space is not factorized")
        if not -len(self.factors) <= position < len(self.factors):
            raise SpaceError(f"component {position} out of range for {len(self.factors)} factors")
        return self.factors[position]

    @cached_property
    def _keys(self) -> dict[str, Element]:
        return {element_key(e): e for e in self.elements}

    def lookup(self, key: str) -> Element:
        """Inverse of ``element_key`` restricted to this space."""
        try:
            return self._keys[str(key)]
        except KeyError:
            raise SpaceError(f"no element with key {key!r}") from None

    def keys(self) -> list[str]:
        return [element_key(e) for e in self.elements]


def make_space(elements: Iterable[Element]) -> FiniteSpace:
    return FiniteSpace(tuple(elements))


def product_space(*spaces: FiniteSpace) -> FiniteSpace:
    """Lexicographic Cartesian product; elements are flat tuples of components."""
    if not spaces:
        raise SpaceError("product of zero spaces")
    elements = tuple(product(*(s.elements for s in spaces)))
    return FiniteSpace(elements, factors=tuple(spaces))


def _check_mass(mass: np.ndarray, size: int, *, sum_tol: float, allow_negative: bool) -> np.ndarray:
    mass = np.array(mass, dtype=float).reshape(-1)
    if mass.shape != (size,):
        raise DistributionError(f"mass has {mass.shape[0]} entries, space has {size}")
    if not np.all(np.isfinite(mass)):
        raise DistributionError("mass entries must be finite")
    if not allow_negative and mass.min() < -MASS_TOLERANCE:
        raise DistributionError(f"negative mass {mass.min():.3e}")
    total = mass.sum()
    if abs(total - 1.0) > sum_tol:
        raise DistributionError(f"mass sums to {total!r}, not 1")
    return mass


@dataclass(frozen=True, eq=False)
class Distribution:
    space: FiniteSpace
    mass: np.ndarray

    def __post_init__(self) -> None:
        mass = _check_mass(self.mass, len(self.space), sum_tol=MASS_TOLERANCE, allow_negative=False)
        mass = np.clip(mass, 0.0, None)
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_mapping(cls, space: FiniteSpace, mapping: Mapping[Element, float]) -> Distribution:
        mass = np.zeros(len(space))
        for element, value in mapping.items():
            mass[space.index(element)] += value
        return cls(space, mass)

    @classmethod
    def uniform(cls, space: FiniteSpace) -> Distribution:
        return cls(space, np.full(len(space), 1.0 / len(space)))

    @classmethod
    def point_mass(cls, space: FiniteSpace, element: Element) -> Distribution:
        mass = np.zeros(len(space))
        mass[space.index(element)] = 1.0
        return cls(space, mass)

    def __getitem__(self, element: Element) -> float:
        return float(self.mass[self.space.index(element)])

    def as_dict(self, *, nonzero: bool = True) -> dict[Element, float]:
        return {
            e: float(m) for e, m in zip(self.space.elements, self.mass) if m > 0 or not nonzero
        }

    @property
    def support(self) -> tuple:
        return tuple(e for e, m in zip(self.space.elements, self.mass) if m > 0)

    def allclose(self, other: Distribution, atol: float = 1e-12) -> bool:
        return self.space == other.space and bool(np.allclose(self.mass, other.mass, rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Normalized but possibly negative measure; only the ERM back-projection produces one."""

    space: FiniteSpace
    mass: np.ndarray

    def __post_init__(self) -> None:
        mass = _check_mass(self.mass, len(self.space), sum_tol=SIGNED_TOLERANCE, allow_negative=True)
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    def __getitem__(self, element: Element) -> float:
        return float(self.mass[self.space.index(element)])

    def negative_entries(self, tol: float = 0.0) -> dict[Element, float]:
        return {e: float(m) for e, m in zip(self.space.elements, self.mass) if m < -tol}


@dataclass(frozen=True, eq=False)
class LossMatrix:
    """L(ŷ, y): rows are predicted labels, columns true labels."""

    predicted: FiniteSpace
    true: FiniteSpace
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.predicted), len(self.true)):
            raise DistributionError(
                f"loss matrix shape {values.shape} does not match "
                f"({len(self.predicted)}, {len(self.true)})"
            )
        if not np.all(np.isfinite(values)):
            raise DistributionError("loss entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __call__(self, predicted: Element, true: Element) -> float:
        return float(self.values[self.predicted.index(predicted), self.true.index(true)])


def zero_one_loss(labels: FiniteSpace) -> LossMatrix:
    return LossMatrix(labels, labels, 1.0 - np.eye(len(labels)))


def empirical_distribution(samples: Sequence[Element], space: FiniteSpace) -> Distribution:
    if len(samples) == 0:
        raise DistributionError("empirical distribution of an empty sample")
    counts = Counter(samples)
    mass = np.zeros(len(space))
    for element, count in counts.items():
        mass[space.index(element)] = count
    return Distribution(space, mass / len(samples))


def _factor_tensor(q: Distribution) -> np.ndarray:
    if not q.space.is_factorized:
        raise SpaceError("operation needs a factorized space")
    return np.asarray(q.mass).reshape([len(f) for f in q.space.factors])


def marginal(q: Distribution, component: int) -> Distribution:
    tensor = _factor_tensor(q)
    factor = q.space.component(component)
    axis = component % tensor.ndim
    other = tuple(a for a in range(tensor.ndim) if a != axis)
    return Distribution(factor, tensor.sum(axis=other))


def joint_matrix(q: Distribution) -> np.ndarray:
    """Mass of a feature×label distribution as a |X|×|Y| matrix."""
    if not q.space.is_factorized or len(q.space.factors) != 2:
        raise SpaceError("expected a two-factor (feature, label) space")
    x_space, y_space = q.space.factors
    return np.asarray(q.mass).reshape(len(x_space), len(y_space))


def conditional(
    q: Distribution,
    target: int,
    given: int,
    fallback: str | Distribution = "uniform",
) -> Transition:
    """T_{W|V}: row v is q(w | v); rows with zero given-mass use ``fallback``."""
    from grrm.transitions import Transition  # lazy import to avoid circular refs

    tensor = _factor_tensor(q)
    n = tensor.ndim
    given_axis, target_axis = given % n, target % n
    if given_axis == target_axis:
        raise SpaceError("target and given components must differ")
    other = tuple(a for a in range(n) if a not in (given_axis, target_axis))
    joint = tensor.sum(axis=other) if other else tensor
    if given_axis > target_axis:
        joint = joint.T
    source, dest = q.space.component(given), q.space.component(target)

    if isinstance(fallback, Distribution):
        if fallback.space != dest:
            raise SpaceError("fallback row must be a distribution over the target component")
        fallback_row = np.asarray(fallback.mass)
    elif fallback == "uniform":
        fallback_row = np.full(len(dest), 1.0 / len(dest))
    else:
        raise SpaceError(f"unknown fallback {fallback!r}")

    row_mass = joint.sum(axis=1)
    kernel = np.empty_like(joint, dtype=float)
    for row, total in enumerate(row_mass):
        if total > 0:
            kernel[row] = joint[row] / total
        else:
            kernel[row] = fallback_row
    return Transition(source, dest, kernel)


def _rule_lookup(rule: Rule) -> Callable[[Element], Element]:
    if isinstance(rule, Mapping):
        return rule.__getitem__
    return rule


def expected_loss(q: Distribution, rule: Rule, loss: LossMatrix) -> float:
    """Risk Σ_{x,y} q(x,y) L(rule(x), y) of a deterministic rule."""
    matrix = joint_matrix(q)
    x_space, y_space = q.space.factors
    if loss.true != y_space:
        raise SpaceError("loss true-label space does not match the label factor")
    decide = _rule_lookup(rule)
    true_columns = [loss.true.index(y) for y in y_space.elements]
    risk = 0.0
    for row, x in enumerate(x_space.elements):
        if matrix[row].sum() <= 0:
            continue
        try:
            predicted = decide(x)
        except (KeyError, IndexError):
            raise SpaceError(f"rule is undefined on feature {x!r}") from None
        losses = loss.values[loss.predicted.index(predicted), true_columns]
        risk += float(matrix[row] @ losses)
    return risk
