"""Probabilistic transformations between finite spaces.

A ``Transition`` is a row-stochastic kernel K with rows indexed by the source
space and columns by the target space; it acts on distributions by
R(w) = Σ_v K(v, w) Q(v). Serial composition is the matrix product and
parallel composition the Kronecker product, both in the lexicographic index
order fixed by ``grrm.finite``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from grrm.errors import DataError, SpaceError, TransitionError
from grrm.finite import Distribution, Element, FiniteSpace, make_space, product_space

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12
INPUT_SLACK = 1e-9

ElementMap = Union[Mapping[Element, Element], Callable[[Element], Element]]
SetMap = Union[Mapping[Element, Iterable[Element]], Callable[[Element], Iterable[Element]]]


def _normalized_rows(kernel: np.ndarray, slack: float) -> np.ndarray:
    kernel = np.array(kernel, dtype=float)
    if kernel.ndim != 2:
        raise TransitionError(f"kernel must be a matrix, got {kernel.ndim} dimensions")
    if not np.all(np.isfinite(kernel)):
        raise TransitionError("kernel entries must be finite")
    if kernel.size and kernel.min() < -ROW_TOLERANCE:
        raise TransitionError(f"negative kernel entry {kernel.min():.3e}")
    kernel = np.clip(kernel, 0.0, None)
    sums = kernel.sum(axis=1)
    worst = np.max(np.abs(sums - 1.0)) if sums.size else 0.0
    if worst > slack:
        raise TransitionError(f"kernel row sums deviate from 1 by {worst:.3e}")
    return kernel / sums[:, None]


@dataclass(frozen=True, eq=False)
class Transition:
    source: FiniteSpace
    target: FiniteSpace
    kernel: np.ndarray

    def __post_init__(self) -> None:
        kernel = _normalized_rows(self.kernel, ROW_TOLERANCE)
        if kernel.shape != (len(self.source), len(self.target)):
            raise TransitionError(
                f"kernel shape {kernel.shape} does not match "
                f"({len(self.source)}, {len(self.target)})"
            )
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)

    @property
    def shape(self) -> tuple[int, int]:
        return self.kernel.shape

    def is_identity(self, atol: float = 0.0) -> bool:
        return (
            self.source == self.target
            and bool(np.allclose(self.kernel, np.eye(len(self.source)), rtol=0, atol=atol))
        )

    def equivalent(self, other: Transition, atol: float = 1e-12) -> bool:
        return (
            self.source == other.source
            and self.target == other.target
            and bool(np.allclose(self.kernel, other.kernel, rtol=0, atol=atol))
        )


def identity(space: FiniteSpace) -> Transition:
    return Transition(space, space, np.eye(len(space)))


def from_matrix(source: FiniteSpace, target: FiniteSpace, kernel) -> Transition:
    """Validate a user kernel; rows within 1e-9 of stochastic are renormalized."""
    kernel = np.array(kernel, dtype=float)
    if kernel.shape != (len(source), len(target)):
        raise TransitionError(
            f"kernel shape {kernel.shape} does not match ({len(source)}, {len(target)})"
        )
    return Transition(source, target, _normalized_rows(kernel, INPUT_SLACK))


def apply(t: Transition, q: Distribution) -> Distribution:
    if q.space != t.source:
        raise SpaceError("distribution space does not match the transition source")
    return Distribution(t.target, t.kernel.T @ q.mass)


def serial(t1: Transition, t2: Transition) -> Transition:
    if t1.target != t2.source:
        raise SpaceError("serial composition needs t1.target == t2.source")
    return Transition(t1.source, t2.target, _normalized_rows(t1.kernel @ t2.kernel, INPUT_SLACK))


def parallel(*transitions: Transition) -> Transition:
    """T1 ⊗ T2 ⊗ ...: kernel K1(v1,w1)·K2(v2,w2)·... over flat product tuples."""
    if not transitions:
        raise TransitionError("parallel composition of zero transitions")
    source = product_space(*(t.source for t in transitions))
    target = product_space(*(t.target for t in transitions))
    kernel = reduce(np.kron, (t.kernel for t in transitions))
    return Transition(source, target, _normalized_rows(kernel, INPUT_SLACK))


def _as_callable(mapping):
    if isinstance(mapping, Mapping):
        return mapping.__getitem__
    return mapping


def deterministic(source: FiniteSpace, target: FiniteSpace, f: ElementMap) -> Transition:
    image = _as_callable(f)
    kernel = np.zeros((len(source), len(target)))
    for row, v in enumerate(source.elements):
        try:
            w = image(v)
        except KeyError:
            raise TransitionError(f"map is undefined on {v!r}") from None
        if w not in target:
            raise TransitionError(f"image {w!r} of {v!r} is outside the target space")
        kernel[row, target.index(w)] = 1.0
    return Transition(source, target, kernel)


def set_valued(source: FiniteSpace, target: FiniteSpace, f: SetMap) -> Transition:
    """Row v is uniform on the set f(v)."""
    image = _as_callable(f)
    kernel = np.zeros((len(source), len(target)))
    for row, v in enumerate(source.elements):
        try:
            members = {target.index(w) for w in image(v)}
        except KeyError:
            raise TransitionError(f"map is undefined on {v!r}") from None
        except SpaceError as exc:
            raise TransitionError(f"image of {v!r} leaves the target space: {exc}") from None
        if not members:
            raise TransitionError(f"empty image set for {v!r}")
        kernel[row, sorted(members)] = 1.0 / len(members)
    return Transition(source, target, kernel)


def projection(space: FiniteSpace, keep: Sequence[int]) -> Transition:
    """Deterministic projection of a factorized space onto the ``keep`` components.

    Keeping one component maps onto that factor itself; keeping several maps
    onto the flat product of those factors.
    """
    if not space.is_factorized:
        raise SpaceError("projection needs a factorized space")
    keep = tuple(keep)
    if not keep:
        raise TransitionError("projection must keep at least one component")
    factors = [space.component(k) for k in keep]
    if len(keep) == 1:
        (k,) = keep
        return deterministic(space, factors[0], lambda e: e[k])
    target = product_space(*factors)
    return deterministic(space, target, lambda e: tuple(e[k] for k in keep))


BINARY_LABELS = make_space((-1, 1))


def label_noise(rho_minus: float, rho_plus: float, labels: FiniteSpace | None = None) -> Transition:
    """Binary label flips: row −1 is (1−ρ−, ρ−), row +1 is (ρ+, 1−ρ+)."""
    labels = labels if labels is not None else BINARY_LABELS
    if len(labels) != 2:
        raise TransitionError("two-rate label noise needs a binary label space")
    if not (0.0 <= rho_minus <= 1.0 and 0.0 <= rho_plus <= 1.0):
        raise TransitionError(f"noise rates must lie in [0, 1], got ({rho_minus}, {rho_plus})")
    if rho_minus + rho_plus >= 1.0:
        raise TransitionError("label noise needs rho_minus + rho_plus < 1 to stay invertible")
    kernel = [[1.0 - rho_minus, rho_minus], [rho_plus, 1.0 - rho_plus]]
    return Transition(labels, labels, kernel)


def symbol_noise(space: FiniteSpace, eta: float) -> Transition:
    """Keep each symbol with probability 1−η, otherwise flip uniformly to another one."""
    if not 0.0 <= eta <= 1.0:
        raise TransitionError(f"flip probability must lie in [0, 1], got {eta}")
    k = len(space)
    if k == 1:
        return identity(space)
    kernel = np.full((k, k), eta / (k - 1))
    np.fill_diagonal(kernel, 1.0 - eta)
    return Transition(space, space, kernel)


def componentwise_noise(space: FiniteSpace, eta: float) -> Transition:
    """Independent ``symbol_noise`` on every component of a factorized space."""
    if not space.is_factorized:
        return symbol_noise(space, eta)
    return parallel(*(symbol_noise(factor, eta) for factor in space.factors))


def to_csv(t: Transition, path: str | Path) -> None:
    frame = pd.DataFrame(t.kernel, index=t.source.keys(), columns=t.target.keys())
    frame.index.name = "source"
    frame.to_csv(path, float_format="%.17g")


def from_csv(path: str | Path, source: FiniteSpace, target: FiniteSpace) -> Transition:
    frame = pd.read_csv(path, dtype=str)
    if frame.shape[1] < 2:
        raise DataError(f"{path}: kernel CSV needs a source column and target columns")
    frame = frame.set_index(frame.columns[0])
    missing_rows = set(source.keys()) - set(frame.index)
    missing_cols = set(target.keys()) - set(frame.columns)
    if missing_rows or missing_cols:
        raise DataError(
            f"{path}: missing rows {sorted(missing_rows)} / columns {sorted(missing_cols)}"
        )
    kernel = frame.loc[source.keys(), target.keys()].astype(float).to_numpy()
    return from_matrix(source, target, kernel)
