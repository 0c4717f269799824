import numpy as np
import pytest

from grrm.errors import TransitionError
from grrm.finite import Distribution, make_space, product_space
from grrm.transitions import (
    BINARY_LABELS,
    apply,
    componentwise_noise,
    deterministic,
    from_csv,
    from_matrix,
    identity,
    label_noise,
    parallel,
    projection,
    serial,
    set_valued,
    symbol_noise,
    to_csv,
)


def _space(n, prefix="s"):
    return make_space([f"{prefix}{k}" for k in range(n)])


def _kernel(rows, cols, rng):
    kernel = rng.random((rows, cols))
    return kernel / kernel.sum(axis=1, keepdims=True)


def _distribution(space, rng):
    mass = rng.random(len(space))
    return Distribution(space, mass / mass.sum())


def test_identity_kernel_and_action(rng):
    space = _space(3)
    np.testing.assert_array_equal(identity(space).kernel, np.eye(3))
    q = _distribution(space, rng)
    assert apply(identity(space), q).allclose(q)


def test_from_matrix_validation():
    a, b = _space(2, "a"), _space(2, "b")
    assert from_matrix(a, b, [[0.9, 0.1], [0.3, 0.7]]).shape == (2, 2)
    with pytest.raises(TransitionError):
        from_matrix(a, b, [[1.1, -0.1], [0.5, 0.5]])
    with pytest.raises(TransitionError):
        from_matrix(a, b, [[0.5, 0.4], [0.5, 0.5]])


def test_label_noise_on_point_mass():
    noisy = apply(label_noise(0.1, 0.3), Distribution.point_mass(BINARY_LABELS, 1))
    np.testing.assert_allclose(noisy.mass, [0.3, 0.7])
    np.testing.assert_allclose(label_noise(0.1, 0.3).kernel, [[0.9, 0.1], [0.3, 0.7]])
    assert label_noise(0.0, 0.0).is_identity()
    with pytest.raises(TransitionError):
        label_noise(0.5, 0.5)


def test_constant_rows_map_everything_to_the_same_distribution(rng):
    source, target = _space(3), _space(4, "t")
    uniform = from_matrix(source, target, np.full((3, 4), 0.25))
    np.testing.assert_allclose(apply(uniform, _distribution(source, rng)).mass, 0.25)


def test_serial_and_parallel_are_stochastic_and_functorial(rng):
    for _ in range(200):
        n1, n2, n3 = rng.integers(1, 6, size=3)
        a, b, c = _space(n1, "a"), _space(n2, "b"), _space(n3, "c")
        t1 = from_matrix(a, b, _kernel(n1, n2, rng))
        t2 = from_matrix(b, c, _kernel(n2, n3, rng))
        composed = serial(t1, t2)
        np.testing.assert_allclose(composed.kernel.sum(axis=1), 1.0, atol=1e-10)
        q = _distribution(a, rng)
        np.testing.assert_allclose(apply(composed, q).mass, apply(t2, apply(t1, q)).mass, atol=1e-12)

        both = parallel(t1, t2)
        np.testing.assert_allclose(both.kernel.sum(axis=1), 1.0, atol=1e-10)
        q2 = _distribution(b, rng)
        joint = Distribution(product_space(a, b), np.kron(q.mass, q2.mass))
        expected = np.kron(apply(t1, q).mass, apply(t2, q2).mass)
        np.testing.assert_allclose(apply(both, joint).mass, expected, atol=1e-12)


def test_serial_neutral_elements(rng):
    a, b = _space(2, "a"), _space(3, "b")
    t = from_matrix(a, b, _kernel(2, 3, rng))
    assert serial(identity(a), t).equivalent(t)
    assert serial(t, identity(b)).equivalent(t)


def test_parallel_entries_are_products(rng):
    a, b = _space(2, "a"), _space(2, "b")
    k1, k2 = _kernel(2, 2, rng), _kernel(2, 2, rng)
    both = parallel(from_matrix(a, a, k1), from_matrix(b, b, k2))
    row = both.source.index(("a1", "b0"))
    col = both.target.index(("a0", "b1"))
    assert both.kernel[row, col] == pytest.approx(k1[1, 0] * k2[0, 1])
    assert parallel(identity(a), identity(b)).is_identity()


def test_deterministic_and_set_valued():
    a, b = _space(3, "a"), _space(2, "b")
    assert deterministic(a, a, lambda v: v).is_identity()
    constant = deterministic(a, b, lambda v: "b1")
    np.testing.assert_array_equal(constant.kernel, [[0, 1]] * 3)
    assert set_valued(a, a, lambda v: [v]).is_identity()
    np.testing.assert_allclose(set_valued(a, b, lambda v: b.elements).kernel, 0.5)
    with pytest.raises(TransitionError):
        deterministic(a, b, {"a0": "b0"})


def test_projection_marginalizes(rng):
    z = product_space(_space(3, "x"), BINARY_LABELS)
    q = _distribution(z, rng)
    onto_x = projection(z, (0,))
    assert onto_x.target == z.component(0)
    np.testing.assert_allclose(apply(onto_x, q).mass, q.mass.reshape(3, 2).sum(axis=1))
    pair = product_space(_space(2, "u"), _space(2, "v"), _space(2, "w"))
    assert projection(pair, (0, 2)).target == product_space(_space(2, "u"), _space(2, "w"))


def test_symbol_noise_and_cellwise_composition():
    cells = make_space(["x", "o"])
    assert symbol_noise(cells, 0.0).is_identity()
    np.testing.assert_allclose(symbol_noise(cells, 0.2).kernel, [[0.8, 0.2], [0.2, 0.8]])
    three = make_space(["x", "o", "b"])
    np.testing.assert_allclose(symbol_noise(three, 0.3).kernel[0], [0.7, 0.15, 0.15])

    board = product_space(three, three, three, three)
    per_cell = componentwise_noise(board, 0.1)
    single = symbol_noise(three, 0.1).kernel
    expected = np.kron(np.kron(np.kron(single, single), single), single)
    np.testing.assert_allclose(per_cell.kernel, expected)


def test_csv_round_trip_keeps_the_kernel(tmp_path):
    t = label_noise(0.1, 0.3)
    path = tmp_path / "kernel.csv"
    to_csv(t, path)
    assert from_csv(path, BINARY_LABELS, BINARY_LABELS).equivalent(t)
