import numpy as np
import pytest

from grrm import schemes
from grrm.errors import SchemeError, SolverError
from grrm.finite import Distribution, LossMatrix, empirical_distribution, make_space, product_space
from grrm.objective import NormChoice, general_entropy, zero_one_entropy
from grrm.solver import (
    GrrmProblem,
    SolveStatus,
    UncertaintySpec,
    assemble_program,
    erm_backprojection,
    feasibility_probe,
    feature_support,
    solve,
    solve_rrm,
    to_lp_format,
    uncertainty_membership,
    weighted_discrepancy,
)


def _standard_problem(test_space, samples, lam, **options):
    s = schemes.scheme(test_space, [schemes.standard(test_space, samples)])
    return GrrmProblem.build(s, lam, **options)


def _simplex_grid(parts, steps):
    """All points of the probability simplex with coordinates in multiples of 1/steps."""
    points = []

    def fill(prefix, left, slots):
        if slots == 1:
            points.append(prefix + [left])
            return
        for k in range(left + 1):
            fill(prefix + [k], left - k, slots - 1)

    fill([], steps, parts)
    return np.array(points, dtype=float) / steps


def test_layout_of_a_standard_triple(test_space, small_samples):
    program = assemble_program(_standard_problem(test_space, small_samples, 0.1))
    assert program.layout.size == 11
    assert program.is_linear
    assert program.linear.a_eq.shape[1] == 11


def test_sum_abs_adds_split_variables(test_space, small_samples):
    problem = _standard_problem(test_space, small_samples, 0.1, norm=NormChoice.sum_abs)
    assert assemble_program(problem).layout.size == 11 + 4


def test_lp_export_names_every_block(test_space, small_samples):
    text = to_lp_format(assemble_program(_standard_problem(test_space, small_samples, 0.1)))
    assert text.startswith("\\ GRRM program\nMinimize\n")
    for name in ("q_0", "w0_3", "m_1", "s_0"):
        assert name in text
    assert text.rstrip().endswith("End")


def test_rrm_equals_grrm_with_the_standard_triple(test_space, small_samples):
    empirical = empirical_distribution(small_samples, test_space)
    rrm = solve_rrm(empirical, 0.2)
    grrm = solve(_standard_problem(test_space, small_samples, 0.2))
    assert rrm.is_optimal and grrm.is_optimal
    assert rrm.objective == pytest.approx(grrm.objective, abs=1e-8)
    np.testing.assert_allclose(rrm.q_star.mass, grrm.q_star.mass, atol=1e-8)


def test_small_lambda_reproduces_the_data(test_space, small_samples):
    solution = solve(_standard_problem(test_space, small_samples, 1e-6))
    assert solution.is_optimal
    np.testing.assert_allclose(
        solution.q_star.mass, empirical_distribution(small_samples, test_space).mass, atol=1e-6
    )
    assert solution.residuals[0] < 1e-6


def test_large_lambda_maximizes_entropy(test_space, small_samples):
    solution = solve(_standard_problem(test_space, small_samples, 1e3))
    assert solution.is_optimal
    assert solution.entropy == pytest.approx(0.5, abs=1e-6)
    assert solution.entropy == pytest.approx(zero_one_entropy(solution.q_star))


def test_noisy_labels_solution_beats_a_simplex_grid(test_space, small_samples):
    lam = 0.3
    s = schemes.scheme(test_space, [schemes.noisy_labels(test_space, 0.1, 0.3, small_samples)])
    problem = GrrmProblem.build(s, lam, restrict_support=False)
    solution = solve(problem)
    assert solution.is_optimal

    recomputed = weighted_discrepancy(solution.q_star, problem) - lam * zero_one_entropy(solution.q_star)
    assert recomputed == pytest.approx(solution.objective, abs=1e-7)

    triple = s.triples[0]
    grid = _simplex_grid(4, 100)
    bridged = grid @ triple.test_to_bridge.kernel
    gaps = np.abs(bridged - triple.bridged_data().mass).max(axis=1)
    entropy = 1.0 - grid.reshape(-1, 2, 2).max(axis=2).sum(axis=1)
    grid_objective = gaps - lam * entropy
    assert recomputed <= grid_objective.min() + 1e-8
    assert grid_objective.min() - recomputed <= 0.025


def test_every_norm_certifies_on_a_semi_supervised_scheme(test_space, small_samples):
    s = schemes.default_weights(schemes.semi_supervised(test_space, small_samples, ["a", "b", "b"]))
    for norm in (NormChoice.max_abs, NormChoice.sum_abs):
        solution = solve(GrrmProblem.build(s, 0.1, "one-hot-affine", norm=norm))
        assert solution.is_optimal, solution.message
        assert max(solution.residuals) < 1e-6
        assert len(solution.witnesses) == 2


def test_euclidean_norm_on_a_single_feature():
    test_space = product_space(make_space(["only"]), make_space((-1, 1)))
    samples = [("only", -1)] * 7 + [("only", 1)] * 3
    solution = solve(_standard_problem(test_space, samples, 0.1, norm=NormChoice.euclidean))
    assert solution.status is SolveStatus.optimal, solution.message
    assert solution.objective == pytest.approx(-0.03, abs=1e-6)
    np.testing.assert_allclose(solution.q_star.mass, [0.7, 0.3], atol=1e-5)


def test_marginal_pin_fixes_the_feature_marginal(test_space, small_samples, features):
    pin = Distribution(features, [0.5, 0.5])
    solution = solve(_standard_problem(test_space, small_samples, 0.1, marginal_pin=pin))
    assert solution.is_optimal
    np.testing.assert_allclose(solution.q_star.mass.reshape(2, 2).sum(axis=1), [0.5, 0.5], atol=1e-8)


def test_feature_support_drops_unseen_features():
    features = make_space(["a", "b", "c"])
    test_space = product_space(features, make_space((-1, 1)))
    s = schemes.scheme(test_space, [schemes.standard(test_space, [("a", 1), ("b", -1)])])
    np.testing.assert_array_equal(feature_support(s), [True, True, False])
    solution = solve(GrrmProblem.build(s, 0.1))
    assert solution.support_restricted
    assert solution.q_star[("c", 1)] == pytest.approx(0.0, abs=1e-12)


def test_solution_summary_keys(test_space, small_samples):
    summary = solve(_standard_problem(test_space, small_samples, 0.1)).summary()
    assert summary["status"] == "optimal"
    assert set(summary) == {
        "status",
        "objective",
        "entropy",
        "discrepancies",
        "feasibility_residuals",
        "gap",
        "support_restricted",
        "message",
    }


def test_problem_validation(test_space, small_samples):
    s = schemes.scheme(test_space, [schemes.standard(test_space, small_samples)])
    with pytest.raises(SolverError):
        GrrmProblem.build(s, 0.0)
    with pytest.raises(SolverError):
        GrrmProblem(s, 0.1, ())
    with pytest.raises(SolverError):
        UncertaintySpec(0.0)


def test_uncertainty_set_membership(test_space, small_samples):
    problem = _standard_problem(test_space, small_samples, 0.1)
    empirical = empirical_distribution(small_samples, test_space)
    spec = UncertaintySpec(0.1)
    assert weighted_discrepancy(empirical, problem) == 0.0
    assert uncertainty_membership(empirical, problem, spec)
    assert not uncertainty_membership(Distribution.point_mass(test_space, ("b", 1)), problem, spec)


def test_uniform_probe(test_space, small_samples):
    s = schemes.scheme(test_space, [schemes.noisy_labels(test_space, 0.1, 0.3, small_samples)])
    assert feasibility_probe(s)


@pytest.mark.parametrize("n, expected", [(10, -0.05), (100, -0.005)])
def test_lone_observed_positive_back_projects_minus_rho_plus_share_onto_its_negative(test_space, n, expected):
    samples = [("a", 1)] + [("b", -1)] * (n - 1)
    triple = schemes.noisy_labels(test_space, 0.1, 0.3, samples)
    report = erm_backprojection(triple)
    assert report.has_negative_mass
    assert report.measure[("a", -1)] == pytest.approx(expected)
    assert report.minimum <= expected
    assert report.measure.mass.sum() == pytest.approx(1.0)


def test_lone_observed_negative_back_projects_minus_rho_minus_share_onto_its_positive(test_space):
    samples = [("a", -1)] + [("b", 1)] * 9
    report = erm_backprojection(schemes.noisy_labels(test_space, 0.1, 0.3, samples))
    assert report.measure[("a", 1)] == pytest.approx(-1 / 60)


def test_back_projection_needs_an_identity_training_map(test_space):
    extended = product_space(test_space.factors[0], make_space(["lo", "hi"]))
    triple = schemes.privileged(test_space, extended, [(("a", "lo"), 1)])
    with pytest.raises(SchemeError):
        erm_backprojection(triple)


def test_general_loss_enters_the_entropy(test_space, labels, small_samples):
    loss = LossMatrix(labels, labels, [[0, 2], [1, 0]])
    s = schemes.scheme(test_space, [schemes.standard(test_space, small_samples)], loss)
    solution = solve(GrrmProblem.build(s, 0.1))
    assert solution.is_optimal
    assert solution.entropy == pytest.approx(general_entropy(solution.q_star, loss))


def _random_scheme(rng):
    """Two or three features (the third never observed), one or two standard/noisy-label triples."""
    features = make_space(["a", "b", "c"][: int(rng.integers(2, 4))])
    test_space = product_space(features, make_space((-1, 1)))
    triples = []
    for _ in range(int(rng.integers(1, 3))):
        samples = [
            (("a", "b")[int(rng.integers(2))], (-1, 1)[int(rng.integers(2))])
            for _ in range(int(rng.integers(3, 9)))
        ]
        if rng.random() < 0.5:
            triples.append(schemes.standard(test_space, samples))
        else:
            rho_minus, rho_plus = rng.uniform(0.0, 0.3, size=2)
            triples.append(schemes.noisy_labels(test_space, rho_minus, rho_plus, samples))
    s = schemes.scheme(test_space, triples)
    return schemes.default_weights(s) if len(triples) > 1 else s


@pytest.mark.parametrize("seed", range(50))
def test_random_instances_match_a_simplex_grid_on_the_feature_support(seed):
    rng = np.random.default_rng(seed)
    s = _random_scheme(rng)
    lam = float(rng.uniform(0.05, 0.5))
    problem = GrrmProblem.build(s, lam)
    solution = solve(problem)
    assert solution.is_optimal, solution.message
    recomputed = weighted_discrepancy(solution.q_star, problem) - lam * zero_one_entropy(solution.q_star)
    assert recomputed == pytest.approx(solution.objective, abs=1e-7)

    n_x = len(s.feature_space)
    columns = np.flatnonzero(np.repeat(feature_support(s), 2))
    steps = 100
    sub = _simplex_grid(len(columns), steps)
    grid = np.zeros((len(sub), 2 * n_x))
    grid[:, columns] = sub
    objective = -lam * (1.0 - grid.reshape(-1, n_x, 2).max(axis=2).sum(axis=1))
    for triple in s.triples:
        bridged = grid @ triple.test_to_bridge.kernel
        objective += triple.weight * np.abs(bridged - triple.bridged_data().mass).max(axis=1)

    # rounding a point of the simplex to the grid moves it by at most this much in L1
    rounding = 2 * (len(columns) // 2) / steps
    assert recomputed <= objective.min() + 1e-7
    assert objective.min() - recomputed <= (s.weights.sum() + lam) * rounding + 1e-9


@pytest.mark.parametrize("seed", range(50))
def test_rrm_equals_grrm_on_random_standard_instances(seed):
    rng = np.random.default_rng(1000 + seed)
    features = make_space(["a", "b", "c"][: int(rng.integers(1, 4))])
    test_space = product_space(features, make_space((-1, 1)))
    samples = [test_space.elements[int(j)] for j in rng.integers(len(test_space), size=int(rng.integers(1, 12)))]
    lam = float(rng.uniform(0.01, 1.0))
    rrm = solve_rrm(empirical_distribution(samples, test_space), lam)
    grrm = solve(_standard_problem(test_space, samples, lam))
    assert rrm.is_optimal and grrm.is_optimal
    assert rrm.objective == pytest.approx(grrm.objective, abs=1e-8)


@pytest.mark.parametrize("noisy", [False, True])
def test_optimal_entropy_grows_with_lambda(test_space, small_samples, noisy):
    if noisy:
        s = schemes.scheme(test_space, [schemes.noisy_labels(test_space, 0.1, 0.3, small_samples)])
    else:
        s = schemes.scheme(test_space, [schemes.standard(test_space, small_samples)])
    entropies = []
    for lam in (1e-3, 1e-2, 0.1, 0.3, 1.0, 10.0):
        solution = solve(GrrmProblem.build(s, lam))
        assert solution.is_optimal
        entropies.append(solution.entropy)
    assert all(later >= earlier - 1e-7 for earlier, later in zip(entropies, entropies[1:]))
    assert entropies[-1] == pytest.approx(0.5, abs=1e-6)
