"""Noise-sweep, learning-curve and benchmark studies on boards or ingested tables.

Every task draws its randomness from ``task_rng(seed, *index)`` so results do
not depend on the number of workers or on task order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from grrm import schemes
from grrm.classify import PosteriorRule, corrected_accuracy, evaluate, posterior_rule
from grrm.errors import DataError, SolverError
from grrm.finite import FiniteSpace, empirical_distribution, product_space, zero_one_loss
from grrm.harness.config import NAMED_WINDOWS, ExperimentConfig, ExperimentKind
from grrm.harness.data import IngestedData, ingest_csv, inject_noise, read_table
from grrm.harness.tictactoe import (
    board_test_space,
    endgame_corpus,
    window_positions,
    window_space,
    windowed,
)
from grrm.solver import GrrmProblem, solve
from grrm.transitions import Transition, componentwise_noise, identity, label_noise, parallel, projection

logger = logging.getLogger(__name__)

CURVE_TYPES = ("standard", "noisy-labels", "domain-adaptation", "privileged")
BENCHMARK_SCENARIOS = ("noisy-labels", "semi-supervised")


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    kind: ExperimentKind
    table: pd.DataFrame
    raw: pd.DataFrame
    comparisons: pd.DataFrame | None = None
    summary: dict = field(default_factory=dict)


# -------------------- Shared pieces --------------------
def task_rng(seed: int, *index: int) -> np.random.Generator:
    return np.random.default_rng([seed, *index])


def erm_rule(samples: Sequence[tuple], test_space: FiniteSpace) -> PosteriorRule:
    """Posterior-argmin rule of the empirical distribution, noise ignored."""
    loss = zero_one_loss(test_space.factors[1])
    return posterior_rule(empirical_distribution(samples, test_space), loss)


def grrm_rule(scheme: schemes.SupervisionScheme, lam: float, config: ExperimentConfig) -> PosteriorRule:
    problem = GrrmProblem.build(scheme, lam, config.statistic, norm=config.norm)
    solution = solve(problem)
    if solution.q_star is None:
        raise SolverError(f"GRRM solve at lambda={lam:g} ended {solution.status.value}: {solution.message}")
    if not solution.is_optimal:
        logger.warning("using a %s solution at lambda=%g", solution.status.value, lam)
    return posterior_rule(solution.q_star, scheme.loss)


def select_lambda(lambda_grid: Sequence[float], score: Callable[[float], float]) -> float:
    """Grid value with the highest validation score; ties go to the smallest λ."""
    if not lambda_grid:
        raise DataError("empty lambda grid")
    best, best_score = None, -np.inf
    for lam in sorted(lambda_grid):
        value = score(lam)
        if value > best_score:
            best, best_score = lam, value
    logger.debug("selected lambda=%g (validation accuracy %.4f)", best, best_score)
    return best


def split_validation(samples: Sequence, fraction: float, rng: np.random.Generator) -> tuple[list, list]:
    """(fit, validation); the validation part holds round(fraction·n) samples, at least one when n ≥ 2."""
    n = len(samples)
    held = min(max(int(round(fraction * n)), 1 if n >= 2 else 0), n - 1) if n else 0
    order = rng.permutation(n)
    validation = [samples[j] for j in sorted(order[:held])]
    fit = [samples[j] for j in sorted(order[held:])]
    return fit, validation


def _validated_lambda(
    config: ExperimentConfig,
    samples: Sequence,
    make_scheme: Callable[[list], schemes.SupervisionScheme],
    rng: np.random.Generator,
    prepare_validation: Callable[[list], list] = list,
    label_kernel: Transition | None = None,
) -> float:
    """λ with the best validation accuracy on a held-out part of ``samples``.

    With ``label_kernel`` the held-out labels are taken as noisy and scored by
    their unbiased clean-label accuracy.
    """
    if len(config.lambda_grid) == 1:
        return config.lambda_grid[0]
    fit, validation = split_validation(samples, config.validation_fraction, rng)
    if not validation or not fit:
        return min(config.lambda_grid)
    validation = prepare_validation(validation)
    fitted = make_scheme(fit)
    loss = fitted.loss

    def score(lam: float) -> float:
        rule = grrm_rule(fitted, lam, config)
        if label_kernel is not None:
            return corrected_accuracy(rule, validation, label_kernel)
        return evaluate(rule, validation, loss).accuracy

    return select_lambda(config.lambda_grid, score)


def _run_tasks(fn: Callable, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(fn, tasks)


def _sample_std(values: pd.Series) -> float:
    return float(values.std(ddof=1)) if len(values) > 1 else 0.0


def _aggregate(raw: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    grouped = raw.groupby(keys, sort=True)["accuracy"]
    table = grouped.agg(mean_accuracy="mean", std=_sample_std, reps="count").reset_index()
    return table.sort_values(keys, kind="stable").reset_index(drop=True)


def _means(table: pd.DataFrame, keys: list[str]) -> dict:
    return {"|".join(str(v) for v in row[keys]): float(row["mean_accuracy"]) for _, row in table.iterrows()}


# -------------------- Noise sweep --------------------
def _sweep_task(task: tuple) -> list[dict]:
    config, grid_index, rep = task
    rate = config.noise_grid[grid_index]
    rho_plus, rho_minus, eta = rate, config.rho_minus_ratio * rate, rate
    window = config.board.window
    test_space = board_test_space(window)
    features, labels = test_space.factors

    corpus = endgame_corpus()
    order = task_rng(config.seed, rep).permutation(len(corpus))
    boards = windowed([corpus[j] for j in order], window)
    train = boards[: config.train_size]
    test = boards[config.train_size : config.train_size + config.test_size]

    noise = task_rng(config.seed, rep, grid_index + 1)
    noisy_train = inject_noise(train, rho_minus, rho_plus, 0.0, noise)
    noisy_test = inject_noise(test, 0.0, 0.0, eta, noise)

    loss = zero_one_loss(labels)
    rows = []

    def record(method: str, accuracy: float, lam: float = float("nan")) -> None:
        rows.append(
            {
                "rho_plus": rho_plus,
                "rho_minus": rho_minus,
                "eta": eta,
                "rep": rep,
                "method": method,
                "accuracy": accuracy,
                "lambda": lam,
            }
        )

    record("benchmark", evaluate(erm_rule(train, test_space), test, loss).accuracy)
    record("naive", evaluate(erm_rule(noisy_train, test_space), noisy_test, loss).accuracy)

    label_kernel = label_noise(rho_minus, rho_plus, labels)
    feature_kernel = componentwise_noise(features, eta)

    def make_scheme(samples: list) -> schemes.SupervisionScheme:
        return schemes.scheme(test_space, [schemes.combined(test_space, label_kernel, feature_kernel, samples)])

    def corrupt_features(samples: list) -> list:
        return inject_noise(samples, 0.0, 0.0, eta, task_rng(config.seed, rep, grid_index + 1, 1))

    lam = _validated_lambda(
        config,
        noisy_train,
        make_scheme,
        task_rng(config.seed, rep, grid_index + 1, 2),
        corrupt_features,
        label_kernel=label_kernel,
    )
    rule = grrm_rule(make_scheme(noisy_train), lam, config)
    record("grrm", evaluate(rule, noisy_test, loss).accuracy, lam)
    return rows


def noise_sweep_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Benchmark, naive and GRRM accuracy with ρ+ = η on the grid and ρ− = ratio·ρ+.

    Training boards carry noisy labels and clean cells; test boards carry
    clean labels and cells misread with probability η.
    """
    if config.dataset is not None:
        raise DataError("the noise sweep runs on tic-tac-toe boards; datasets belong to the benchmark")
    tasks = [(config, g, rep) for g in range(len(config.noise_grid)) for rep in range(config.reps)]
    logger.info("noise sweep: %d grid points x %d reps", len(config.noise_grid), config.reps)
    raw = pd.DataFrame([row for rows in _run_tasks(_sweep_task, tasks, config.workers) for row in rows])
    raw = raw.sort_values(["rho_plus", "method", "rep"], kind="stable").reset_index(drop=True)
    table = _aggregate(raw, ["rho_plus", "rho_minus", "eta", "method"])
    summary = {
        "kind": ExperimentKind.noise_sweep.value,
        "fingerprint": config.fingerprint(),
        "reps": config.reps,
        "mean_accuracy": _means(table, ["rho_plus", "method"]),
    }
    return ExperimentResult(ExperimentKind.noise_sweep, table, raw, summary=summary)


# -------------------- Learning curves --------------------
def _curve_triples(config: ExperimentConfig, pools: dict, counts: tuple[int, ...]) -> list:
    window = config.board.window
    test_space = board_test_space(window)
    features, labels = test_space.factors
    rho_minus, rho_plus = config.curve_rates
    triples = []
    for kind, count in zip(CURVE_TYPES, counts):
        samples = pools[kind][:count]
        if kind == "standard":
            triples.append(schemes.standard(test_space, samples))
        elif kind == "noisy-labels":
            triples.append(schemes.noisy_labels(test_space, rho_minus, rho_plus, samples))
        elif kind == "domain-adaptation":
            column = NAMED_WINDOWS["middle-column"]
            shared = [c for c in window if c in column]
            if not shared:
                raise DataError(f"window {window} shares no cell with the middle column")
            train_features = window_space(column)
            repr_test = parallel(projection(features, window_positions(window, shared)), identity(labels))
            repr_train = parallel(projection(train_features, window_positions(column, shared)), identity(labels))
            triples.append(
                schemes.representation_adaptation(
                    test_space, product_space(train_features, labels), repr_test, repr_train, samples
                )
            )
        else:
            extended = NAMED_WINDOWS["all-but-corners"]
            if not set(window) <= set(extended):
                raise DataError(f"window {window} is not covered by the privileged cells {extended}")
            triples.append(
                schemes.privileged(
                    test_space, window_space(extended), samples, keep=window_positions(extended, window)
                )
            )
    return triples


def _curve_pools(config: ExperimentConfig, rep: int) -> tuple[dict, list]:
    corpus = endgame_corpus()
    order = task_rng(config.seed, rep, 0).permutation(len(corpus))
    pool = [corpus[j] for j in order[: config.pool_size]]
    test = windowed([corpus[j] for j in order[config.pool_size :]], config.board.window)
    rho_minus, rho_plus = config.curve_rates
    pools = {}
    for k, kind in enumerate(CURVE_TYPES):
        rng = task_rng(config.seed, rep, k + 1)
        boards = [pool[j] for j in rng.permutation(len(pool))]
        if kind == "standard":
            pools[kind] = windowed(boards, config.board.window)
        elif kind == "noisy-labels":
            pools[kind] = inject_noise(windowed(boards, config.board.window), rho_minus, rho_plus, 0.0, rng)
        elif kind == "domain-adaptation":
            pools[kind] = windowed(boards, NAMED_WINDOWS["middle-column"])
        else:
            pools[kind] = windowed(boards, NAMED_WINDOWS["all-but-corners"])
    return pools, test


def _curve_task(task: tuple) -> list[dict]:
    config, rep = task
    pools, test = _curve_pools(config, rep)
    test_space = board_test_space(config.board.window)
    loss = zero_one_loss(test_space.factors[1])
    lam = config.lambda_grid[0]
    accuracy_by_counts: dict[tuple[int, ...], float] = {}
    rows = []
    for k, kind in enumerate(CURVE_TYPES):
        for step in config.growth_steps:
            counts = tuple(
                config.base_per_type + (step if j == k else 0) for j in range(len(CURVE_TYPES))
            )
            if counts not in accuracy_by_counts:
                scheme = schemes.default_weights(
                    schemes.scheme(test_space, _curve_triples(config, pools, counts))
                )
                accuracy_by_counts[counts] = evaluate(grrm_rule(scheme, lam, config), test, loss).accuracy
            rows.append({"type_grown": kind, "added_samples": step, "rep": rep, "accuracy": accuracy_by_counts[counts]})
    return rows


def learning_curve_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Grow one data type at a time on top of a fixed base of every type.

    The four types are standard boards, boards with noisy labels, boards seen
    through the middle column (domain adaptation on the shared cells) and boards
    with privileged cells outside the window.
    """
    tasks = [(config, rep) for rep in range(config.reps)]
    logger.info("learning curves: %d reps, growth steps %s", config.reps, config.growth_steps)
    raw = pd.DataFrame([row for rows in _run_tasks(_curve_task, tasks, config.workers) for row in rows])
    raw = raw.sort_values(["type_grown", "added_samples", "rep"], kind="stable").reset_index(drop=True)
    table = _aggregate(raw, ["type_grown", "added_samples"])
    gains = {}
    for kind in CURVE_TYPES:
        curve = table[table["type_grown"] == kind].sort_values("added_samples")
        gains[kind] = float(curve["mean_accuracy"].iloc[-1] - curve["mean_accuracy"].iloc[0])
    summary = {
        "kind": ExperimentKind.learning_curve.value,
        "fingerprint": config.fingerprint(),
        "reps": config.reps,
        "lambda": config.lambda_grid[0],
        "accuracy_gain": gains,
    }
    return ExperimentResult(ExperimentKind.learning_curve, table, raw, summary=summary)


# -------------------- Benchmark --------------------
@dataclass(frozen=True, eq=False)
class _Split:
    test_space: FiniteSpace
    train: list
    test: list


def _split(config: ExperimentConfig, rows: Sequence[int], rep: int) -> _Split:
    """Train/test split of rep ``rep``; datasets are re-encoded on their training rows."""
    if config.dataset is not None:
        data: IngestedData = ingest_csv(config.dataset.path, config.dataset, train_rows=rows)
        return _Split(data.test_space, data.train, data.test)
    boards = windowed(endgame_corpus(), config.board.window)
    chosen = set(int(j) for j in rows)
    train = [boards[j] for j in rows]
    test = [b for j, b in enumerate(boards) if j not in chosen]
    return _Split(board_test_space(config.board.window), train, test)


def _row_count(config: ExperimentConfig) -> int:
    if config.dataset is None:
        return len(endgame_corpus())
    return len(read_table(config.dataset.path))


def _benchmark_task(task: tuple) -> list[dict]:
    config, scenario, rep, total = task
    rng = task_rng(config.seed, rep, BENCHMARK_SCENARIOS.index(scenario))
    order = rng.permutation(total)
    n_test = max(1, int(round(config.test_fraction * total)))
    train_rows = np.sort(order[n_test:])
    rows = []

    if scenario == "noisy-labels":
        split = _split(config, train_rows, rep)
        rho_minus, rho_plus = config.label_noise
        noisy = inject_noise(split.train, rho_minus, rho_plus, 0.0, rng)
        test_space = split.test_space
        loss = zero_one_loss(test_space.factors[1])

        def make_scheme(samples: list) -> schemes.SupervisionScheme:
            return schemes.scheme(test_space, [schemes.noisy_labels(test_space, rho_minus, rho_plus, samples)])

        baseline = evaluate(erm_rule(noisy, test_space), split.test, loss).accuracy
        lam = _validated_lambda(
            config, noisy, make_scheme, rng, label_kernel=label_noise(rho_minus, rho_plus, test_space.factors[1])
        )
        grrm = evaluate(grrm_rule(make_scheme(noisy), lam, config), split.test, loss).accuracy
    else:
        n_labeled = max(2, int(round(config.labeled_fraction * total)))
        n_unlabeled = int(round(config.unlabeled_fraction * total))
        if n_labeled + n_unlabeled > len(train_rows):
            raise DataError("labeled and unlabeled fractions exceed the training split")
        pool = order[n_test:]
        labeled_rows = np.sort(pool[:n_labeled])
        used_rows = np.sort(pool[: n_labeled + n_unlabeled])
        split = _split(config, used_rows, rep)
        position = {int(r): j for j, r in enumerate(used_rows)}
        labeled_set = set(int(r) for r in labeled_rows)
        labeled = [split.train[position[r]] for r in sorted(labeled_set)]
        unlabeled = [split.train[position[int(r)]][0] for r in used_rows if int(r) not in labeled_set]
        test_space = split.test_space
        loss = zero_one_loss(test_space.factors[1])

        def make_scheme(samples: list) -> schemes.SupervisionScheme:
            return schemes.default_weights(schemes.semi_supervised(test_space, samples, unlabeled))

        baseline = evaluate(erm_rule(labeled, test_space), split.test, loss).accuracy
        lam = _validated_lambda(config, labeled, make_scheme, rng)
        grrm = evaluate(grrm_rule(make_scheme(labeled), lam, config), split.test, loss).accuracy

    rows.append({"scenario": scenario, "rep": rep, "method": "erm", "accuracy": baseline, "lambda": float("nan")})
    rows.append({"scenario": scenario, "rep": rep, "method": "grrm", "accuracy": grrm, "lambda": lam})
    return rows


def paired_comparison(raw: pd.DataFrame, scenario: str, confidence: float = 0.95) -> dict:
    """Mean GRRM − ERM accuracy difference over reps with a t confidence interval."""
    part = raw[raw["scenario"] == scenario].pivot(index="rep", columns="method", values="accuracy")
    diff = (part["grrm"] - part["erm"]).to_numpy()
    n = len(diff)
    mean = float(diff.mean())
    if n > 1:
        half = float(stats.t.ppf(0.5 + confidence / 2, n - 1) * diff.std(ddof=1) / np.sqrt(n))
    else:
        half = float("nan")
    return {
        "scenario": scenario,
        "baseline": "erm",
        "mean_difference": mean,
        "ci_low": mean - half,
        "ci_high": mean + half,
        "reps": n,
    }


def benchmark_experiment(config: ExperimentConfig) -> ExperimentResult:
    """GRRM against ERM under label noise and under semi-supervision.

    Runs on the CSV dataset from the config, or on the tic-tac-toe boards seen
    through the configured window when no dataset is given.
    """
    total = _row_count(config)
    tasks = [(config, scenario, rep, total) for scenario in BENCHMARK_SCENARIOS for rep in range(config.reps)]
    logger.info("benchmark: %d rows, %d reps per scenario", total, config.reps)
    raw = pd.DataFrame([row for rows in _run_tasks(_benchmark_task, tasks, config.workers) for row in rows])
    raw = raw.sort_values(["scenario", "method", "rep"], kind="stable").reset_index(drop=True)
    table = _aggregate(raw, ["scenario", "method"])
    comparisons = pd.DataFrame([paired_comparison(raw, s) for s in BENCHMARK_SCENARIOS])
    summary = {
        "kind": ExperimentKind.benchmark.value,
        "fingerprint": config.fingerprint(),
        "reps": config.reps,
        "mean_accuracy": _means(table, ["scenario", "method"]),
        "comparisons": comparisons.to_dict(orient="records"),
    }
    return ExperimentResult(ExperimentKind.benchmark, table, raw, comparisons, summary)


EXPERIMENTS = {
    ExperimentKind.noise_sweep: noise_sweep_experiment,
    ExperimentKind.learning_curve: learning_curve_experiment,
    ExperimentKind.benchmark: benchmark_experiment,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return EXPERIMENTS[config.kind](config)
