"""Command line: solve, diagnose-erm, experiment, inspect and serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import uvicorn
from pydantic import ValidationError

from api.database import record_run

from grrm import schemes
from grrm.classify import evaluate, export_weights, posterior_rule
from grrm.errors import GrrmError
from grrm.harness.config import (
    ExperimentConfig,
    ExperimentKind,
    SolveConfig,
    config_fingerprint,
    load_json,
    load_settings,
)
from grrm.harness.experiments import run_experiment
from grrm.harness.output import write_distribution, write_summary, write_table
from grrm.harness.scheme_loader import build_problem, build_scheme, load_test_samples, samples_in_test_space
from grrm.objective import NormChoice
from grrm.solver import assemble_program, erm_backprojection, solve, to_lp_format

logger = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_NOT_OPTIMAL = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grrm", description="Generalized robust risk minimization")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default from GRRM_LOG_LEVEL)")
    commands = parser.add_subparsers(dest="command", required=True)

    solve_cmd = commands.add_parser("solve", help="solve one GRRM problem from a JSON config")
    solve_cmd.add_argument("--config", type=Path, required=True)
    solve_cmd.add_argument("--lambda", dest="lam", type=float, default=None)
    solve_cmd.add_argument("--norm", choices=[n.value for n in NormChoice], default=None)
    solve_cmd.add_argument("--out", type=Path, default=None)
    solve_cmd.add_argument("--dump-lp", type=Path, default=None, help="write the program in LP format")
    solve_cmd.add_argument("--evaluate", type=Path, default=None, help="CSV of labeled test samples to score the rule on")
    solve_cmd.add_argument("--record", action="store_true", help="store the run in the registry")

    diagnose = commands.add_parser("diagnose-erm", help="back-project the empirical data of every triple")
    diagnose.add_argument("--config", type=Path, required=True)

    experiment = commands.add_parser("experiment", help="run a study")
    experiment.add_argument("kind", choices=[k.value for k in ExperimentKind])
    experiment.add_argument("--config", type=Path, default=None)
    experiment.add_argument("--lambda", dest="lam", default=None, help="one value or a comma-separated grid")
    experiment.add_argument("--norm", choices=[n.value for n in NormChoice], default=None)
    experiment.add_argument("--seed", type=int, default=None)
    experiment.add_argument("--reps", type=int, default=None)
    experiment.add_argument("--workers", type=int, default=None)
    experiment.add_argument("--out", type=Path, default=None)
    experiment.add_argument("--record", action="store_true", help="store the run in the registry")

    inspect = commands.add_parser("inspect", help="describe configured objects")
    inspect.add_argument("what", choices=["scheme"])
    inspect.add_argument("--config", type=Path, required=True)

    serve = commands.add_parser("serve", help="start the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _solve_config(path: Path) -> SolveConfig:
    data = load_json(path)
    return SolveConfig.model_validate(data.get("solve", data))


def _record(kind: str, fingerprint: str, out: Path, summary: dict) -> None:
    run = record_run(kind=kind, fingerprint=fingerprint, output_dir=str(out), summary=summary)
    print(f"recorded run {run.id}")


# -------------------- Commands --------------------
def cmd_solve(args, settings) -> int:
    config = _solve_config(args.config)
    updates = {}
    if args.lam is not None:
        updates["lam"] = args.lam
    if args.norm is not None:
        updates["norm"] = NormChoice(args.norm)
    config = SolveConfig.model_validate({**config.model_dump(), **updates})
    problem = build_problem(config, args.config.parent)
    if args.dump_lp is not None:
        args.dump_lp.parent.mkdir(parents=True, exist_ok=True)
        args.dump_lp.write_text(to_lp_format(assemble_program(problem)), encoding="utf-8")
        logger.info("wrote %s", args.dump_lp)
    solution = solve(problem)

    summary = solution.summary()
    summary["kind"] = "solve"
    summary["lambda"] = config.lam
    summary["norm"] = config.norm.value
    summary["fingerprint"] = fingerprint = config_fingerprint(config)
    print(f"status:     {solution.status.value}")
    print(f"objective:  {solution.objective:.10g}")
    print(f"entropy:    {solution.entropy:.10g}")
    for i, term in enumerate(solution.discrepancy_terms):
        print(f"triple {i}:   discrepancy {term:.10g}  residual {solution.residuals[i]:.2e}")

    out = args.out or settings.output_dir / "solve"
    if solution.q_star is not None:
        write_distribution(solution.q_star, out / "q_star.csv", fingerprint)
        for i, witness in enumerate(solution.witnesses):
            write_distribution(witness, out / f"witness_{i}.csv", fingerprint)
        rule = posterior_rule(solution.q_star, problem.scheme.loss)
        write_table(rule.to_frame(), out / "rule.csv", fingerprint)
        samples = samples_in_test_space(config.scheme, args.config.parent)
        if samples:
            weights = export_weights(solution.q_star, samples)
            write_table(weights.to_frame(), out / "weights.csv", fingerprint)
            summary["samples_outside_support"] = weights.outside_support
        if args.evaluate is not None:
            report = evaluate(rule, load_test_samples(config.scheme, args.evaluate), problem.scheme.loss)
            write_table(report.to_frame(), out / "evaluation.csv", fingerprint)
            summary["test_accuracy"] = report.accuracy
            print(f"accuracy:   {report.accuracy:.6g} on {report.n} test samples")
    write_summary(summary, out / "summary.json")
    if args.record:
        _record("solve", fingerprint, out, summary)
    return 0 if solution.is_optimal else EXIT_NOT_OPTIMAL


def cmd_diagnose(args, settings) -> int:
    scheme = build_scheme(_solve_config(args.config).scheme, args.config.parent)
    for i, triple in enumerate(scheme.triples):
        try:
            report = erm_backprojection(triple)
        except GrrmError as exc:
            print(f"triple {i} ({triple.kind}): not applicable: {exc}")
            continue
        if not report.has_negative_mass:
            print(f"triple {i} ({triple.kind}): back-projection is a distribution")
            continue
        print(f"triple {i} ({triple.kind}): {len(report.negative_entries)} negative entries, minimum {report.minimum:.6g}")
        for element, mass in sorted(report.negative_entries.items(), key=lambda item: item[1]):
            print(f"  {element!r}: {mass:.6g}")
    return 0


def cmd_experiment(args, settings) -> int:
    data = load_json(args.config) if args.config is not None else {}
    data["kind"] = args.kind
    overrides = {
        "lambda_grid": args.lam,
        "norm": args.norm,
        "seed": args.seed,
        "reps": args.reps,
        "workers": args.workers,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.config is not None and isinstance(data.get("dataset"), dict):
        path = Path(data["dataset"]["path"])
        if not path.is_absolute():
            data["dataset"]["path"] = str(args.config.parent / path)
    config = ExperimentConfig.model_validate(data)

    result = run_experiment(config)
    out = args.out or config.out or settings.output_dir / config.kind.value
    fingerprint = config.fingerprint()
    write_table(result.table, out / "results.csv", fingerprint)
    write_table(result.raw, out / "raw.csv", fingerprint)
    if result.comparisons is not None:
        write_table(result.comparisons, out / "comparisons.csv", fingerprint)
    write_summary(result.summary, out / "summary.json")
    print(result.table.to_string(index=False))
    if result.comparisons is not None:
        print()
        print(result.comparisons.to_string(index=False))
    if args.record:
        _record(config.kind.value, fingerprint, out, result.summary)
    return 0


def cmd_inspect(args, settings) -> int:
    scheme = build_scheme(_solve_config(args.config).scheme, args.config.parent)
    print(json.dumps(schemes.describe(scheme), indent=2))
    return 0


def cmd_serve(args, settings) -> int:
    uvicorn.run("api.main:app", host=args.host, port=args.port, log_level=settings.log_level.lower())
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "diagnose-erm": cmd_diagnose,
    "experiment": cmd_experiment,
    "inspect": cmd_inspect,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    settings = load_settings()
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, settings)
    except (GrrmError, ValidationError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
