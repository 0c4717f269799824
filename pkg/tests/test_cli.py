import json
from functools import partial

import numpy as np
import pandas as pd
import pytest
from sqlalchemy.pool import StaticPool
from sqlmodel import Session, create_engine, select

from api.database import record_run
from api.models.data_models import ExperimentRun
from grrm.finite import Distribution
from grrm.harness import cli
from grrm.harness.config import SolveConfig, config_fingerprint
from grrm.harness.output import json_safe, read_emitted_table, write_distribution, write_summary, write_table

SCHEME = {
    "feature_components": [["a", "b"]],
    "triples": [{"kind": "standard", "samples": [["a", 1], ["a", 1], ["a", -1], ["b", -1]]}],
}


@pytest.fixture
def solve_config(tmp_path):
    path = tmp_path / "solve.json"
    path.write_text(json.dumps({"scheme": SCHEME, "lambda": 0.1}))
    return path


@pytest.fixture
def engine():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    yield engine
    engine.dispose()


def test_table_fingerprint_round_trip(tmp_path):
    frame = pd.DataFrame({"x": ["a", "b"], "value": [0.1, 1 / 3]})
    path = write_table(frame, tmp_path / "nested" / "t.csv", "abc123")
    assert path.read_text().splitlines()[0] == "# config-sha256: abc123"
    fingerprint, back = read_emitted_table(path)
    assert fingerprint == "abc123"
    assert back["value"].tolist() == [0.1, 1 / 3]


def test_distribution_and_summary_writers(tmp_path, test_space):
    write_distribution(Distribution.uniform(test_space), tmp_path / "q.csv", "f")
    _, frame = read_emitted_table(tmp_path / "q.csv")
    assert frame["element"].tolist() == ["a|-1", "a|1", "b|-1", "b|1"]
    write_summary({"gap": float("inf"), "n": np.int64(3), "v": [np.float64(np.nan)]}, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text()) == {"gap": None, "n": 3, "v": [None]}


def test_json_safe():
    assert json_safe({1: (np.float32(0.5), float("-inf"))}) == {"1": [0.5, None]}


def test_solve_command_writes_results(tmp_path, solve_config, capsys):
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", str(solve_config), "--out", str(out)]) == 0
    assert "status:     optimal" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "optimal"
    assert summary["lambda"] == 0.1
    expected = config_fingerprint(SolveConfig.model_validate({"scheme": SCHEME, "lambda": 0.1}))
    assert summary["fingerprint"] == expected
    fingerprint, q = read_emitted_table(out / "q_star.csv")
    assert fingerprint == expected
    assert q["mass"].sum() == pytest.approx(1.0)
    _, rule = read_emitted_table(out / "rule.csv")
    assert dict(zip(rule["feature"], rule["label"])) == {"a": 1, "b": -1}
    assert (out / "witness_0.csv").exists()


def test_solve_overrides_and_nested_config(tmp_path):
    path = tmp_path / "nested.json"
    path.write_text(json.dumps({"solve": {"scheme": SCHEME}}))
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", str(path), "--lambda", "0.5", "--norm", "sum-abs", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["lambda"] == 0.5
    assert summary["norm"] == "sum-abs"


def test_solve_records_the_run(tmp_path, solve_config, engine, monkeypatch, capsys):
    monkeypatch.setattr(cli, "record_run", partial(record_run, bind=engine))
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", str(solve_config), "--out", str(out), "--record"]) == 0
    assert "recorded run 1" in capsys.readouterr().out
    with Session(engine) as session:
        run = session.exec(select(ExperimentRun)).one()
    assert run.kind == "solve"
    assert run.output_dir == str(out)
    assert run.summary["status"] == "optimal"


def test_diagnose_reports_negative_mass(tmp_path, capsys):
    scheme = {
        "feature_components": [["a", "b"]],
        "triples": [
            {
                "kind": "noisy-labels",
                "rho_minus": 0.1,
                "rho_plus": 0.3,
                "samples": [["a", 1]] + [["b", -1]] * 9,
            },
            {"kind": "standard", "samples": [["a", 1], ["b", 1]]},
            {"kind": "unlabeled", "samples": [["a"]]},
        ],
    }
    path = tmp_path / "noisy.json"
    path.write_text(json.dumps({"scheme": scheme}))
    assert cli.main(["diagnose-erm", "--config", str(path)]) == 0
    text = capsys.readouterr().out
    assert "triple 0 (noisy_labels): 2 negative entries, minimum -0.15" in text
    assert "triple 1 (standard): back-projection is a distribution" in text
    assert "triple 2 (unlabeled): not applicable" in text


def test_inspect_scheme(solve_config, capsys):
    assert cli.main(["inspect", "scheme", "--config", str(solve_config)]) == 0
    described = json.loads(capsys.readouterr().out)
    assert described[0]["kind"] == "standard"
    assert described[0]["test_to_bridge_shape"] == [4, 4]


def test_experiment_command(tmp_path, capsys):
    config = tmp_path / "sweep.json"
    config.write_text(json.dumps({"noise_grid": [0.0], "train_size": 40, "test_size": 60}))
    out = tmp_path / "sweep"
    args = ["experiment", "noise-sweep", "--config", str(config), "--reps", "1", "--lambda", "0.1", "--out", str(out)]
    assert cli.main(args) == 0
    fingerprint, table = read_emitted_table(out / "results.csv")
    assert set(table["method"]) == {"benchmark", "naive", "grrm"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["fingerprint"] == fingerprint
    assert (out / "raw.csv").exists()
    assert not (out / "comparisons.csv").exists()


def test_solve_writes_weights_evaluation_and_the_lp_dump(tmp_path, solve_config, capsys):
    out = tmp_path / "out"
    lp = tmp_path / "lp" / "program.lp"
    test_csv = tmp_path / "test.csv"
    test_csv.write_text("x,label\na,1\nb,-1\nb,1\n")
    args = ["solve", "--config", str(solve_config), "--out", str(out), "--dump-lp", str(lp), "--evaluate", str(test_csv)]
    assert cli.main(args) == 0
    assert "accuracy:   0.666667 on 3 test samples" in capsys.readouterr().out

    fingerprint, weights = read_emitted_table(out / "weights.csv")
    assert fingerprint == json.loads((out / "summary.json").read_text())["fingerprint"]
    assert list(weights.columns) == ["sample_index", "weight"]
    assert weights["sample_index"].tolist() == [0, 1, 2, 3]
    positive = weights["weight"][weights["weight"] > 0]
    assert positive.mean() == pytest.approx(1.0, abs=1e-12)

    _, report = read_emitted_table(out / "evaluation.csv")
    metrics = dict(zip(report["metric"], report["value"]))
    assert metrics["n"] == 3
    assert metrics["accuracy"] == pytest.approx(2 / 3)
    assert json.loads((out / "summary.json").read_text())["test_accuracy"] == pytest.approx(2 / 3)

    text = lp.read_text()
    assert text.startswith("\\ GRRM program\nMinimize\n")
    assert text.rstrip().endswith("End")


def test_experiment_files_are_byte_identical_across_runs(tmp_path):
    config = tmp_path / "sweep.json"
    config.write_text(json.dumps({"noise_grid": [0.0, 0.2], "train_size": 40, "test_size": 60, "reps": 2}))
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        args = ["experiment", "noise-sweep", "--config", str(config), "--lambda", "0.01,0.1", "--out", str(out)]
        assert cli.main(args) == 0
        outputs.append(out)
    for name in ("results.csv", "raw.csv", "summary.json"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_bad_config_exits_with_an_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"scheme": SCHEME, "lambda": -1}))
    assert cli.main(["solve", "--config", str(path)]) == 1
    assert "error:" in capsys.readouterr().err
