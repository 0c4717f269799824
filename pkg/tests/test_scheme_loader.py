import numpy as np
import pytest
from pydantic import ValidationError

from grrm.errors import DataError, SchemeError, SpaceError
from grrm.harness.config import SchemeSpec, SolveConfig
from grrm.harness.scheme_loader import build_problem, build_scheme
from grrm.objective import NormChoice


def _spec(triples, **extra):
    return SchemeSpec.model_validate({"feature_components": [["a", "b"]], "triples": triples, **extra})


def test_standard_and_unlabeled_with_auto_weights():
    s = build_scheme(
        _spec(
            [
                {"kind": "standard", "samples": [["a", 1], ["a", 1], ["b", -1], ["a", -1]]},
                {"kind": "unlabeled", "samples": [["a"]]},
            ]
        )
    )
    assert [t.kind for t in s.triples] == ["standard", "unlabeled"]
    np.testing.assert_allclose(s.weights, [2 / 3, 1 / 3])
    assert s.test_space.elements[0] == (("a",), -1)


def test_noisy_labels_from_rates_and_explicit_weights():
    s = build_scheme(
        _spec(
            [{"kind": "noisy-labels", "samples": [["a", 1]], "rho_minus": 0.1, "rho_plus": 0.3}],
            weights=[2.0],
        )
    )
    np.testing.assert_allclose(s.triples[0].test_to_bridge.kernel[:2, :2], [[0.9, 0.1], [0.3, 0.7]])
    assert s.weights.tolist() == [2.0]


def test_noisy_labels_need_rates():
    with pytest.raises(SchemeError):
        build_scheme(_spec([{"kind": "noisy-labels", "samples": [["a", 1]]}]))


def test_privileged_training_components():
    s = build_scheme(
        _spec(
            [
                {
                    "kind": "privileged",
                    "samples": [["a", "hi", 1], ["b", "lo", -1]],
                    "training_components": [["a", "b"], ["lo", "hi"]],
                    "keep": [0],
                }
            ]
        )
    )
    triple = s.triples[0]
    assert len(triple.training_space) == 8
    assert triple.bridged_data()[(("a",), 1)] == pytest.approx(0.5)


def test_missing_feature_and_precise_labels():
    spec = SchemeSpec.model_validate(
        {
            "feature_components": [["x", "o"], ["s", "l"]],
            "triples": [
                {"kind": "standard", "samples": [["x", "s", 1]]},
                {"kind": "missing-feature", "component": 0, "samples": [["l", -1]]},
                {
                    "kind": "precise-labels",
                    "fine_labels": ["neg", "pos"],
                    "refinement": {"neg": -1, "pos": 1},
                    "samples": [["o", "l", "pos"]],
                },
            ],
        }
    )
    s = build_scheme(spec)
    assert s.triples[1].bridged_data()[("l", -1)] == 1.0
    assert s.triples[2].bridged_data()[(("o", "l"), 1)] == 1.0


def test_coarse_labels_from_subsets():
    s = build_scheme(_spec([{"kind": "coarse-labels", "samples": [["a", [-1, 1]], ["b", [1]]]}]))
    assert len(s.triples[0].training_space) == 6


def test_sample_files_resolve_against_the_config_directory(tmp_path):
    (tmp_path / "samples.csv").write_text("x,y\na,1\nb,-1\n")
    s = build_scheme(_spec([{"kind": "standard", "samples": "samples.csv"}]), tmp_path)
    assert s.triples[0].sample_count == 2


def test_bad_samples():
    with pytest.raises(DataError):
        build_scheme(_spec([{"kind": "standard", "samples": [["a"]]}]))
    with pytest.raises(SpaceError):
        build_scheme(_spec([{"kind": "standard", "samples": [["c", 1]]}]))


def test_scheme_spec_validation():
    with pytest.raises(ValidationError):
        _spec([{"kind": "standard", "samples": [["a", 1]]}], weights="equal")
    with pytest.raises(ValidationError):
        _spec([{"kind": "standard", "samples": [["a", 1]]}], weights=[1.0, 2.0])
    with pytest.raises(ValidationError):
        _spec([{"kind": "telepathy", "samples": []}])


def test_build_problem_options(tmp_path):
    (tmp_path / "stat.csv").write_text("element,t\n(a)|-1,0\n(a)|1,1\n(b)|-1,0\n(b)|1,1\n")
    config = SolveConfig.model_validate(
        {
            "scheme": _spec([{"kind": "standard", "samples": [["a", 1], ["b", -1]]}]).model_dump(),
            "lambda": 0.5,
            "norm": "euclidean",
            "statistic_files": ["stat.csv"],
            "marginal_pin": [0.5, 0.5],
        }
    )
    problem = build_problem(config, tmp_path)
    assert problem.lam == 0.5
    assert problem.norm is NormChoice.euclidean
    assert problem.statistics[0].dim == 1
    assert problem.marginal_pin.mass.tolist() == [0.5, 0.5]
