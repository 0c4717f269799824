import json

import pytest
from fastapi.testclient import TestClient
from sqlalchemy.pool import StaticPool
from sqlmodel import Session, SQLModel, create_engine

from api.database import get_session
from api.main import app
from db.init import import_summaries

SCHEME = {
    "feature_components": [["a", "b"]],
    "triples": [{"kind": "standard", "samples": [["a", 1], ["a", 1], ["a", -1], ["b", -1]]}],
}


@pytest.fixture
def engine():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    SQLModel.metadata.create_all(engine)
    yield engine
    engine.dispose()


@pytest.fixture
def client(engine):
    def override_session():
        with Session(engine) as session:
            yield session

    app.dependency_overrides[get_session] = override_session
    yield TestClient(app)
    app.dependency_overrides.clear()


def test_solve_returns_the_rule_and_records(client):
    response = client.post("/solve/", json={"scheme": SCHEME, "lambda": 0.1, "record": True})
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "optimal"
    assert body["rule"] == {"a": 1, "b": -1}
    assert sum(body["q_star"].values()) == pytest.approx(1.0)
    assert body["run_id"] == 1

    run = client.get("/runs/1").json()
    assert run["kind"] == "solve"
    assert run["fingerprint"] == body["fingerprint"]


def test_solve_rejects_bad_schemes(client):
    bad = {"feature_components": [["a"]], "triples": [{"kind": "standard", "samples": [["z", 1]]}]}
    assert client.post("/solve/", json={"scheme": bad}).status_code == 422
    assert client.post("/solve/", json={"scheme": SCHEME, "lambda": 0}).status_code == 422


def test_diagnose_erm(client):
    scheme = {
        "feature_components": [["a", "b"]],
        "triples": [
            {"kind": "noisy-labels", "rho_minus": 0.1, "rho_plus": 0.3, "samples": [["a", 1]] + [["b", -1]] * 9},
            {"kind": "unlabeled", "samples": [["a"]]},
        ],
    }
    response = client.post("/solve/diagnose-erm", json={"scheme": scheme})
    assert response.status_code == 200
    first, second = response.json()
    assert first["applicable"] is True
    assert first["negative_entries"]["(a)|-1"] == pytest.approx(-0.05)
    assert second["applicable"] is False


def test_inspect_scheme(client):
    response = client.post("/schemes/inspect", json=SCHEME)
    assert response.status_code == 200
    assert response.json()[0]["sample_count"] == 4


def test_run_registry_crud(client):
    created = client.post("/runs/", json={"kind": "benchmark", "fingerprint": "abc", "note": "first"})
    assert created.status_code == 200
    run_id = created.json()["id"]
    client.post("/runs/", json={"kind": "noise-sweep", "fingerprint": "def"})

    assert [r["fingerprint"] for r in client.get("/runs/").json()] == ["abc", "def"]
    assert [r["fingerprint"] for r in client.get("/runs/", params={"kind": "noise-sweep"}).json()] == ["def"]
    assert client.post("/runs/", json={"kind": "nonsense", "fingerprint": "x"}).status_code == 422

    assert client.request("DELETE", "/runs/", json=[run_id]).json() == {"deleted": True}
    assert client.get(f"/runs/{run_id}").status_code == 404
    assert client.request("DELETE", "/runs/", json=[run_id]).status_code == 404


def test_import_summaries_skips_known_runs(tmp_path, engine):
    for name, summary in {
        "solve": {"kind": "solve", "fingerprint": "f1", "status": "optimal"},
        "sweep": {"kind": "noise-sweep", "fingerprint": "f2", "gap": None},
        "stray": {"kind": "unknown", "fingerprint": "f3"},
    }.items():
        (tmp_path / name).mkdir()
        (tmp_path / name / "summary.json").write_text(json.dumps(summary))
    assert import_summaries(tmp_path, bind=engine) == 2
    assert import_summaries(tmp_path, bind=engine) == 0
