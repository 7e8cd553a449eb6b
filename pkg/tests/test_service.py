import numpy as np
import pytest

from catebench import dgp
from catebench.service import InProcessClient, create_app

FAST_OVERRIDES = {
    "forest_trees": 6,
    "forest_max_depth": 4,
    "boost_rounds": 8,
    "lasso_n_lambdas": 6,
}


@pytest.fixture
def client():
    with InProcessClient(create_app()) as c:
        yield c


class TestHealthAndCatalog:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_scenarios_match_catalog(self, client):
        body = client.get("/scenarios").json()
        assert [row["id"] for row in body] == list(dgp.SCENARIO_IDS)
        a = body[0]
        assert a["n"] == 2000 and a["p"] == 20 and a["propensity"] == "random_balanced"


class TestSimulate:
    def test_writes_csv(self, client, tmp_path):
        out = tmp_path / "data.csv"
        body = client.post("/simulate", json={
            "scenario": "G", "seed": 5, "out_path": str(out),
        }).json()
        assert body["rows"] == 500
        header = out.read_text().splitlines()[0]
        assert header.endswith("d,y,tau_true,e_true")

    def test_matches_library(self, client, tmp_path):
        out = tmp_path / "data.csv"
        client.post("/simulate", json={"scenario": "G", "seed": 5, "out_path": str(out)})
        train, _ = dgp.simulate(dgp.scenario("G"), seed=5)
        table = np.loadtxt(out, delimiter=",", skiprows=1)
        assert np.allclose(table[:, :20], train.x)
        assert np.array_equal(table[:, 20], train.d)

    def test_unknown_scenario(self, client, tmp_path):
        response = client.post("/simulate", json={
            "scenario": "Q", "seed": 0, "out_path": str(tmp_path / "x.csv"),
        })
        assert response.status_code == 404


class TestRuns:
    def test_small_run(self, client, tmp_path):
        response = client.post("/runs", json={
            "scenarios": ["G"], "learners": ["r"], "strategies": ["naive"],
            "replications": 1, "test_size": 40, "seed": 3,
            "output_dir": str(tmp_path / "run"),
            "learner_overrides": FAST_OVERRIDES,
        })
        assert response.status_code == 200
        body = response.json()
        assert body["ok"] and body["cells"] == 1
        assert body["rows"][0]["estimator"] == "naive"
        assert body["rows"][0]["mean_mse"] > 0

    def test_invalid_config_lists_field_errors(self, client):
        response = client.post("/runs", json={
            "scenarios": ["A"], "learners": ["t"], "strategies": ["double_split"],
        })
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert isinstance(detail, list)
        assert any("double_split" in msg for msg in detail)


class TestRender:
    def test_round_trip(self, client, tmp_path):
        run_body = client.post("/runs", json={
            "scenarios": ["G"], "learners": ["t"], "strategies": ["naive"],
            "replications": 1, "test_size": 40, "seed": 4,
            "output_dir": str(tmp_path / "run"),
            "learner_overrides": FAST_OVERRIDES,
        }).json()
        out = tmp_path / "tables.md"
        body = client.post("/render", json={
            "results_csv": run_body["results_path"], "out_path": str(out),
        }).json()
        assert body["path"] == str(out)
        assert "| estimator |" in out.read_text()

    def test_missing_file(self, client):
        response = client.post("/render", json={"results_csv": "/does/not/exist.csv"})
        assert response.status_code == 404
