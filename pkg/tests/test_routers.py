import httpx
import pytest
from fastapi.testclient import TestClient

from main import app

client = TestClient(app)

SCALAR = {"A": [[-1.0]], "b": [2.0], "c": [3.0]}


class TestService:
    def test_root_lists_endpoints(self):
        response = client.get("/")
        assert response.status_code == 200
        assert response.json()["endpoints"]["identify"] == "/identify"

    def test_health(self):
        body = client.get("/health").json()
        assert body["status"] == "healthy"
        assert "scalar-lti" in body["models"]

    def test_unknown_path(self):
        response = client.get("/no-such-endpoint")
        assert response.status_code == 404
        assert response.json()["detail"] == "No endpoint at /no-such-endpoint"


class TestModels:
    def test_list(self):
        ids = [m["id"] for m in client.get("/models").json()["models"]]
        assert ids[0] == "scalar-lti"
        assert len(ids) == 5

    def test_detail(self):
        body = client.get("/models/lambda-system").json()
        assert body["default_params"] == {"lambda": 1.0, "a_tot": 2.0}
        assert body["model_file"]["rhs"]["x"] == "-lambda*x + u^2"
        assert body["closed_forms"] == ["zero", "step", "pulse", "ramp"]

    def test_unknown_model(self):
        response = client.get("/models/nope")
        assert response.status_code == 404
        assert response.json()["detail"] == "Unknown model id 'nope'"


class TestSimulation:
    def test_simulate(self):
        response = client.post("/simulate", json={
            "model_id": "scalar-lti", "params": {"a": 2.0}, "signal": "step:1", "span": [0, 1], "h": 0.01,
        })
        assert response.status_code == 200
        body = response.json()
        assert body["state_names"] == ["x"]
        assert body["times"][-1] == 1.0
        assert body["outputs"][-1] == pytest.approx((1.0 - 2.718281828459045 ** -2) / 2.0, abs=1e-8)

    def test_inline_model_file(self):
        response = client.post("/simulate", json={
            "model_file": {"states": ["x"], "params": {"k": 1.0}, "rhs": {"x": "-k*x + u"}, "output": "x"},
            "signal": "pulse:1,0,0.5", "span": [0, 1], "h": 0.05,
        })
        assert response.status_code == 200
        assert 0.5 in response.json()["times"]

    def test_csv_download(self):
        response = client.post("/simulate/csv", json={
            "model_id": "lambda-system", "signal": "ramp:1", "span": [0, 1], "h": 0.1,
        })
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/csv")
        assert "trajectory.csv" in response.headers["content-disposition"]
        lines = response.text.splitlines()
        assert lines[0] == "t,u,y,x_x,x_z"
        assert len(lines) == 12

    def test_unknown_model(self):
        response = client.post("/simulate", json={"model_id": "nope", "signal": "step:1"})
        assert response.status_code == 404

    def test_bad_model_file(self):
        response = client.post("/simulate", json={
            "model_file": {"states": ["x"], "rhs": {"x": "-q*x"}, "output": "x"}, "signal": "step:1",
        })
        assert response.status_code == 400

    def test_bad_signal(self):
        response = client.post("/simulate", json={"model_id": "scalar-lti", "signal": "wave:1"})
        assert response.status_code == 422

    def test_needs_exactly_one_model_source(self):
        response = client.post("/simulate", json={"signal": "step:1"})
        assert response.status_code == 422


class TestLinearAnalysis:
    def test_gain(self):
        response = client.post("/lti/gain", json=SCALAR)
        assert response.status_code == 200
        assert response.json()["gain"] == 6.0

    def test_singular_gain(self):
        response = client.post("/lti/gain", json={"A": [[0.0]], "b": [1.0], "c": [1.0]})
        assert response.status_code == 422

    def test_dimension_mismatch(self):
        response = client.post("/lti/gain", json={"A": [[-1.0]], "b": [1.0, 2.0], "c": [1.0]})
        assert response.status_code == 422

    def test_equivalence(self):
        response = client.post("/lti/equivalence", json={
            "first": SCALAR, "second": {"A": [[-1.0]], "b": [6.0], "c": [1.0]},
        })
        body = response.json()
        assert body["equivalent"] is True
        assert body["T"] == [[3.0]]

    def test_not_equivalent(self):
        response = client.post("/lti/equivalence", json={
            "first": SCALAR, "second": {"A": [[-2.0]], "b": [1.0], "c": [1.0]},
        })
        assert response.json() == {"equivalent": False, "T": None, "residual": None}

    def test_responses(self):
        response = client.post("/lti/response", json={"system": SCALAR, "t_end": 1.0, "h": 0.1})
        body = response.json()
        assert len(body["times"]) == 11
        assert body["impulse"][0] == 6.0
        assert body["step"][0] == 0.0


class TestIdentify:
    def test_step_hides_lambda(self):
        response = client.post("/identify", json={
            "model_id": "lambda-system", "signal": "step:1", "span": [0, 2], "h": 0.01, "sigma_noise": 0.1,
        })
        assert response.status_code == 200
        body = response.json()
        assert body["param_names"] == ["lambda", "a_tot"]
        assert body["rank"] == 1
        assert body["crb"][0] is None
        assert body["crb"][1] == pytest.approx(0.01 / len_grid(0.0, 2.0, 0.01))

    def test_unknown_free_parameter(self):
        response = client.post("/identify", json={
            "model_id": "scalar-lti", "signal": "step:1", "span": [0, 1], "h": 0.01, "free": ["q"],
        })
        assert response.status_code == 422


def len_grid(t0: float, t1: float, h: float) -> int:
    return int(round((t1 - t0) / h)) + 1


@pytest.mark.asyncio
async def test_models_over_async_client():
    async with httpx.AsyncClient(app=app, base_url="http://test") as async_client:
        response = await async_client.get("/models/scalar-lti")
    assert response.status_code == 200
    assert response.json()["default_params"] == {"a": 1.0, "b": 1.0, "c": 1.0}
