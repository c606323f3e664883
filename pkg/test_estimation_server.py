"""
測試估計 HTTP 服務：健康檢查、請求驗證與錯誤碼
"""
import pytest

import estimation_server
from estimation_server import app, estimate_from_payload


@pytest.fixture
def client():
    app.config["TESTING"] = True
    with app.test_client() as c:
        yield c


def test_health(client):
    response = client.get("/")
    assert response.status_code == 200
    assert b"Running" in response.data


def test_quadratic_estimate(client):
    body = {
        "increments": [1.0, 2.0, -0.5],
        "u": 1.0,
        "alpha": 6,
        "functional": {"kind": "quadratic"},
        "theta_bounds": [[0.0, 10.0]],
    }
    response = client.post("/estimate", json=body)
    assert response.status_code == 200
    payload = response.get_json()
    assert payload["theta_hat"][0] == pytest.approx(3.5, abs=1e-5)
    assert payload["sigma_hat"][0][0] == pytest.approx(0.0, abs=1e-9)


def test_dividend_estimate_stays_in_theta():
    result = estimate_from_payload({
        "increments": [0.5, -0.2, 0.8, 0.1, -0.4, 0.6],
        "h": 0.5,
        "alpha": 10,
        "functional": {"kind": "dividend", "xi": -2.0, "theta_max": 4.0, "epsilon": 0.2},
        "optimizer": {"grid_points": 12},
        "covariance": False,
    })
    assert -2.0 <= result["theta_hat"][0] <= 4.0
    assert result["sigma_hat"] is None


@pytest.mark.parametrize("body", [
    {},
    {"increments": [1.0], "functional": {"kind": "nope"}},
    {"increments": [1.0], "functional": {"kind": "quadratic"}},
    {"increments": [1.0], "theta_bounds": [[2.0, 1.0]]},
    {"increments": [1.0], "h": -1.0},
])
def test_bad_requests(client, body):
    response = client.post("/estimate", json=body)
    assert response.status_code == 400
    assert "error" in response.get_json()


def test_options_preflight(client):
    assert client.open("/estimate", method="OPTIONS").status_code == 200


def test_module_header_names_the_service():
    lines = estimation_server.__doc__.strip().splitlines()
    assert lines[0] == "Estimation Server" and len(lines) == 2
