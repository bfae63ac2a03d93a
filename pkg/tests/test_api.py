import pytest
from fastapi.testclient import TestClient

from app.init import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


def test_root_and_health(client):
    body = client.get("/").json()
    assert body["code"] == 200
    assert body["data"]["app_name"] == "JitterLab"
    health = client.get("/health").json()["data"]
    assert health["status"] == "healthy"
    assert "numpy" in health["packages"]


def test_drs_endpoint(client):
    body = client.post("/v1/jitter/drs", json={"E1": 56.0, "E2": 56.1, "E3": 50.6}).json()
    assert body["code"] == 200
    data = body["data"]
    assert (data["sigma_n_ps"], data["sigma_a_ps"], data["sigma_b_ps"]) == (43.1, 35.7, 35.9)
    assert data["valid"] is True


def test_drs_endpoint_flags_negative_radicand(client):
    data = client.post("/v1/jitter/drs", json={"E1": 10, "E2": 10, "E3": 30}).json()["data"]
    assert data["valid"] is False
    assert "sigma_n" in data["flags"]


def test_player_split_endpoint(client):
    data = client.post("/v1/jitter/player-split", json={"sigma_n2": 43.1, "sigma_n3": 33.5}).json()["data"]
    assert data["dev_j_ps"] == pytest.approx(19.7)
    assert data["dev_npi_scaled_ps"] == pytest.approx(38.35, abs=0.06)


def test_recorder_split_endpoint(client):
    payload = {"E5": 63.7, "E6": 63.1, "E7": 61.9, "E8": 110.6, "sigma_n2": 43.1}
    data = client.post("/v1/jitter/recorder-split", json=payload).json()["data"]
    assert data["dev_api_l_scaled_ps"] == pytest.approx(44.2)
    assert data["dev_api_r_scaled_ps"] == pytest.approx(43.3)
    assert data["dev_ajitter_scaled_ps"] == pytest.approx(15.7)


def test_detection_limit_endpoint(client):
    data = client.get("/v1/jitter/detection-limit").json()["data"]
    assert data["j_lsb_ps"] == pytest.approx(1.7567, abs=1e-4)
    error = client.get("/v1/jitter/detection-limit", params={"bit_depth": 1}).json()
    assert error["code"] == 422


def test_negative_statistic_is_rejected(client):
    assert client.post("/v1/jitter/drs", json={"E1": -1, "E2": 1, "E3": 1}).status_code == 422


def test_runs_endpoint(client, tmp_path):
    body = client.post("/v1/jitter/runs", json={
        "command": "simulate", "scenario": "dummy", "output_dir": str(tmp_path),
    }).json()
    assert body["code"] == 200
    assert body["data"]["exit_code"] == 0
    assert (tmp_path / "dummy.wav").exists()


def test_runs_endpoint_reports_domain_error(client, tmp_path):
    body = client.post("/v1/jitter/runs", json={
        "command": "analyze", "inputs": [str(tmp_path / "missing.wav")], "output_dir": str(tmp_path),
    }).json()
    assert body["code"] == 404
    assert body["data"]["error"]["error"] == "not_found"
