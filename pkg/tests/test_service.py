from __future__ import annotations

import io
import time

import pytest
from fastapi.testclient import TestClient
from PIL import Image as PILImage

from layerbench.elo import load_ledger
from layerbench.service import create_app
from layerbench.synthetic import (
    generate_dataset,
    write_corrupted_predictions,
    write_identity_predictions,
)


@pytest.fixture()
def setup(tmp_path):
    manifest_path = generate_dataset(tmp_path / "data", n_samples=3, seed=4)
    pred_root = tmp_path / "preds"
    write_identity_predictions(manifest_path, pred_root, "alpha")
    write_corrupted_predictions(manifest_path, pred_root, "beta", strength=0.3, seed=2, k=3)
    ledger_path = tmp_path / "study.ndjson"
    return manifest_path, pred_root, ledger_path


@pytest.fixture()
def client(setup):
    manifest_path, pred_root, ledger_path = setup
    app = create_app(manifest_path, pred_root, ledger_path, lease_ttl=300.0)
    with TestClient(app) as c:
        c.ledger_path = ledger_path
        yield c


def _token(client, annotator="ann-1"):
    resp = client.post("/api/session", json={"annotator_id": annotator})
    assert resp.status_code == 200
    return resp.json()["token"]


def test_session_token_issued(client):
    token = _token(client)
    assert isinstance(token, str) and len(token) == 32


def test_leaderboard_fresh(client):
    rows = client.get("/api/leaderboard").json()
    assert {r["model_id"] for r in rows} == {"alpha", "beta"}
    assert all(r["rating"] == 1500.0 and r["matches"] == 0 for r in rows)


def test_match_next_hides_models(client):
    token = _token(client)
    match = client.get("/api/match/next", params={"token": token}).json()
    assert set(match) >= {"match_id", "sample_id", "image_url", "a", "b", "expires_at"}
    assert match["a"]["label"] == "A" and match["b"]["label"] == "B"
    blob = str(match)
    assert "alpha" not in blob and "beta" not in blob


def test_match_requires_token(client):
    resp = client.get("/api/match/next", params={"token": "bogus"})
    assert resp.status_code == 401


def test_vote_roundtrip_updates_elo(client):
    token = _token(client)
    match = client.get("/api/match/next", params={"token": token}).json()
    resp = client.post(
        "/api/match/result",
        json={"token": token, "match_id": match["match_id"], "outcome": "a"},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["ok"] is True and body["new_leaderboard_version"] == 1
    rows = {r["model_id"]: r for r in client.get("/api/leaderboard").json()}
    ratings = sorted(r["rating"] for r in rows.values())
    assert ratings == [1484.0, 1516.0]


def test_result_unknown_match_409(client):
    token = _token(client)
    resp = client.post(
        "/api/match/result", json={"token": token, "match_id": "nope", "outcome": "a"}
    )
    assert resp.status_code == 409
    assert resp.json()["error"] == "StaleLease"


def test_double_submit_second_409(client):
    token = _token(client)
    match = client.get("/api/match/next", params={"token": token}).json()
    payload = {"token": token, "match_id": match["match_id"], "outcome": "tie"}
    assert client.post("/api/match/result", json=payload).status_code == 200
    assert client.post("/api/match/result", json=payload).status_code == 409


def test_expired_lease_409(setup):
    manifest_path, pred_root, ledger_path = setup
    app = create_app(manifest_path, pred_root, ledger_path, lease_ttl=0.0)
    with TestClient(app) as client:
        token = _token(client)
        match = client.get("/api/match/next", params={"token": token}).json()
        time.sleep(0.02)
        resp = client.post(
            "/api/match/result",
            json={"token": token, "match_id": match["match_id"], "outcome": "a"},
        )
        assert resp.status_code == 409


def test_previews_and_assets_are_pngs(client):
    token = _token(client)
    match = client.get("/api/match/next", params={"token": token}).json()
    for url in (match["a"]["preview_url"], match["b"]["preview_url"], match["image_url"]):
        resp = client.get(url)
        assert resp.status_code == 200
        img = PILImage.open(io.BytesIO(resp.content))
        assert img.size[0] > 0


def test_preview_still_served_after_vote(client):
    token = _token(client)
    match = client.get("/api/match/next", params={"token": token}).json()
    client.post(
        "/api/match/result",
        json={"token": token, "match_id": match["match_id"], "outcome": "a"},
    )
    resp = client.get(match["b"]["preview_url"])
    assert resp.status_code == 200
    assert resp.content[:4] == b"\x89PNG"


def test_asset_path_traversal_blocked(client):
    resp = client.get("/api/asset/../../etc/passwd")
    assert resp.status_code in (403, 404)


def test_sample_endpoint(client):
    samples = client.get("/api/samples").json()
    sid = samples[0]["id"]
    detail = client.get(f"/api/sample/{sid}").json()
    assert detail["id"] == sid
    assert all("preview_url" in layer for layer in detail["layers"])
    assert client.get("/api/sample/missing").status_code == 404


def test_quality_flow_reproduces_audit(client):
    token = _token(client)
    samples = client.get("/api/samples").json()
    targets = [(s["id"], layer["id"]) for s in samples for layer in s["layers"]]
    labels = ["good", "neutral", "poor", "good", "good"]
    submitted = {}
    for (sid, lid), quality in zip(targets, labels):
        resp = client.post(
            "/api/quality",
            json={
                "token": token, "sample_id": sid, "layer_id": lid,
                "quality": quality, "salient": True, "occluded": False,
            },
        )
        assert resp.status_code == 200
        submitted[(sid, lid)] = quality
    report = client.get("/api/report/quality").json()
    fg = report["audit"]["foreground"]
    from collections import Counter

    want = Counter(submiter for submiter in submitted.values())
    assert fg["good"] >= want["good"]  # overrides applied on top of manifest labels
    assert report["n_annotations"] == len(submitted)


def test_passrate_flow_roundtrip(client):
    token = _token(client)
    samples = client.get("/api/samples").json()
    keys = [(s["id"], layer["id"]) for s in samples for layer in s["layers"]][:4]
    for i, (sid, lid) in enumerate(keys):
        resp = client.post(
            "/api/passrate",
            json={
                "token": token, "sample_id": sid, "layer_id": lid,
                "model_id": "beta", "k": 3, "satisfied": i < 3,
            },
        )
        assert resp.status_code == 200
    report = client.get("/api/report/passrate", params={"model_id": "beta", "k": 3}).json()
    assert report["passrate"] == 0.75
    assert report["n_samples"] == 4
    missing = client.get("/api/report/passrate", params={"model_id": "beta", "k": 9})
    assert missing.status_code == 400


def test_prediction_index_lists_k(client):
    preds = client.get("/api/predictions").json()
    assert set(preds) == {"alpha", "beta"}
    assert all(n == 3 for n in preds["beta"].values())
    assert all(n == 1 for n in preds["alpha"].values())


def test_restart_preserves_outcomes(setup):
    manifest_path, pred_root, ledger_path = setup
    app = create_app(manifest_path, pred_root, ledger_path)
    with TestClient(app) as client:
        token = _token(client)
        for _ in range(5):
            match = client.get("/api/match/next", params={"token": token}).json()
            client.post(
                "/api/match/result",
                json={"token": token, "match_id": match["match_id"], "outcome": "b"},
            )
        before = {r["model_id"]: r["rating"] for r in client.get("/api/leaderboard").json()}

    ledger = load_ledger(ledger_path)
    assert len(ledger.history) == 5

    app2 = create_app(manifest_path, pred_root, ledger_path)
    with TestClient(app2) as client:
        after = {r["model_id"]: r["rating"] for r in client.get("/api/leaderboard").json()}
    assert after == pytest.approx(before, abs=1e-9)
