import numpy as np
import pytest
from fastapi.testclient import TestClient

from trimatte.config import TINY_BACKBONE
from trimatte.decoder import build_model
from trimatte.planes import Plane, encode_gray_png, encode_image_png, image_from_bytes
from trimatte.service import create_app

from conftest import fixed_trimap_samples


@pytest.fixture(scope="module")
def sample():
    return fixed_trimap_samples(1, 32, seed=50)[0]


@pytest.fixture(scope="module")
def client():
    model = build_model(TINY_BACKBONE, seed=13)
    app = create_app(model, max_pixels=128 * 128, max_sessions=3)
    with TestClient(app) as c:
        yield c


def make_session(client, sample) -> str:
    png = encode_image_png(sample.composite())
    resp = client.post("/sessions", content=png)
    assert resp.status_code == 201
    body = resp.json()
    assert body["width"] == 32 and body["height"] == 32
    return body["session_id"]


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_create_session_and_matte_round_trip(client, sample):
    sid = make_session(client, sample)
    trimap_png = encode_gray_png(sample.trimap)
    resp = client.post(f"/sessions/{sid}/matte", content=trimap_png)
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert float(resp.headers["X-Elapsed-Ms"]) > 0
    assert resp.headers["X-Strategy"] == "normal"
    alpha = image_from_bytes(resp.content)
    assert (alpha.height, alpha.width) == (32, 32)


def test_matte_grid_strategy_header(client, sample):
    sid = make_session(client, sample)
    resp = client.post(f"/sessions/{sid}/matte?strategy=grid",
                       content=encode_gray_png(sample.trimap))
    assert resp.status_code == 200
    assert resp.headers["X-Strategy"] == "grid"


def test_matte_rejects_bad_strategy(client, sample):
    sid = make_session(client, sample)
    resp = client.post(f"/sessions/{sid}/matte?strategy=turbo",
                       content=encode_gray_png(sample.trimap))
    assert resp.status_code == 422
    assert resp.json()["code"] == "bad_strategy"


def test_matte_unknown_session(client, sample):
    resp = client.post("/sessions/doesnotexist/matte",
                       content=encode_gray_png(sample.trimap))
    assert resp.status_code == 404
    assert resp.json()["code"] == "unknown_session"


def test_matte_rejects_garbage_bytes(client, sample):
    sid = make_session(client, sample)
    resp = client.post(f"/sessions/{sid}/matte", content=b"not a png")
    assert resp.status_code == 415
    assert resp.json()["code"] == "bad_image"


def test_matte_rejects_nontrimap_levels(client, sample):
    sid = make_session(client, sample)
    shades = np.full((32, 32), 37, dtype=np.uint8)
    plane = Plane(shades.astype(np.float32)[..., None] / 255.0)
    resp = client.post(f"/sessions/{sid}/matte", content=encode_gray_png(plane))
    assert resp.status_code == 422
    assert resp.json()["code"] == "bad_trimap"


def test_matte_rejects_dim_mismatch(client, sample):
    sid = make_session(client, sample)
    wrong = Plane(np.zeros((16, 16, 1), dtype=np.float32))
    resp = client.post(f"/sessions/{sid}/matte", content=encode_gray_png(wrong))
    assert resp.status_code == 422
    assert resp.json()["code"] == "dims_mismatch"


def test_create_session_rejects_garbage(client):
    resp = client.post("/sessions", content=b"nope")
    assert resp.status_code == 415
    resp = client.post("/sessions", content=b"")
    assert resp.status_code == 415


def test_create_session_rejects_oversize(client):
    big = Plane(np.zeros((160, 160, 3), dtype=np.float32))
    resp = client.post("/sessions", content=encode_image_png(big))
    assert resp.status_code == 413
    assert resp.json()["code"] == "too_large"


def test_composite_requires_matte_first(client, sample):
    sid = make_session(client, sample)
    bg = Plane(np.full((32, 32, 3), 0.25, dtype=np.float32))
    resp = client.post(f"/sessions/{sid}/composite",
                       content=encode_image_png(bg))
    assert resp.status_code == 409
    assert resp.json()["code"] == "no_alpha"


def test_composite_after_matte(client, sample):
    sid = make_session(client, sample)
    client.post(f"/sessions/{sid}/matte", content=encode_gray_png(sample.trimap))
    bg = Plane(np.full((48, 24, 3), 0.5, dtype=np.float32))  # gets refit
    resp = client.post(f"/sessions/{sid}/composite",
                       content=encode_image_png(bg))
    assert resp.status_code == 200
    out = image_from_bytes(resp.content)
    assert (out.height, out.width) == (32, 32)
    assert out.channels == 3


def test_session_cap_evicts_oldest(client, sample):
    ids = [make_session(client, sample) for _ in range(4)]  # cap is 3
    trimap_png = encode_gray_png(sample.trimap)
    resp = client.post(f"/sessions/{ids[0]}/matte", content=trimap_png)
    assert resp.status_code == 404
    resp = client.post(f"/sessions/{ids[-1]}/matte", content=trimap_png)
    assert resp.status_code == 200


def test_ttl_eviction():
    model = build_model(TINY_BACKBONE, seed=13)
    app = create_app(model, ttl_seconds=0.0)
    sample = fixed_trimap_samples(1, 32, seed=51)[0]
    with TestClient(app) as client:
        sid = make_session(client, sample)
        resp = client.post(f"/sessions/{sid}/matte",
                           content=encode_gray_png(sample.trimap))
        assert resp.status_code == 404
