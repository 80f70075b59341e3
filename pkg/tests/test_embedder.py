from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from layerbench import pngio
from layerbench.embedder import (
    REFERENCE_SPEC,
    EmbedderMode,
    EmbedderSpec,
    area_resize,
    embed,
    embed_many,
    perceptual_distance,
    reference_features,
    resolve_embedder,
    spec_from_endpoint,
)
from layerbench.errors import (
    BackendUnavailable,
    DimensionMismatch,
    ProtocolError,
    UnsupportedMode,
)

from conftest import constant_image, random_image


# --- reference embedder -----------------------------------------------------


def test_reference_black_image_features():
    f = reference_features(np.zeros((64, 64, 3)))
    assert f.shape == (64,)
    np.testing.assert_array_equal(f[:48], 0.0)  # grid means
    np.testing.assert_array_equal(f[48:51], 0.0)  # stds
    assert f[51] == 1.0 and f[52:].sum() == 0.0  # all gradient mass in bin 0


def test_reference_deterministic(rng):
    img = random_image(rng, 37, 53)
    np.testing.assert_array_equal(reference_features(img), reference_features(img))


def test_reference_histogram_mass_normalized(rng):
    f = reference_features(random_image(rng, 64, 64))
    assert abs(f[51:].sum() - 1.0) < 1e-12


def test_reference_brightness_shift_moves_grid_means():
    base = constant_image(64, 64, 0.3)
    brighter = constant_image(64, 64, 0.5)
    delta = reference_features(brighter) - reference_features(base)
    np.testing.assert_allclose(delta[:48], 0.2, atol=1e-12)
    np.testing.assert_allclose(delta[48:], 0.0, atol=1e-12)


def test_area_resize_exact_on_blocks(rng):
    blocks = rng.uniform(size=(4, 4, 3))
    img = np.repeat(np.repeat(blocks, 16, axis=0), 16, axis=1)
    out = area_resize(img, 4, 4)
    np.testing.assert_allclose(out, blocks, atol=1e-12)


def test_area_resize_preserves_mean(rng):
    img = random_image(rng, 50, 70)
    out = area_resize(img, 64, 64)
    np.testing.assert_allclose(out.mean(axis=(0, 1)), img.mean(axis=(0, 1)), atol=1e-12)


# --- reference distance -----------------------------------------------------


def test_distance_identity(rng):
    img = random_image(rng, 20, 20)
    assert perceptual_distance(REFERENCE_SPEC, img, img) == 0.0


def test_distance_symmetric(rng):
    a = random_image(rng, 16, 24)
    b = random_image(rng, 16, 24)
    assert perceptual_distance(REFERENCE_SPEC, a, b) == perceptual_distance(
        REFERENCE_SPEC, b, a
    )


def test_distance_black_white_hand_computed():
    # features differ only in the 48 grid means (0 vs 1): ||delta|| = sqrt(48),
    # normalized by sqrt(64)
    d = perceptual_distance(REFERENCE_SPEC, np.zeros((32, 32, 3)), np.ones((32, 32, 3)))
    assert abs(d - np.sqrt(48.0) / 8.0) < 1e-12


def test_distance_triangle_inequality(rng):
    a, b, c = (random_image(rng, 16, 16) for _ in range(3))
    dab = perceptual_distance(REFERENCE_SPEC, a, b)
    dbc = perceptual_distance(REFERENCE_SPEC, b, c)
    dac = perceptual_distance(REFERENCE_SPEC, a, c)
    assert dac <= dab + dbc + 1e-12


def test_distance_dim_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        perceptual_distance(REFERENCE_SPEC, random_image(rng, 8, 8), random_image(rng, 9, 8))


# --- external protocol --------------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    """Minimal external embedder: 4-dim channel means + count."""

    behavior = "ok"

    def log_message(self, *args):
        pass

    def _reply(self, code: int, payload: dict):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/spec":
            self._reply(200, {"name": "stub", "mode": "both", "dim": 4})
        else:
            self._reply(404, {})

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        req = json.loads(self.rfile.read(length))
        if self.behavior == "error":
            self._reply(500, {"error": "boom"})
            return
        if self.path == "/embed":
            img = pngio.png_bytes_to_rgb(base64.b64decode(req["png_base64"]))
            vector = list(img.mean(axis=(0, 1))) + [float(img.size)]
            if self.behavior == "wrong_dim":
                vector = vector[:2]
            reply_id = "bogus" if self.behavior == "wrong_id" else req["id"]
            self._reply(200, {"id": reply_id, "vector": vector})
        elif self.path == "/distance":
            a = pngio.png_bytes_to_rgb(base64.b64decode(req["png_base64_a"]))
            b = pngio.png_bytes_to_rgb(base64.b64decode(req["png_base64_b"]))
            self._reply(200, {"id": req["id"], "distance": float(np.abs(a - b).mean())})
        else:
            self._reply(404, {})


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.behavior = "ok"
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    thread.join(timeout=5)


def test_spec_from_endpoint(stub_server):
    spec = spec_from_endpoint(stub_server)
    assert spec == EmbedderSpec(name="stub", mode=EmbedderMode.BOTH, dim=4, endpoint=stub_server)


def test_resolve_embedder_reference_and_url(stub_server):
    assert resolve_embedder("reference") is REFERENCE_SPEC
    assert resolve_embedder(stub_server).name == "stub"


def test_external_embed_roundtrip(stub_server):
    spec = spec_from_endpoint(stub_server)
    img = constant_image(8, 8, 0.5)
    vec = embed(spec, img)
    np.testing.assert_allclose(vec[:3], 0.5, atol=1 / 255)
    assert vec[3] == img.size


def test_external_distance(stub_server):
    spec = spec_from_endpoint(stub_server)
    d = perceptual_distance(spec, constant_image(4, 4, 0.0), constant_image(4, 4, 1.0))
    assert abs(d - 1.0) < 1e-9


def test_external_wrong_dim_protocol_error(stub_server):
    spec = spec_from_endpoint(stub_server)
    _StubHandler.behavior = "wrong_dim"
    with pytest.raises(ProtocolError):
        embed(spec, constant_image(4, 4, 0.5))


def test_external_id_mismatch_protocol_error(stub_server):
    spec = spec_from_endpoint(stub_server)
    _StubHandler.behavior = "wrong_id"
    with pytest.raises(ProtocolError):
        embed(spec, constant_image(4, 4, 0.5))


def test_external_server_error(stub_server):
    spec = spec_from_endpoint(stub_server)
    _StubHandler.behavior = "error"
    with pytest.raises(ProtocolError):
        embed(spec, constant_image(4, 4, 0.5))


def test_external_unreachable():
    with pytest.raises(BackendUnavailable):
        spec_from_endpoint("http://127.0.0.1:1")


def test_embed_many_keeps_order(stub_server, rng):
    spec = spec_from_endpoint(stub_server)
    images = [constant_image(4, 4, v) for v in (0.0, 0.25, 0.5, 0.75, 1.0)]
    vectors = embed_many(spec, images, max_concurrency=4)
    for img, vec in zip(images, vectors):
        np.testing.assert_allclose(vec[:3], img[0, 0], atol=1 / 255)


def test_reference_spec_shape_pinned():
    from layerbench.errors import InvariantViolation

    with pytest.raises(InvariantViolation):
        EmbedderSpec(name="r", mode=EmbedderMode.EMBEDDING, dim=64)
    with pytest.raises(InvariantViolation):
        EmbedderSpec(name="r", mode=EmbedderMode.BOTH, dim=32)


def test_unsupported_mode():
    spec = EmbedderSpec(name="e", mode=EmbedderMode.EMBEDDING, dim=4, endpoint="http://x")
    with pytest.raises(UnsupportedMode):
        perceptual_distance(spec, constant_image(2, 2, 0.0), constant_image(2, 2, 0.0))
    spec_d = EmbedderSpec(name="d", mode=EmbedderMode.PAIRWISE_DISTANCE, dim=4, endpoint="http://x")
    with pytest.raises(UnsupportedMode):
        embed(spec_d, constant_image(2, 2, 0.0))
