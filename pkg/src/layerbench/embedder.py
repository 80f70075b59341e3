"""Perceptual feature and distance providers.

Two backends share one interface:

* the built-in reference embedder, a deterministic 64-dimensional hand-crafted
  feature extractor, so every metric in this library is testable without
  neural networks;
* an HTTP client for external neural embedders (CLIP, LPIPS, Inception, ...)
  speaking the JSON protocol documented in the README.

The reference embedder is normative. Given an RGB image it computes, after an
area-average resize to 64x64:

* 48 values: per-channel means over a 4x4 spatial grid, blocks in row-major
  order with the three channels adjacent per block;
* 3 values: per-channel standard deviation (population) over all pixels;
* 13 values: mass-normalized histogram of the luminance gradient magnitude
  (luminance 0.299 R + 0.587 G + 0.114 B, central differences) over 13
  uniform bins spanning [0, 2].
"""

from __future__ import annotations

import base64
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import httpx
import numpy as np

from . import pngio
from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    InvariantViolation,
    ProtocolError,
    UnsupportedMode,
)
from .layers import as_image

REFERENCE_DIM = 64
_GRID = 4
_RESIZE = 64
_HIST_BINS = 13
_HIST_RANGE = (0.0, 2.0)
_LUMA = np.array([0.299, 0.587, 0.114])


class EmbedderMode(Enum):
    EMBEDDING = "embedding"
    PAIRWISE_DISTANCE = "distance"
    BOTH = "both"

    @property
    def supports_embedding(self) -> bool:
        return self in (EmbedderMode.EMBEDDING, EmbedderMode.BOTH)

    @property
    def supports_distance(self) -> bool:
        return self in (EmbedderMode.PAIRWISE_DISTANCE, EmbedderMode.BOTH)


@dataclass(frozen=True)
class EmbedderSpec:
    """Which backend provides features/distances, and its declared shape."""

    name: str
    mode: EmbedderMode
    dim: int
    endpoint: str | None = None  # None selects the built-in reference backend

    def __post_init__(self):
        if self.dim < 1:
            raise InvariantViolation(f"embedder dim must be positive, got {self.dim}")
        if self.endpoint == "":
            raise InvariantViolation("external endpoint must be nonempty")
        if self.endpoint is None and (self.mode is not EmbedderMode.BOTH or self.dim != REFERENCE_DIM):
            raise InvariantViolation(
                f"the reference backend always supports both modes at dim {REFERENCE_DIM}"
            )

    @property
    def is_reference(self) -> bool:
        return self.endpoint is None


REFERENCE_SPEC = EmbedderSpec(name="reference", mode=EmbedderMode.BOTH, dim=REFERENCE_DIM)


def spec_from_endpoint(endpoint: str, timeout: float = 30.0) -> EmbedderSpec:
    """Query GET /spec on an external embedder service."""
    try:
        resp = httpx.get(endpoint.rstrip("/") + "/spec", timeout=timeout)
    except httpx.HTTPError as exc:
        raise BackendUnavailable(f"cannot reach embedder at {endpoint}: {exc}") from exc
    if resp.status_code // 100 != 2:
        raise ProtocolError(f"GET /spec returned {resp.status_code}")
    body = resp.json()
    try:
        mode = EmbedderMode(body["mode"])
        return EmbedderSpec(
            name=str(body["name"]), mode=mode, dim=int(body["dim"]), endpoint=endpoint
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ProtocolError(f"malformed /spec response: {body!r}") from exc


def resolve_embedder(arg: str, timeout: float = 30.0) -> EmbedderSpec:
    """Map a CLI/env embedder argument ("reference" or a URL) to a spec."""
    if arg == "reference":
        return REFERENCE_SPEC
    return spec_from_endpoint(arg, timeout=timeout)


# --- reference backend --------------------------------------------------------


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic resampling matrix for exact box-filter (area) averaging."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo = i * scale
        hi = (i + 1) * scale
        for r in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            overlap = min(hi, r + 1.0) - max(lo, float(r))
            if overlap > 0.0:
                w[i, r] = overlap
    return w / scale


def area_resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize an RGB image by exact area averaging (order-independent)."""
    img = as_image(img)
    h, w = img.shape[:2]
    wr = _area_weights(h, height)
    wc = _area_weights(w, width)
    rows = (wr @ img.reshape(h, w * 3)).reshape(height, w, 3)
    return (rows.transpose(0, 2, 1) @ wc.T).transpose(0, 2, 1)


def reference_features(img: np.ndarray) -> np.ndarray:
    img = as_image(img)
    if img.size == 0:
        raise InvariantViolation("cannot embed an empty image")
    small = area_resize(img, _RESIZE, _RESIZE)

    block = _RESIZE // _GRID
    grid = small.reshape(_GRID, block, _GRID, block, 3).mean(axis=(1, 3))
    stds = small.std(axis=(0, 1))

    luma = small @ _LUMA
    gy, gx = np.gradient(luma)
    mag = np.hypot(gx, gy)
    hist, _ = np.histogram(mag, bins=_HIST_BINS, range=_HIST_RANGE)
    hist = hist / mag.size

    return np.concatenate([grid.ravel(), stds, hist])


# --- external backend ---------------------------------------------------------


def _post_json(endpoint: str, route: str, payload: dict, timeout: float) -> dict:
    try:
        resp = httpx.post(endpoint.rstrip("/") + route, json=payload, timeout=timeout)
    except httpx.HTTPError as exc:
        raise BackendUnavailable(f"embedder request failed: {exc}") from exc
    if resp.status_code // 100 != 2:
        raise ProtocolError(f"POST {route} returned {resp.status_code}")
    try:
        return resp.json()
    except ValueError as exc:
        raise ProtocolError(f"POST {route} returned non-JSON body") from exc


def _external_embed(spec: EmbedderSpec, img: np.ndarray, timeout: float) -> np.ndarray:
    req_id = uuid.uuid4().hex
    payload = {
        "id": req_id,
        "png_base64": base64.b64encode(pngio.rgb_to_png_bytes(img)).decode("ascii"),
    }
    body = _post_json(spec.endpoint, "/embed", payload, timeout)
    if body.get("id") != req_id:
        raise ProtocolError(f"response id {body.get('id')!r} does not match request")
    vector = np.asarray(body.get("vector", ()), dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] != spec.dim:
        raise ProtocolError(f"expected vector of dim {spec.dim}, got shape {vector.shape}")
    if not np.isfinite(vector).all():
        raise ProtocolError("embedding contains non-finite values")
    return vector


def _external_distance(
    spec: EmbedderSpec, a: np.ndarray, b: np.ndarray, timeout: float
) -> float:
    req_id = uuid.uuid4().hex
    payload = {
        "id": req_id,
        "png_base64_a": base64.b64encode(pngio.rgb_to_png_bytes(a)).decode("ascii"),
        "png_base64_b": base64.b64encode(pngio.rgb_to_png_bytes(b)).decode("ascii"),
    }
    body = _post_json(spec.endpoint, "/distance", payload, timeout)
    if body.get("id") != req_id:
        raise ProtocolError(f"response id {body.get('id')!r} does not match request")
    try:
        dist = float(body["distance"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed /distance response: {body!r}") from exc
    if not np.isfinite(dist) or dist < 0.0:
        raise ProtocolError(f"distance must be finite and nonnegative, got {dist}")
    return dist


# --- public operations ----------------------------------------------------------


def embed(spec: EmbedderSpec, img: np.ndarray, timeout: float = 30.0) -> np.ndarray:
    """Extract a feature vector of length spec.dim from an RGB image."""
    if not spec.mode.supports_embedding:
        raise UnsupportedMode(f"embedder {spec.name!r} does not support embedding")
    if spec.is_reference:
        return reference_features(img)
    return _external_embed(spec, as_image(img), timeout)


def embed_many(
    spec: EmbedderSpec,
    images: Sequence[np.ndarray],
    max_concurrency: int = 8,
    timeout: float = 30.0,
) -> list[np.ndarray]:
    """Embed a batch, keeping input order. External requests run concurrently."""
    if spec.is_reference or len(images) <= 1:
        return [embed(spec, img, timeout) for img in images]
    with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
        return list(pool.map(lambda im: embed(spec, im, timeout), images))


def perceptual_distance(
    spec: EmbedderSpec, a: np.ndarray, b: np.ndarray, timeout: float = 30.0
) -> float:
    """Perceptual distance between two same-sized RGB images (>= 0)."""
    if not spec.mode.supports_distance:
        raise UnsupportedMode(f"embedder {spec.name!r} does not support distances")
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes disagree: {a.shape} vs {b.shape}")
    if spec.is_reference:
        delta = reference_features(a) - reference_features(b)
        return float(np.linalg.norm(delta) / np.sqrt(REFERENCE_DIM))
    return _external_distance(spec, a, b, timeout)
