from __future__ import annotations

import numpy as np
import pytest

from layerbench.layers import LayerKind, RgbaLayer


def constant_image(height: int, width: int, value) -> np.ndarray:
    return np.full((height, width, 3), value, dtype=np.float64) * np.ones(3)


def random_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(height, width, 3))


def make_layer(
    rgb: np.ndarray,
    alpha: np.ndarray,
    visibility: np.ndarray | None = None,
    kind: LayerKind = LayerKind.FOREGROUND,
) -> RgbaLayer:
    if visibility is None:
        visibility = (alpha > 0).astype(np.float64)
    return RgbaLayer(rgb=rgb, alpha=alpha, visibility=visibility, kind=kind)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
