from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerbench.errors import (
    DimensionMismatch,
    EmptyAlpha,
    InvariantViolation,
    NoSpatialComponent,
    OutOfBounds,
)
from layerbench.layers import (
    BBox,
    BackgroundPrompt,
    BoxPrompt,
    ComboPrompt,
    LayerKind,
    MaskPrompt,
    PointPrompt,
    RgbaLayer,
    TextPrompt,
    alpha_blend,
    apply_visibility,
    crop,
    make_training_target,
    reconcile_visibility,
    render_checkerboard,
    render_prompt_canvas,
    tight_bbox,
)

from conftest import constant_image, make_layer


# --- tight_bbox ---------------------------------------------------------------


def test_tight_bbox_single_pixel():
    alpha = np.zeros((4, 4))
    alpha[3, 1] = 0.7
    assert tight_bbox(alpha) == BBox(x0=1, y0=3, x1=2, y1=4)


def test_tight_bbox_full_support():
    assert tight_bbox(np.ones((8, 8))) == BBox(0, 0, 8, 8)


def test_tight_bbox_empty_raises():
    with pytest.raises(EmptyAlpha):
        tight_bbox(np.zeros((4, 4)))


def test_tight_bbox_threshold():
    alpha = np.full((4, 4), 0.1)
    alpha[2, 2] = 0.9
    assert tight_bbox(alpha, threshold=0.5) == BBox(2, 2, 3, 3)


def test_tight_bbox_crop_idempotent(rng):
    alpha = (rng.uniform(size=(12, 17)) > 0.8).astype(float) * 0.5
    alpha[5, 5] = 0.5
    box = tight_bbox(alpha)
    cropped = crop(alpha, box)
    inner = tight_bbox(cropped)
    assert inner == BBox(0, 0, cropped.shape[1], cropped.shape[0])


# --- crop ----------------------------------------------------------------------


def test_crop_identity():
    img = constant_image(4, 6, 0.3)
    out = crop(img, BBox(0, 0, 6, 4))
    np.testing.assert_array_equal(out, img)


def test_crop_center_block():
    img = np.arange(4 * 4 * 3, dtype=float).reshape(4, 4, 3) / (4 * 4 * 3)
    out = crop(img, BBox(1, 1, 3, 3))
    np.testing.assert_array_equal(out, img[1:3, 1:3])


def test_crop_out_of_bounds():
    with pytest.raises(OutOfBounds):
        crop(np.zeros((4, 4)), BBox(0, 0, 5, 2))


# --- apply_visibility -------------------------------------------------------------


def test_apply_visibility_all_ones_identity():
    img = constant_image(3, 3, 0.5)
    np.testing.assert_array_equal(apply_visibility(img, np.ones((3, 3))), img)


def test_apply_visibility_all_zeros_black():
    img = constant_image(3, 3, 0.5)
    np.testing.assert_array_equal(apply_visibility(img, np.zeros((3, 3))), np.zeros((3, 3, 3)))


def test_apply_visibility_checker():
    img = constant_image(2, 2, 0.5)
    mask = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = apply_visibility(img, mask)
    assert out[0, 0, 0] == 0.5 and out[0, 1, 0] == 0.0


def test_apply_visibility_idempotent(rng):
    img = rng.uniform(size=(5, 7, 3))
    mask = (rng.uniform(size=(5, 7)) > 0.5).astype(float)
    once = apply_visibility(img, mask)
    np.testing.assert_array_equal(apply_visibility(once, mask), once)


def test_apply_visibility_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        apply_visibility(constant_image(3, 3, 0.5), np.ones((4, 4)))


# --- alpha_blend --------------------------------------------------------------------


def test_alpha_blend_opaque_returns_layer():
    layer = make_layer(constant_image(4, 4, 0.7), np.ones((4, 4)))
    np.testing.assert_array_equal(alpha_blend(layer, constant_image(4, 4, 0.1)), layer.rgb)


def test_alpha_blend_transparent_returns_background():
    layer = make_layer(constant_image(4, 4, 0.7), np.zeros((4, 4)))
    bg = constant_image(4, 4, 0.1)
    np.testing.assert_array_equal(alpha_blend(layer, bg), bg)


def test_alpha_blend_quarter():
    layer = make_layer(constant_image(2, 2, 1.0), np.full((2, 2), 0.25))
    out = alpha_blend(layer, constant_image(2, 2, 0.0))
    np.testing.assert_allclose(out, 0.25)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_alpha_blend_convex_combination(seed):
    rng = np.random.default_rng(seed)
    rgb = rng.uniform(size=(4, 5, 3))
    alpha = rng.uniform(size=(4, 5))
    bg = rng.uniform(size=(4, 5, 3))
    out = alpha_blend(make_layer(rgb, alpha), bg)
    lo = np.minimum(rgb, bg)
    hi = np.maximum(rgb, bg)
    assert (out >= lo - 1e-12).all() and (out <= hi + 1e-12).all()


# --- checkerboard --------------------------------------------------------------------


def test_checkerboard_exact_pattern():
    img = render_checkerboard(4, 4, cell=2, jitter=0.0, seed=0)
    white = np.array([1.0, 1.0, 1.0])
    gray = np.array([0.8, 0.8, 0.8])
    np.testing.assert_array_equal(img[0, 0], white)
    np.testing.assert_array_equal(img[0, 2], gray)
    np.testing.assert_array_equal(img[2, 0], gray)
    np.testing.assert_array_equal(img[2, 2], white)
    np.testing.assert_array_equal(img[1, 1], white)


def test_checkerboard_deterministic():
    a = render_checkerboard(32, 48, cell=8, jitter=0.05, seed=7)
    b = render_checkerboard(32, 48, cell=8, jitter=0.05, seed=7)
    np.testing.assert_array_equal(a, b)
    c = render_checkerboard(32, 48, cell=8, jitter=0.05, seed=8)
    assert not np.array_equal(a, c)


def test_checkerboard_jitter_bounded():
    jitter = 0.05
    img = render_checkerboard(32, 32, cell=4, jitter=jitter, seed=3)
    base = render_checkerboard(32, 32, cell=4, jitter=0.0, seed=3)
    delta = img - base
    # clamping can only pull values toward the base pattern
    assert np.abs(delta).max() <= jitter + 1e-12
    # each cell is shifted uniformly across pixels and channels
    assert np.allclose(delta[0:4, 0:4], delta[0, 0, 0])


def test_checkerboard_invalid_args():
    with pytest.raises(InvariantViolation):
        render_checkerboard(4, 4, cell=0)
    with pytest.raises(InvariantViolation):
        render_checkerboard(4, 4, cell=2, jitter=0.2)


# --- prompt canvas -------------------------------------------------------------------


def test_prompt_canvas_background_blue():
    img = render_prompt_canvas(BackgroundPrompt(), 2, 2)
    np.testing.assert_array_equal(img, np.broadcast_to([0.0, 0.0, 1.0], (2, 2, 3)))


def test_prompt_canvas_box_green_region():
    img = render_prompt_canvas(BoxPrompt(1, 1, 3, 3), 4, 4)
    green = np.array([0.0, 1.0, 0.0])
    assert (img[1:3, 1:3] == green).all()
    assert img[0].sum() == 0 and img[3].sum() == 0
    n_green = int((img[:, :, 1] == 1.0).sum())
    assert n_green == 4


def test_prompt_canvas_mask_red():
    mask = np.zeros((4, 4))
    mask[0, 0] = 1.0
    img = render_prompt_canvas(MaskPrompt(mask), 4, 4)
    np.testing.assert_array_equal(img[0, 0], [1.0, 0.0, 0.0])
    assert img[1:].sum() == 0


def test_prompt_canvas_point_gaussian():
    img = render_prompt_canvas(PointPrompt(x=8, y=8), 17, 17)
    assert img[8, 8, 0] == 1.0
    # grayscale: channels identical
    np.testing.assert_array_equal(img[:, :, 0], img[:, :, 1])
    # strictly decreasing with radius along the axes
    row = img[8, :, 0]
    assert (np.diff(row[:9]) > 0).all() and (np.diff(row[8:]) < 0).all()
    assert img[8, 8, 0] > img[8, 9, 0] > img[8, 10, 0]


def test_prompt_canvas_combo_uses_spatial():
    combo = ComboPrompt(text="the dog", spatial=BoxPrompt(0, 0, 1, 1))
    np.testing.assert_array_equal(
        render_prompt_canvas(combo, 4, 4), render_prompt_canvas(BoxPrompt(0, 0, 1, 1), 4, 4)
    )


def test_prompt_canvas_text_rejected():
    with pytest.raises(NoSpatialComponent):
        render_prompt_canvas(TextPrompt("the dog"), 4, 4)


def test_prompt_canvas_point_out_of_bounds():
    with pytest.raises(OutOfBounds):
        render_prompt_canvas(PointPrompt(x=10, y=2), 4, 4)


def test_prompt_canvas_deterministic():
    a = render_prompt_canvas(PointPrompt(3, 2), 8, 8)
    b = render_prompt_canvas(PointPrompt(3, 2), 8, 8)
    np.testing.assert_array_equal(a, b)


# --- training target -------------------------------------------------------------------


def test_training_target_opaque_layer():
    layer = make_layer(constant_image(8, 8, 0.4), np.ones((8, 8)))
    np.testing.assert_array_equal(make_training_target(layer, seed=1), layer.rgb)


def test_training_target_transparent_layer_is_board():
    layer = make_layer(constant_image(32, 32, 0.4), np.zeros((32, 32)))
    out = make_training_target(layer, seed=1, jitter=0.0)
    np.testing.assert_array_equal(out, render_checkerboard(32, 32, cell=16, jitter=0.0, seed=1))


def test_training_target_deterministic():
    layer = make_layer(constant_image(20, 20, 0.4), np.full((20, 20), 0.5))
    np.testing.assert_array_equal(
        make_training_target(layer, seed=9), make_training_target(layer, seed=9)
    )


# --- layer invariants ---------------------------------------------------------------------


def test_background_layer_requires_full_alpha():
    with pytest.raises(InvariantViolation):
        RgbaLayer(
            rgb=constant_image(2, 2, 0.5),
            alpha=np.array([[1.0, 0.5], [1.0, 1.0]]),
            visibility=np.zeros((2, 2)),
            kind=LayerKind.BACKGROUND,
        )


def test_visible_outside_support_rejected():
    with pytest.raises(InvariantViolation):
        make_layer(constant_image(2, 2, 0.5), np.zeros((2, 2)), visibility=np.ones((2, 2)))


def test_reconcile_visibility_small_violation_clipped():
    alpha = np.ones((20, 20))
    alpha[0, 0] = 0.0
    visibility = np.ones((20, 20))
    with pytest.warns(UserWarning):
        repaired = reconcile_visibility(alpha, visibility)
    assert repaired[0, 0] == 0.0
    assert repaired.sum() == 399


def test_reconcile_visibility_large_violation_fails():
    alpha = np.zeros((10, 10))
    alpha[0, 0] = 1.0
    visibility = np.ones((10, 10))
    with pytest.raises(InvariantViolation):
        reconcile_visibility(alpha, visibility)
