"""Core RGBA layer data model and deterministic pixel operations.

Images are numpy float64 arrays with channel values in [0, 1]:

* RGB image: shape (H, W, 3)
* alpha map: shape (H, W), values in [0, 1]
* binary mask: shape (H, W), values exactly 0 or 1

Coordinates follow the raster convention: origin top-left, x rightward
(columns), y downward (rows). Boxes are half-open [x0, x1) x [y0, y1).
All operations are pure; identical inputs produce bit-identical outputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyAlpha,
    InvariantViolation,
    NoSpatialComponent,
    OutOfBounds,
)

CHECKER_LIGHT = (0.8, 0.8, 0.8)
CHECKER_WHITE = (1.0, 1.0, 1.0)
DEFAULT_CHECKER_CELL = 16
DEFAULT_CHECKER_JITTER = 0.05

# Fraction of visible pixels that may fall outside the alpha support before
# a layer is rejected instead of silently repaired.
VISIBILITY_CLIP_TOLERANCE = 0.005


def as_image(data) -> np.ndarray:
    """Validate and return an RGB image array of shape (H, W, 3) in [0, 1]."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvariantViolation(f"image must have shape (H, W, 3), got {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InvariantViolation("image channel values must lie in [0, 1]")
    return arr


def as_alpha(data) -> np.ndarray:
    """Validate and return an alpha map of shape (H, W) in [0, 1]."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise InvariantViolation(f"alpha map must have shape (H, W), got {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InvariantViolation("alpha values must lie in [0, 1]")
    return arr


def as_mask(data) -> np.ndarray:
    """Validate and return a binary mask of shape (H, W) with values in {0, 1}."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise InvariantViolation(f"mask must have shape (H, W), got {arr.shape}")
    if not np.isin(arr, (0.0, 1.0)).all():
        raise InvariantViolation("mask values must be exactly 0 or 1")
    return arr


class LayerKind(Enum):
    FOREGROUND = "foreground"
    BACKGROUND = "background"


@dataclass(frozen=True)
class BBox:
    """Half-open pixel box [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise InvariantViolation(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class RgbaLayer:
    """One decomposed layer: RGB content, alpha, visibility, and kind.

    Invariants enforced on construction:

    * rgb, alpha, visibility share identical spatial dimensions
    * background layers are fully opaque (alpha identically 1)
    * every visible pixel lies inside the alpha support (alpha > 0)
    """

    rgb: np.ndarray
    alpha: np.ndarray
    visibility: np.ndarray
    kind: LayerKind

    def __post_init__(self):
        object.__setattr__(self, "rgb", as_image(self.rgb))
        object.__setattr__(self, "alpha", as_alpha(self.alpha))
        object.__setattr__(self, "visibility", as_mask(self.visibility))
        if self.rgb.shape[:2] != self.alpha.shape or self.alpha.shape != self.visibility.shape:
            raise DimensionMismatch(
                f"layer channels disagree: rgb {self.rgb.shape[:2]}, "
                f"alpha {self.alpha.shape}, visibility {self.visibility.shape}"
            )
        if self.kind is LayerKind.BACKGROUND and not (self.alpha == 1.0).all():
            raise InvariantViolation("background layers must have alpha identically 1")
        stray = (self.visibility == 1.0) & (self.alpha <= 0.0)
        if stray.any():
            raise InvariantViolation(
                f"{int(stray.sum())} visible pixels lie outside the alpha support"
            )

    @property
    def height(self) -> int:
        return self.alpha.shape[0]

    @property
    def width(self) -> int:
        return self.alpha.shape[1]


def reconcile_visibility(alpha: np.ndarray, visibility: np.ndarray) -> np.ndarray:
    """Repair visible pixels that fall outside the alpha support.

    Real mattes have soft edges, so a small number of stray visible pixels
    (at most ``VISIBILITY_CLIP_TOLERANCE`` of all visible pixels) are zeroed
    with a warning. Anything beyond that is a data error.
    """
    alpha = as_alpha(alpha)
    visibility = as_mask(visibility)
    if alpha.shape != visibility.shape:
        raise DimensionMismatch("alpha and visibility dimensions disagree")
    stray = (visibility == 1.0) & (alpha <= 0.0)
    n_stray = int(stray.sum())
    if n_stray == 0:
        return visibility
    n_visible = int((visibility == 1.0).sum())
    if n_stray > VISIBILITY_CLIP_TOLERANCE * n_visible:
        raise InvariantViolation(
            f"{n_stray} of {n_visible} visible pixels lie outside the alpha support "
            f"(tolerance {VISIBILITY_CLIP_TOLERANCE:.1%})"
        )
    warnings.warn(
        f"zeroed {n_stray} visible pixels outside the alpha support",
        stacklevel=2,
    )
    repaired = visibility.copy()
    repaired[stray] = 0.0
    return repaired


# --- prompts -----------------------------------------------------------------


@dataclass(frozen=True)
class PointPrompt:
    x: int
    y: int


@dataclass(frozen=True)
class BoxPrompt:
    x0: int
    y0: int
    x1: int
    y1: int


@dataclass(frozen=True)
class MaskPrompt:
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", as_mask(self.mask))


@dataclass(frozen=True)
class TextPrompt:
    text: str


@dataclass(frozen=True)
class BackgroundPrompt:
    pass


SpatialPrompt = Union[PointPrompt, BoxPrompt, MaskPrompt, BackgroundPrompt]


@dataclass(frozen=True)
class ComboPrompt:
    text: str
    spatial: SpatialPrompt


Prompt = Union[PointPrompt, BoxPrompt, MaskPrompt, TextPrompt, BackgroundPrompt, ComboPrompt]


def validate_prompt(prompt: Prompt, height: int, width: int) -> None:
    """Check that a prompt is spatially valid for an image of the given size."""
    if isinstance(prompt, PointPrompt):
        if not (0 <= prompt.x < width and 0 <= prompt.y < height):
            raise OutOfBounds(f"point ({prompt.x}, {prompt.y}) outside {width}x{height}")
    elif isinstance(prompt, BoxPrompt):
        ok = 0 <= prompt.x0 < prompt.x1 <= width and 0 <= prompt.y0 < prompt.y1 <= height
        if not ok:
            raise OutOfBounds(f"box {prompt} invalid for {width}x{height}")
    elif isinstance(prompt, MaskPrompt):
        if prompt.mask.shape != (height, width):
            raise DimensionMismatch(
                f"mask prompt shape {prompt.mask.shape} != image {(height, width)}"
            )
    elif isinstance(prompt, ComboPrompt):
        validate_prompt(prompt.spatial, height, width)


# --- operations ---------------------------------------------------------------


def tight_bbox(alpha: np.ndarray, threshold: float = 0.0) -> BBox:
    """Minimal half-open box containing all pixels with alpha > threshold."""
    alpha = as_alpha(alpha)
    rows, cols = np.nonzero(alpha > threshold)
    if rows.size == 0:
        raise EmptyAlpha(f"no pixel exceeds threshold {threshold}")
    return BBox(
        x0=int(cols.min()),
        y0=int(rows.min()),
        x1=int(cols.max()) + 1,
        y1=int(rows.max()) + 1,
    )


def crop(img: np.ndarray, box: BBox) -> np.ndarray:
    """Crop an image, alpha map, or mask to a half-open box."""
    arr = np.asarray(img)
    h, w = arr.shape[:2]
    if not (0 <= box.x0 and box.x1 <= w and 0 <= box.y0 and box.y1 <= h):
        raise OutOfBounds(f"box {box} exceeds image {w}x{h}")
    return arr[box.y0 : box.y1, box.x0 : box.x1].copy()


def apply_visibility(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out image pixels where the mask is 0."""
    img = as_image(img)
    mask = as_mask(mask)
    if img.shape[:2] != mask.shape:
        raise DimensionMismatch(f"image {img.shape[:2]} vs mask {mask.shape}")
    return img * mask[:, :, None]


def alpha_blend(layer: RgbaLayer, background: np.ndarray) -> np.ndarray:
    """Composite a layer over a background: out = rgb * a + bg * (1 - a)."""
    background = as_image(background)
    if background.shape[:2] != layer.alpha.shape:
        raise DimensionMismatch(
            f"background {background.shape[:2]} vs layer {layer.alpha.shape}"
        )
    a = layer.alpha[:, :, None]
    return layer.rgb * a + background * (1.0 - a)


def render_checkerboard(
    height: int,
    width: int,
    cell: int = DEFAULT_CHECKER_CELL,
    jitter: float = DEFAULT_CHECKER_JITTER,
    seed: int = 0,
) -> np.ndarray:
    """Render a gray-white checkerboard with per-cell color jitter.

    Cells alternate light gray and white, the top-left cell being white.
    Each cell's color is shifted by one uniform offset in [-jitter, +jitter]
    drawn from a generator seeded by (seed, cell row, cell col), so the
    output is fully determined by its arguments.
    """
    if cell < 1:
        raise InvariantViolation(f"cell size must be >= 1, got {cell}")
    if not 0.0 <= jitter <= 0.1:
        raise InvariantViolation(f"jitter must lie in [0, 0.1], got {jitter}")
    n_rows = -(-height // cell)
    n_cols = -(-width // cell)
    out = np.empty((height, width, 3), dtype=np.float64)
    for ci in range(n_rows):
        for cj in range(n_cols):
            base = CHECKER_WHITE if (ci + cj) % 2 == 0 else CHECKER_LIGHT
            if jitter > 0.0:
                rng = np.random.default_rng([seed, ci, cj])
                offset = rng.uniform(-jitter, jitter)
            else:
                offset = 0.0
            color = np.clip(np.array(base) + offset, 0.0, 1.0)
            out[ci * cell : (ci + 1) * cell, cj * cell : (cj + 1) * cell] = color
    return out


def render_prompt_canvas(prompt: Prompt, height: int, width: int) -> np.ndarray:
    """Encode a spatial prompt as an RGB canvas.

    Background prompts yield a solid blue canvas, boxes a green region on
    black, masks a red region on black, and points a grayscale gaussian bump
    with sigma = 1.5% of the image diagonal. Combo prompts render their
    spatial part; pure text prompts carry no canvas.
    """
    if isinstance(prompt, TextPrompt):
        raise NoSpatialComponent("text prompts have no canvas encoding")
    if isinstance(prompt, ComboPrompt):
        return render_prompt_canvas(prompt.spatial, height, width)
    validate_prompt(prompt, height, width)
    canvas = np.zeros((height, width, 3), dtype=np.float64)
    if isinstance(prompt, BackgroundPrompt):
        canvas[:, :, 2] = 1.0
    elif isinstance(prompt, BoxPrompt):
        canvas[prompt.y0 : prompt.y1, prompt.x0 : prompt.x1, 1] = 1.0
    elif isinstance(prompt, MaskPrompt):
        canvas[:, :, 0] = prompt.mask
    elif isinstance(prompt, PointPrompt):
        sigma = 0.015 * np.hypot(height, width)
        v, u = np.mgrid[0:height, 0:width]
        bump = np.exp(-((u - prompt.x) ** 2 + (v - prompt.y) ** 2) / (2.0 * sigma**2))
        canvas[:] = bump[:, :, None]
    return canvas


def make_training_target(
    layer: RgbaLayer,
    seed: int = 0,
    cell: int = DEFAULT_CHECKER_CELL,
    jitter: float = DEFAULT_CHECKER_JITTER,
) -> np.ndarray:
    """Blend a layer onto a jittered checkerboard at the layer's resolution."""
    board = render_checkerboard(layer.height, layer.width, cell=cell, jitter=jitter, seed=seed)
    return alpha_blend(layer, board)
