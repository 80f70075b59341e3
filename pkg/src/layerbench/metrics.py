"""The three evaluation axes, Fréchet-distance numerics, IoU, and Passrate@K.

Per-pair metrics:

* preservation: perceptual distance between ground truth and prediction
  restricted to the originally visible region (lower is better);
* completion: cosine similarity between feature-space displacement vectors
  from the visible-only content toward the complete layer (higher is better);

Set-level metric:

* fidelity: Fréchet distance between feature distributions of blended
  prediction and ground-truth sets (lower is better).

All preprocessing (tight crop by the ground-truth alpha, visibility masking,
alpha blending) matches the conventions in :mod:`layerbench.layers`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .embedder import EmbedderSpec, embed, perceptual_distance
from .errors import (
    DimensionMismatch,
    EmptyVisibility,
    InvariantViolation,
    LengthMismatch,
    NoVerdicts,
    NumericalFailure,
    TooFewSamples,
)
from .layers import (
    LayerKind,
    RgbaLayer,
    alpha_blend,
    apply_visibility,
    as_image,
    as_mask,
    crop,
    tight_bbox,
)

DEFAULT_FRECHET_REG = 1e-6
DEFAULT_DIRECTION_EPS = 1e-8


@dataclass(frozen=True)
class GaussianStats:
    """Sample mean and covariance of a feature distribution."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise DimensionMismatch(f"mean {mean.shape} vs cov {cov.shape}")
        if d and np.abs(cov - cov.T).max() > 1e-9:
            raise InvariantViolation("covariance must be symmetric within 1e-9")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class LayerPair:
    """A ground-truth layer matched with one model prediction."""

    gt: RgbaLayer
    pred: RgbaLayer
    background: np.ndarray
    occluded: bool
    sample_id: str = ""
    layer_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "background", as_image(self.background))
        shapes = {self.gt.alpha.shape, self.pred.alpha.shape, self.background.shape[:2]}
        if len(shapes) != 1:
            raise DimensionMismatch(f"pair dimensions disagree: {shapes}")
        if self.gt.kind is not self.pred.kind:
            raise InvariantViolation("ground truth and prediction kinds disagree")


@dataclass(frozen=True)
class PassVerdict:
    """One human judgment: did any of a model's K outputs satisfy the sample."""

    sample_id: str
    k: int
    satisfied: bool
    annotator_id: str = ""


# --- preservation & completion -----------------------------------------------


def _visible_crops(pair: LayerPair) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tight-crop gt/pred rgb and the gt visibility by the gt alpha support."""
    box = tight_bbox(pair.gt.alpha)
    gt_rgb = crop(pair.gt.rgb, box)
    pred_rgb = crop(pair.pred.rgb, box)
    vis = crop(pair.gt.visibility, box)
    return gt_rgb, pred_rgb, vis


def preservation_distance(pair: LayerPair, spec: EmbedderSpec) -> float:
    """Perceptual distance on the originally visible region (lower is better)."""
    if not (pair.gt.visibility == 1.0).any():
        raise EmptyVisibility("ground-truth layer has no visible pixel")
    gt_rgb, pred_rgb, vis = _visible_crops(pair)
    return perceptual_distance(spec, apply_visibility(gt_rgb, vis), apply_visibility(pred_rgb, vis))


def completion_similarity(
    pair: LayerPair,
    spec: EmbedderSpec,
    eps: float = DEFAULT_DIRECTION_EPS,
) -> float | None:
    """Directional similarity of the completion, in [-1, 1].

    Both displacement vectors originate at the embedding of the visible-only
    ground truth. Returns None (sample skipped) when the ground truth has no
    completion to assess (zero ground-truth displacement); returns 0 when the
    prediction shows no displacement at all.
    """
    gt_rgb, pred_rgb, vis = _visible_crops(pair)
    origin = embed(spec, apply_visibility(gt_rgb, vis))
    u = embed(spec, gt_rgb) - origin
    w = embed(spec, pred_rgb) - origin
    norm_u = np.linalg.norm(u)
    if norm_u < eps:
        return None
    norm_w = np.linalg.norm(w)
    if norm_w < eps:
        return 0.0
    return float(np.clip(np.dot(u, w) / (norm_u * norm_w), -1.0, 1.0))


# --- Fréchet distance -----------------------------------------------------------


def fit_gaussian(features: list[np.ndarray] | np.ndarray) -> GaussianStats:
    """Sample mean and unbiased covariance, symmetrized as (C + C^T) / 2."""
    mat = np.asarray(features, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionMismatch(f"expected a list of equal-length vectors, got {mat.shape}")
    n = mat.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 feature vectors, got {n}")
    mean = mat.mean(axis=0)
    centered = mat - mean
    cov = centered.T @ centered / (n - 1)
    return GaussianStats(mean=mean, cov=(cov + cov.T) / 2.0)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric matrix square root with negative eigenvalues clamped to 0."""
    try:
        eigvals, eigvecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(
    a: GaussianStats, b: GaussianStats, reg: float = DEFAULT_FRECHET_REG
) -> float:
    """Fréchet distance between two Gaussians.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)) with S = cov + reg*I
    on both sides. The cross term uses the symmetric form
    Tr((sqrt(S_a) S_b sqrt(S_a))^(1/2)) so only symmetric eigenproblems are
    solved; the result is clamped to >= 0.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"gaussian dims disagree: {a.dim} vs {b.dim}")
    if reg < 0.0:
        raise InvariantViolation(f"regularization must be >= 0, got {reg}")
    eye = reg * np.eye(a.dim)
    cov_a = a.cov + eye
    cov_b = b.cov + eye
    sqrt_a = _psd_sqrt(cov_a)
    inner = sqrt_a @ cov_b @ sqrt_a
    inner = (inner + inner.T) / 2.0
    try:
        cross_eigvals = np.linalg.eigvalsh(inner)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    cross = np.sqrt(np.clip(cross_eigvals, 0.0, None)).sum()
    delta = a.mean - b.mean
    value = float(delta @ delta + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)
    return max(value, 0.0)


def blended_eval_image(layer: RgbaLayer, background: np.ndarray) -> np.ndarray:
    """The image a layer contributes to the fidelity metric.

    Foreground layers are alpha-blended onto the clean background and
    tight-cropped by their own alpha support; background layers are already
    full-frame opaque content and enter as-is.
    """
    if layer.kind is LayerKind.BACKGROUND:
        return layer.rgb
    return crop(alpha_blend(layer, background), tight_bbox(layer.alpha))


def fidelity_fid(
    pairs: list[LayerPair],
    spec: EmbedderSpec,
    reg: float = DEFAULT_FRECHET_REG,
) -> float:
    """Fréchet distance between blended prediction and ground-truth sets."""
    if len(pairs) < 2:
        raise TooFewSamples(f"fidelity needs at least 2 pairs, got {len(pairs)}")
    pred_feats = [embed(spec, blended_eval_image(p.pred, p.background)) for p in pairs]
    gt_feats = [embed(spec, blended_eval_image(p.gt, p.background)) for p in pairs]
    return frechet_distance(fit_gaussian(pred_feats), fit_gaussian(gt_feats), reg)


# --- IoU -------------------------------------------------------------------------


def _iou(g: np.ndarray, p: np.ndarray) -> float:
    union = np.logical_or(g, p).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(g, p).sum() / union)


def _check_mask_lists(*lists: list[np.ndarray]) -> None:
    lengths = {len(lst) for lst in lists}
    if len(lengths) != 1:
        raise LengthMismatch(f"mask list lengths disagree: {lengths}")
    for group in zip(*lists):
        shapes = {as_mask(m).shape for m in group}
        if len(shapes) != 1:
            raise DimensionMismatch(f"paired mask shapes disagree: {shapes}")


def miou_full(gts: list[np.ndarray], preds: list[np.ndarray]) -> float:
    """Mean IoU over paired full-object masks; empty-union pairs count 1.0."""
    _check_mask_lists(gts, preds)
    if not gts:
        raise LengthMismatch("cannot average IoU over zero pairs")
    return float(np.mean([_iou(g == 1.0, p == 1.0) for g, p in zip(gts, preds)]))


def miou_occ(
    gt_amodal: list[np.ndarray],
    gt_visible: list[np.ndarray],
    pred_amodal: list[np.ndarray],
) -> float:
    """Mean IoU restricted to the occluded region (amodal minus visible)."""
    _check_mask_lists(gt_amodal, gt_visible, pred_amodal)
    if not gt_amodal:
        raise LengthMismatch("cannot average IoU over zero pairs")
    scores = []
    for ga, gv, pa in zip(gt_amodal, gt_visible, pred_amodal):
        ga, gv, pa = ga == 1.0, gv == 1.0, pa == 1.0
        if (gv & ~ga).any():
            warnings.warn("visible mask exceeds amodal mask; clipping", stacklevel=2)
            gv = gv & ga
        scores.append(_iou(ga & ~gv, pa & ~gv))
    return float(np.mean(scores))


# --- Passrate@K -------------------------------------------------------------------


def passrate_at_k(verdicts: list[PassVerdict], k: int) -> float:
    """Fraction of samples judged satisfied at the requested K.

    Verdicts for other K values are ignored. A sample counts as satisfied
    if any of its verdicts at this K is satisfied.
    """
    at_k = [v for v in verdicts if v.k == k]
    if not at_k:
        raise NoVerdicts(f"no verdicts recorded for k={k}")
    by_sample: dict[str, bool] = {}
    for v in at_k:
        by_sample[v.sample_id] = by_sample.get(v.sample_id, False) or v.satisfied
    return sum(by_sample.values()) / len(by_sample)
