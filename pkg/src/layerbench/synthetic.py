"""Procedural evaluation datasets for tests, demos, and calibration runs.

Generates image-layer-prompt triplets made of textured ellipses and
rectangles over smooth gradient backgrounds, with genuine occlusions
(two-shape samples stack a shape over another), plus prediction directories
that are either exact copies of the ground truth or corrupted at a chosen
strength. Everything is seeded and byte-deterministic.
"""

from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np

from . import pngio
from .dataset import (
    DatasetManifest,
    LayerEntry,
    SampleEntry,
    load_manifest,
    save_manifest,
)
from .layers import LayerKind, tight_bbox

_SHAPE_NAMES = ("ellipse", "rectangle")
_COLOR_NAMES = {
    (0.85, 0.2, 0.2): "red",
    (0.2, 0.65, 0.25): "green",
    (0.2, 0.35, 0.85): "blue",
    (0.9, 0.75, 0.2): "yellow",
    (0.7, 0.3, 0.8): "purple",
    (0.9, 0.55, 0.2): "orange",
}
_QUALITY_CYCLE = ("good", "good", "neutral", "poor", None)


def _gradient_background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    c0 = rng.uniform(0.2, 0.8, size=3)
    c1 = rng.uniform(0.2, 0.8, size=3)
    t = np.linspace(0.0, 1.0, height)[:, None, None]
    s = np.linspace(0.0, 1.0, width)[None, :, None]
    return np.clip(c0 * (1 - t) + c1 * t * (0.5 + 0.5 * s), 0.0, 1.0)


def _shape_mask(
    rng: np.random.Generator, height: int, width: int, cy: float, cx: float
) -> tuple[np.ndarray, str]:
    shape = _SHAPE_NAMES[int(rng.integers(len(_SHAPE_NAMES)))]
    ry = rng.uniform(0.12, 0.22) * height
    rx = rng.uniform(0.12, 0.22) * width
    yy, xx = np.mgrid[0:height, 0:width]
    if shape == "ellipse":
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    else:
        mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    return mask.astype(np.float64), shape


def _shade(rng: np.random.Generator, color, height: int, width: int) -> np.ndarray:
    base = np.asarray(color)
    t = np.linspace(-0.12, 0.12, height)[:, None, None]
    texture = rng.uniform(-0.04, 0.04, size=(height, width, 1))
    return np.clip(base + t + texture, 0.0, 1.0)


def generate_dataset(
    root: str | Path,
    n_samples: int = 20,
    seed: int = 0,
    height: int = 96,
    width: int = 96,
    background_layers: bool = False,
) -> Path:
    """Write a synthetic dataset under root; returns the manifest path.

    Three out of four samples carry two overlapping foreground shapes (the
    lower one occluded), the rest a single fully visible shape. With the
    defaults this yields 20 samples and 35 foreground layers.
    """
    root = Path(root)
    for sub in ("images", "backgrounds", "layers", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    colors = list(_COLOR_NAMES)
    samples = []
    quality_idx = 0
    for si in range(n_samples):
        rng = np.random.default_rng([seed, si])
        sample_id = f"s{si:03d}"
        background = _gradient_background(rng, height, width)
        image = background.copy()

        n_shapes = 2 if si % 4 != 3 else 1
        shape_data = []
        cy = rng.uniform(0.35, 0.65) * height
        cx = rng.uniform(0.35, 0.65) * width
        for li in range(n_shapes):
            if li > 0:
                # overlap the previous shape so the lower layer is occluded
                cy = np.clip(cy + rng.uniform(0.08, 0.16) * height, 0, height - 1)
                cx = np.clip(cx + rng.uniform(0.08, 0.16) * width, 0, width - 1)
            mask, shape_name = _shape_mask(rng, height, width, cy, cx)
            color = colors[int(rng.integers(len(colors)))]
            rgb = _shade(rng, color, height, width) * mask[:, :, None]
            shape_data.append(
                {"mask": mask, "rgb": rgb, "name": f"the {_COLOR_NAMES[color]} {shape_name}"}
            )

        layers = []
        for li, data in enumerate(shape_data):
            visibility = data["mask"].copy()
            for above in shape_data[li + 1 :]:
                visibility *= 1.0 - above["mask"]
            layer_id = f"l{li}"
            rgba_rel = f"layers/{sample_id}_{layer_id}.png"
            vis_rel = f"masks/{sample_id}_{layer_id}.png"
            pngio.save_rgba(root / rgba_rel, data["rgb"], data["mask"])
            pngio.save_mask(root / vis_rel, visibility)

            box = tight_bbox(data["mask"])
            com_y, com_x = np.argwhere(data["mask"] > 0).mean(axis=0)
            prompts = [
                {"type": "box", "value": [box.x0, box.y0, box.x1, box.y1]},
                {"type": "point", "value": [int(com_x), int(com_y)]},
                {"type": "text", "value": data["name"]},
            ]
            occluded = bool((data["mask"] > 0).sum() > (visibility > 0).sum())
            layers.append(
                LayerEntry(
                    id=layer_id,
                    kind=LayerKind.FOREGROUND,
                    rgba_path=rgba_rel,
                    visibility_path=vis_rel,
                    prompts=prompts,
                    occluded=occluded,
                    quality=_QUALITY_CYCLE[quality_idx % len(_QUALITY_CYCLE)],
                    salient=li == len(shape_data) - 1,
                )
            )
            quality_idx += 1
            image = data["rgb"] * data["mask"][:, :, None] + image * (
                1.0 - data["mask"][:, :, None]
            )

        if background_layers:
            any_fg = np.zeros((height, width))
            for data in shape_data:
                any_fg = np.maximum(any_fg, data["mask"])
            bg_rgba_rel = f"layers/{sample_id}_bg.png"
            bg_vis_rel = f"masks/{sample_id}_bg.png"
            pngio.save_rgba(root / bg_rgba_rel, background, np.ones((height, width)))
            pngio.save_mask(root / bg_vis_rel, 1.0 - any_fg)
            layers.append(
                LayerEntry(
                    id="bg",
                    kind=LayerKind.BACKGROUND,
                    rgba_path=bg_rgba_rel,
                    visibility_path=bg_vis_rel,
                    prompts=[{"type": "background"}],
                    quality=_QUALITY_CYCLE[quality_idx % len(_QUALITY_CYCLE)],
                )
            )
            quality_idx += 1

        image_rel = f"images/{sample_id}.png"
        background_rel = f"backgrounds/{sample_id}.png"
        pngio.save_rgb(root / image_rel, image)
        pngio.save_rgb(root / background_rel, background)
        samples.append(
            SampleEntry(
                id=sample_id,
                image_path=image_rel,
                background_path=background_rel,
                layers=layers,
            )
        )

    manifest = DatasetManifest(version=1, samples=samples, root=root)
    manifest_path = root / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path


def write_identity_predictions(
    manifest_path: str | Path, pred_root: str | Path, model_id: str
) -> None:
    """Copy every ground-truth RGBA file into the prediction layout (K = 1)."""
    manifest = load_manifest(manifest_path, validate_pixels=False)
    for sample, layer in manifest.iter_layers():
        out_dir = Path(pred_root) / model_id / sample.id
        out_dir.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(manifest.root / layer.rgba_path, out_dir / f"{layer.id}.png")


def write_corrupted_predictions(
    manifest_path: str | Path,
    pred_root: str | Path,
    model_id: str,
    strength: float,
    seed: int = 0,
    k: int = 1,
) -> None:
    """Write predictions degraded by per-pixel noise of the given strength.

    Strength 0 reproduces the ground truth bytes exactly; larger strengths
    blend in more uniform noise, degrading all three metric axes together.
    """
    manifest = load_manifest(manifest_path, validate_pixels=False)
    for si, sample in enumerate(manifest.samples):
        out_dir = Path(pred_root) / model_id / sample.id
        out_dir.mkdir(parents=True, exist_ok=True)
        for li, layer in enumerate(sample.layers):
            rgb, alpha = pngio.load_rgba(manifest.root / layer.rgba_path)
            for ki in range(k):
                if strength > 0.0:
                    rng = np.random.default_rng([seed, si, li, ki])
                    noise = rng.uniform(0.0, 1.0, size=rgb.shape)
                    corrupted = np.clip((1.0 - strength) * rgb + strength * noise, 0.0, 1.0)
                else:
                    corrupted = rgb
                name = f"{layer.id}.png" if k == 1 else f"{layer.id}_{ki}.png"
                pngio.save_rgba(out_dir / name, corrupted, alpha)
