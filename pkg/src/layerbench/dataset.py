"""Manifest format, loaders/writers, prediction ingestion, and statistics.

On-disk layout: one JSON manifest referencing 8-bit PNGs, all paths relative
to the manifest's directory. RGBA layers are RGBA PNGs; visibility masks are
grayscale PNGs thresholded at >= 128. Background layers store a full-frame
RGBA PNG whose alpha is ignored on load and forced to all ones.

Prompt serialization::

    {"type": "point", "value": [x, y]}
    {"type": "box", "value": [x0, y0, x1, y1]}
    {"type": "mask", "path": "relative/path.png"}
    {"type": "text", "value": "the red car"}
    {"type": "background"}
    {"type": "combo", "text": "...", "spatial": {...}}

Prediction directories follow ``<root>/<model_id>/<sample_id>/<layer_id>[_k].png``
with ``k`` in 0..K-1; a missing suffix means K = 1.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pngio
from .errors import (
    DimensionMismatch,
    InvariantViolation,
    MissingFile,
    MissingPredictions,
    NoForegroundLayers,
    ParseError,
)
from .layers import (
    BackgroundPrompt,
    BoxPrompt,
    ComboPrompt,
    LayerKind,
    MaskPrompt,
    PointPrompt,
    Prompt,
    RgbaLayer,
    TextPrompt,
    reconcile_visibility,
)
from .metrics import LayerPair

MANIFEST_VERSION = 1
DEFAULT_OCCLUSION_THRESHOLD = 0.01
QUALITY_LABELS = ("good", "neutral", "poor")


@dataclass
class LayerEntry:
    id: str
    kind: LayerKind
    rgba_path: str
    visibility_path: str
    prompts: list[dict] = field(default_factory=list)
    occluded: bool | None = None
    quality: str | None = None
    salient: bool | None = None

    def to_dict(self) -> dict:
        d: dict = {
            "id": self.id,
            "kind": self.kind.value,
            "rgba_path": self.rgba_path,
            "visibility_path": self.visibility_path,
            "prompts": self.prompts,
        }
        if self.occluded is not None:
            d["occluded"] = self.occluded
        if self.quality is not None:
            d["quality"] = self.quality
        if self.salient is not None:
            d["salient"] = self.salient
        return d


@dataclass
class SampleEntry:
    id: str
    image_path: str
    background_path: str | None
    layers: list[LayerEntry]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image_path": self.image_path,
            "background_path": self.background_path,
            "layers": [layer.to_dict() for layer in self.layers],
        }


@dataclass
class DatasetManifest:
    version: int
    samples: list[SampleEntry]
    root: Path = field(default_factory=Path)
    _layer_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def sample(self, sample_id: str) -> SampleEntry:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    def iter_layers(self):
        for s in self.samples:
            for layer in s.layers:
                yield s, layer

    def load_image(self, sample: SampleEntry) -> np.ndarray:
        return pngio.load_rgb(self.root / sample.image_path)

    def load_background(self, sample: SampleEntry) -> np.ndarray:
        if sample.background_path is None:
            raise MissingFile(f"sample {sample.id!r} has no background image")
        return pngio.load_rgb(self.root / sample.background_path)

    def load_layer(self, sample: SampleEntry, layer: LayerEntry) -> RgbaLayer:
        """Load a ground-truth layer, applying the library's loading rules."""
        key = (sample.id, layer.id)
        if key not in self._layer_cache:
            rgb, alpha = pngio.load_rgba(self.root / layer.rgba_path)
            visibility = pngio.load_mask(self.root / layer.visibility_path)
            if layer.kind is LayerKind.BACKGROUND:
                alpha = np.ones_like(alpha)
            visibility = reconcile_visibility(alpha, visibility)
            self._layer_cache[key] = RgbaLayer(
                rgb=rgb, alpha=alpha, visibility=visibility, kind=layer.kind
            )
        return self._layer_cache[key]

    def to_dict(self) -> dict:
        return {"version": self.version, "samples": [s.to_dict() for s in self.samples]}


# --- prompt (de)serialization ---------------------------------------------------


def parse_prompt(d: dict, root: Path) -> Prompt:
    kind = d.get("type")
    if kind == "point":
        x, y = d["value"]
        return PointPrompt(x=int(x), y=int(y))
    if kind == "box":
        x0, y0, x1, y1 = d["value"]
        return BoxPrompt(x0=int(x0), y0=int(y0), x1=int(x1), y1=int(y1))
    if kind == "mask":
        return MaskPrompt(mask=pngio.load_mask(root / d["path"]))
    if kind == "text":
        return TextPrompt(text=str(d["value"]))
    if kind == "background":
        return BackgroundPrompt()
    if kind == "combo":
        spatial = parse_prompt(d["spatial"], root)
        if isinstance(spatial, (TextPrompt, ComboPrompt)):
            raise ParseError("combo prompts need a spatial component")
        return ComboPrompt(text=str(d["text"]), spatial=spatial)
    raise ParseError(f"unknown prompt type {kind!r}")


def _check_prompt_dict(d: dict, sample_id: str, layer_id: str, root: Path) -> None:
    where = f"sample {sample_id!r} layer {layer_id!r}"
    if not isinstance(d, dict) or "type" not in d:
        raise ParseError(f"{where}: prompt entries must be objects with a 'type'")
    kind = d["type"]
    if kind in ("point", "box"):
        n = 2 if kind == "point" else 4
        value = d.get("value")
        if not isinstance(value, list) or len(value) != n:
            raise ParseError(f"{where}: {kind} prompt needs a {n}-element 'value'")
    elif kind == "mask":
        if "path" not in d:
            raise ParseError(f"{where}: mask prompt needs a 'path'")
        if not (root / d["path"]).is_file():
            raise MissingFile(f"{where}: mask prompt file {d['path']!r} not found")
    elif kind == "text":
        if not isinstance(d.get("value"), str):
            raise ParseError(f"{where}: text prompt needs a string 'value'")
    elif kind == "background":
        pass
    elif kind == "combo":
        if "text" not in d or "spatial" not in d:
            raise ParseError(f"{where}: combo prompt needs 'text' and 'spatial'")
        _check_prompt_dict(d["spatial"], sample_id, layer_id, root)
    else:
        raise ParseError(f"{where}: unknown prompt type {kind!r}")


# --- manifest I/O ----------------------------------------------------------------


def _parse_layer(d: dict, sample_id: str, root: Path) -> LayerEntry:
    where = f"sample {sample_id!r}"
    try:
        kind = LayerKind(d["kind"])
        entry = LayerEntry(
            id=str(d["id"]),
            kind=kind,
            rgba_path=str(d["rgba_path"]),
            visibility_path=str(d["visibility_path"]),
            prompts=list(d.get("prompts", ())),
            occluded=d.get("occluded"),
            quality=d.get("quality"),
            salient=d.get("salient"),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{where}: malformed layer entry: {exc}") from exc
    if entry.quality is not None and entry.quality not in QUALITY_LABELS:
        raise ParseError(f"{where} layer {entry.id!r}: bad quality label {entry.quality!r}")
    for prompt in entry.prompts:
        _check_prompt_dict(prompt, sample_id, entry.id, root)
    return entry


def load_manifest(path: str | Path, validate_pixels: bool = True) -> DatasetManifest:
    """Parse and validate a manifest.

    Structural checks always run (unique ids, files exist, prompt schema).
    With validate_pixels, every layer is loaded once so dimension and
    visibility invariants are enforced up front.
    """
    path = Path(path)
    root = path.parent
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise MissingFile(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest {path} is not valid JSON: {exc}") from exc
    if payload.get("version") != MANIFEST_VERSION:
        raise ParseError(f"unsupported manifest version {payload.get('version')!r}")

    samples = []
    for raw in payload.get("samples", ()):
        try:
            sample = SampleEntry(
                id=str(raw["id"]),
                image_path=str(raw["image_path"]),
                background_path=raw.get("background_path"),
                layers=[_parse_layer(d, raw["id"], root) for d in raw["layers"]],
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed sample entry: {exc}") from exc
        if not sample.layers:
            raise InvariantViolation(f"sample {sample.id!r} has no layers")
        samples.append(sample)

    ids = [s.id for s in samples]
    dupes = [i for i, c in Counter(ids).items() if c > 1]
    if dupes:
        raise InvariantViolation(f"duplicate sample ids: {dupes}")
    for sample in samples:
        layer_ids = [layer.id for layer in sample.layers]
        dupes = [i for i, c in Counter(layer_ids).items() if c > 1]
        if dupes:
            raise InvariantViolation(f"sample {sample.id!r}: duplicate layer ids {dupes}")

    manifest = DatasetManifest(version=payload["version"], samples=samples, root=root)
    _validate_files(manifest)
    if validate_pixels:
        _validate_pixels(manifest)
    return manifest


def _validate_files(manifest: DatasetManifest) -> None:
    for sample in manifest.samples:
        paths = [sample.image_path]
        if sample.background_path is not None:
            paths.append(sample.background_path)
        for layer in sample.layers:
            paths.extend([layer.rgba_path, layer.visibility_path])
        for rel in paths:
            if not (manifest.root / rel).is_file():
                raise MissingFile(f"sample {sample.id!r}: missing file {rel!r}")


def _validate_pixels(manifest: DatasetManifest) -> None:
    for sample in manifest.samples:
        image = manifest.load_image(sample)
        dims = image.shape[:2]
        if sample.background_path is not None:
            bg = manifest.load_background(sample)
            if bg.shape[:2] != dims:
                raise InvariantViolation(
                    f"sample {sample.id!r}: background dims {bg.shape[:2]} != image {dims}"
                )
        for layer in sample.layers:
            try:
                loaded = manifest.load_layer(sample, layer)
            except (InvariantViolation, DimensionMismatch) as exc:
                raise InvariantViolation(
                    f"sample {sample.id!r} layer {layer.id!r}: {exc}"
                ) from exc
            if loaded.alpha.shape != dims:
                raise InvariantViolation(
                    f"sample {sample.id!r} layer {layer.id!r}: "
                    f"layer dims {loaded.alpha.shape} != image {dims}"
                )
            if layer.kind is LayerKind.FOREGROUND and not (loaded.alpha > 0).any():
                raise InvariantViolation(
                    f"sample {sample.id!r} layer {layer.id!r}: empty foreground alpha"
                )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write the manifest JSON atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


# --- statistics -------------------------------------------------------------------


def instance_distribution(manifest: DatasetManifest) -> dict[int, int]:
    """Histogram: number of foreground layers per image -> image count."""
    counts = Counter(
        sum(1 for layer in s.layers if layer.kind is LayerKind.FOREGROUND)
        for s in manifest.samples
    )
    return dict(sorted(counts.items()))


def size_ratio_histogram(manifest: DatasetManifest, bins: int = 10) -> list[int]:
    """Histogram of foreground area ratios |alpha > 0| / (H * W) over [0, 1]."""
    if bins < 1:
        raise InvariantViolation(f"bins must be >= 1, got {bins}")
    ratios = []
    for sample, layer in manifest.iter_layers():
        if layer.kind is not LayerKind.FOREGROUND:
            continue
        loaded = manifest.load_layer(sample, layer)
        ratios.append((loaded.alpha > 0).mean())
    hist, _ = np.histogram(ratios, bins=bins, range=(0.0, 1.0))
    return hist.tolist()


def computed_occluded(layer: RgbaLayer, threshold: float = DEFAULT_OCCLUSION_THRESHOLD) -> bool:
    """Geometric occlusion test: visible fraction of the support below 1 - threshold."""
    support = layer.alpha > 0
    n_support = int(support.sum())
    if n_support == 0:
        return False
    visible_in_support = int(((layer.visibility == 1.0) & support).sum())
    return 1.0 - visible_in_support / n_support > threshold


def occlusion_report(
    manifest: DatasetManifest, threshold: float = DEFAULT_OCCLUSION_THRESHOLD
) -> dict:
    """Computed occlusion rate plus a flag-vs-computed consistency report."""
    if not 0.0 <= threshold < 1.0:
        raise InvariantViolation(f"threshold must lie in [0, 1), got {threshold}")
    rows = []
    for sample, layer in manifest.iter_layers():
        if layer.kind is not LayerKind.FOREGROUND:
            continue
        computed = computed_occluded(manifest.load_layer(sample, layer), threshold)
        rows.append(
            {
                "sample_id": sample.id,
                "layer_id": layer.id,
                "computed": computed,
                "flag": layer.occluded,
            }
        )
    if not rows:
        raise NoForegroundLayers("manifest has no foreground layers")
    n_flagged = sum(1 for r in rows if r["flag"] is not None)
    mismatches = [r for r in rows if r["flag"] is not None and r["flag"] != r["computed"]]
    return {
        "threshold": threshold,
        "rate": sum(r["computed"] for r in rows) / len(rows),
        "n_foreground": len(rows),
        "n_flagged": n_flagged,
        "mismatches": mismatches,
    }


def occlusion_rate(
    manifest: DatasetManifest, threshold: float = DEFAULT_OCCLUSION_THRESHOLD
) -> float:
    """Fraction of foreground layers whose support is partly invisible."""
    return occlusion_report(manifest, threshold)["rate"]


def quality_audit(manifest: DatasetManifest) -> dict:
    """Per-kind good/neutral/poor/unlabeled tallies and the pass share.

    The pass share counts good + neutral over labeled layers only.
    """
    report = {}
    for kind in LayerKind:
        counts = Counter()
        for _, layer in manifest.iter_layers():
            if layer.kind is kind:
                counts[layer.quality or "unlabeled"] += 1
        labeled = sum(counts[q] for q in QUALITY_LABELS)
        passed = counts["good"] + counts["neutral"]
        report[kind.value] = {
            "good": counts["good"],
            "neutral": counts["neutral"],
            "poor": counts["poor"],
            "unlabeled": counts["unlabeled"],
            "pass_share": passed / labeled if labeled else None,
        }
    return report


# --- prediction ingestion -----------------------------------------------------------


@dataclass
class PredictionSet:
    """All prediction files one model produced, K >= 1 outputs per layer."""

    model_id: str
    entries: dict[tuple[str, str], list[Path]]


def discover_predictions(
    pred_root: str | Path, model_id: str, manifest: DatasetManifest
) -> PredictionSet:
    """Scan <pred_root>/<model_id>/<sample_id>/<layer_id>[_k].png for outputs."""
    model_dir = Path(pred_root) / model_id
    if not model_dir.is_dir():
        raise MissingFile(f"no prediction directory for model {model_id!r} at {model_dir}")
    entries: dict[tuple[str, str], list[Path]] = {}
    for sample in manifest.samples:
        sample_dir = model_dir / sample.id
        if not sample_dir.is_dir():
            continue
        for layer in sample.layers:
            single = sample_dir / f"{layer.id}.png"
            if single.is_file():
                entries[(sample.id, layer.id)] = [single]
                continue
            numbered = []
            for k in range(10_000):
                candidate = sample_dir / f"{layer.id}_{k}.png"
                if not candidate.is_file():
                    break
                numbered.append(candidate)
            if numbered:
                entries[(sample.id, layer.id)] = numbered
    return PredictionSet(model_id=model_id, entries=entries)


def load_prediction_layer(path: str | Path, kind: LayerKind) -> RgbaLayer:
    """Load a predicted RGBA file; visibility is derived as the alpha support."""
    rgb, alpha = pngio.load_rgba(path)
    if kind is LayerKind.BACKGROUND:
        alpha = np.ones_like(alpha)
    return RgbaLayer(
        rgb=rgb, alpha=alpha, visibility=(alpha > 0).astype(np.float64), kind=kind
    )


def pair_predictions(
    manifest: DatasetManifest,
    preds: PredictionSet,
    allow_missing: bool = False,
    occlusion_threshold: float = DEFAULT_OCCLUSION_THRESHOLD,
) -> tuple[list[LayerPair], dict]:
    """Match predictions to ground truth, returning pairs plus coverage info.

    Missing predictions abort the evaluation unless allow_missing is set, in
    which case they are reported in the coverage block instead.
    """
    pairs = []
    missing = []
    for sample, layer in manifest.iter_layers():
        key = (sample.id, layer.id)
        paths = preds.entries.get(key)
        if not paths:
            missing.append(key)
            continue
        gt = manifest.load_layer(sample, layer)
        try:
            pred = load_prediction_layer(paths[0], layer.kind)
        except (OSError, ValueError) as exc:
            raise MissingFile(f"unreadable prediction {paths[0]}: {exc}") from exc
        if pred.alpha.shape != gt.alpha.shape:
            raise DimensionMismatch(
                f"prediction {paths[0]} dims {pred.alpha.shape} != gt {gt.alpha.shape}"
            )
        if layer.kind is LayerKind.FOREGROUND:
            background = manifest.load_background(sample)
        else:
            background = manifest.load_image(sample)
        occluded = (
            layer.occluded
            if layer.occluded is not None
            else computed_occluded(gt, occlusion_threshold)
        )
        pairs.append(
            LayerPair(
                gt=gt,
                pred=pred,
                background=background,
                occluded=occluded,
                sample_id=sample.id,
                layer_id=layer.id,
            )
        )
    total = len(pairs) + len(missing)
    if missing and not allow_missing:
        listed = ", ".join(f"{s}/{l}" for s, l in missing[:20])
        raise MissingPredictions(
            f"model {preds.model_id!r} missing {len(missing)} of {total} predictions: {listed}"
        )
    coverage = {
        "model_id": preds.model_id,
        "n_expected": total,
        "n_predicted": len(pairs),
        "missing": [f"{s}/{l}" for s, l in missing],
    }
    return pairs, coverage
