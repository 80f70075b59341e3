"""End-to-end scoring: pairs -> raw metrics -> bounded HPA reports.

Also owns the canonical JSON writer used for every machine-readable artifact:
keys sorted, floats printed with 9 significant digits, so identical inputs
always produce byte-identical report files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import DatasetManifest, discover_predictions, pair_predictions
from .embedder import EmbedderSpec
from .errors import TooFewSamples
from .hpa import MetricBounds, ScoreReport, Subset, hpa
from .layers import LayerKind
from .metrics import (
    DEFAULT_DIRECTION_EPS,
    DEFAULT_FRECHET_REG,
    LayerPair,
    completion_similarity,
    fidelity_fid,
    preservation_distance,
)


@dataclass
class RawScores:
    """Aggregated raw metrics for one model on one subset of pairs."""

    s_vis: float
    s_gen: float
    s_fid: float
    n_samples: int
    n_skipped_gen: int
    per_sample: list[dict] = field(default_factory=list)

    def metric_dict(self) -> dict[str, float]:
        return {"s_vis": self.s_vis, "s_gen": self.s_gen, "s_fid": self.s_fid}


def subset_filter(pairs: list[LayerPair], subset: Subset) -> list[LayerPair]:
    if subset is Subset.ALL:
        return list(pairs)
    if subset is Subset.OCCLUDED_ONLY:
        return [p for p in pairs if p.occluded]
    if subset is Subset.FOREGROUND_ONLY:
        return [p for p in pairs if p.gt.kind is LayerKind.FOREGROUND]
    return [p for p in pairs if p.gt.kind is LayerKind.BACKGROUND]


def score_pairs(
    pairs: list[LayerPair],
    spec: EmbedderSpec,
    reg: float = DEFAULT_FRECHET_REG,
    eps: float = DEFAULT_DIRECTION_EPS,
) -> RawScores:
    """Compute the three raw metric axes over a list of pairs.

    Preservation and completion average per-pair values (completion over the
    non-skipped pairs only); fidelity is a single set-level number.
    """
    if len(pairs) < 2:
        raise TooFewSamples(f"evaluation needs at least 2 pairs, got {len(pairs)}")
    rows = []
    vis_values = []
    gen_values = []
    for pair in pairs:
        vis = preservation_distance(pair, spec)
        gen = completion_similarity(pair, spec, eps)
        vis_values.append(vis)
        if gen is not None:
            gen_values.append(gen)
        rows.append(
            {
                "sample_id": pair.sample_id,
                "layer_id": pair.layer_id,
                "kind": pair.gt.kind.value,
                "occluded": pair.occluded,
                "s_vis": vis,
                "s_gen": gen,
            }
        )
    s_fid = fidelity_fid(pairs, spec, reg)
    return RawScores(
        s_vis=sum(vis_values) / len(vis_values),
        s_gen=sum(gen_values) / len(gen_values) if gen_values else 0.0,
        s_fid=s_fid,
        n_samples=len(pairs),
        n_skipped_gen=len(pairs) - len(gen_values),
        per_sample=rows,
    )


def evaluate_models(
    manifest: DatasetManifest,
    pred_root,
    model_ids: list[str],
    spec: EmbedderSpec,
    subset: Subset = Subset.ALL,
    allow_missing: bool = False,
    reg: float = DEFAULT_FRECHET_REG,
) -> tuple[dict[str, RawScores], list[dict]]:
    """Score each model's predictions; returns raw scores and coverage blocks."""
    raw: dict[str, RawScores] = {}
    coverages = []
    for model_id in model_ids:
        preds = discover_predictions(pred_root, model_id, manifest)
        pairs, coverage = pair_predictions(manifest, preds, allow_missing=allow_missing)
        raw[model_id] = score_pairs(subset_filter(pairs, subset), spec, reg)
        coverages.append(coverage)
    return raw, coverages


def build_reports(
    raw: dict[str, RawScores], bounds: MetricBounds, subset: Subset
) -> list[ScoreReport]:
    reports = []
    for model_id in sorted(raw):
        scores = raw[model_id]
        reports.append(
            ScoreReport(
                model_id=model_id,
                s_vis=scores.s_vis,
                s_gen=scores.s_gen,
                s_fid=scores.s_fid,
                hpa=hpa(scores.s_vis, scores.s_gen, scores.s_fid, bounds),
                n_samples=scores.n_samples,
                n_skipped_gen=scores.n_skipped_gen,
                subset=subset,
            )
        )
    return reports


# --- canonical JSON -------------------------------------------------------------


def _format_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError(f"cannot serialize non-finite float {x}")
    return format(x, ".9g")


def canonical_json(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 9 significant digits."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [inner + canonical_json(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            inner + json.dumps(str(k)) + ": " + canonical_json(obj[k], indent + 1)
            for k in sorted(obj, key=str)
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_canonical_json(obj, path: str | Path) -> None:
    Path(path).write_text(canonical_json(obj) + "\n")
