"""Metric orientation, min-max normalization, HPA aggregation, and correlations.

The three raw metrics differ in scale and monotonicity (preservation and
fidelity: lower is better; completion: higher is better). Each is min-max
normalized against bounds empirically determined from a pool of candidate
models, oriented so 1 is best, clamped to [0, 1], and averaged with equal
weights into the human-preference-aligned (HPA) score. Bounds are persisted
to a versioned JSON file and must be supplied explicitly at evaluation time
so scores stay comparable across future models.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    LengthMismatch,
    ModelSetMismatch,
    ParseError,
    TooFewModels,
    UnknownMetric,
    ZeroVariance,
)

BOUNDS_FILE_VERSION = 1
DEGENERATE_WIDENING = 1e-9

METRIC_NAMES = ("s_vis", "s_gen", "s_fid")


class Orientation(Enum):
    LOWER_BETTER = "lower_better"
    HIGHER_BETTER = "higher_better"


METRIC_ORIENTATIONS = {
    "s_vis": Orientation.LOWER_BETTER,
    "s_gen": Orientation.HIGHER_BETTER,
    "s_fid": Orientation.LOWER_BETTER,
}


class Subset(Enum):
    ALL = "all"
    OCCLUDED_ONLY = "occ"
    FOREGROUND_ONLY = "fg"
    BACKGROUND_ONLY = "bg"


@dataclass(frozen=True)
class MetricBound:
    lo: float
    hi: float
    orientation: Orientation

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ZeroVariance(f"bounds must satisfy min < max, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class MetricBounds:
    """Per-metric min/max observed over a model pool, plus that pool's ids."""

    s_vis: MetricBound
    s_gen: MetricBound
    s_fid: MetricBound
    pool: tuple[str, ...] = ()

    def __post_init__(self):
        for name in METRIC_NAMES:
            if getattr(self, name).orientation is not METRIC_ORIENTATIONS[name]:
                raise UnknownMetric(f"metric {name} carries the wrong orientation")

    def bound(self, metric: str) -> MetricBound:
        if metric not in METRIC_NAMES:
            raise UnknownMetric(f"unknown metric {metric!r}")
        return getattr(self, metric)


@dataclass(frozen=True)
class ScoreReport:
    """Raw and aggregated scores for one model on one evaluation subset."""

    model_id: str
    s_vis: float
    s_gen: float
    s_fid: float
    hpa: float
    n_samples: int
    n_skipped_gen: int
    subset: Subset = Subset.ALL

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "s_vis": self.s_vis,
            "s_gen": self.s_gen,
            "s_fid": self.s_fid,
            "hpa": self.hpa,
            "n_samples": self.n_samples,
            "n_skipped_gen": self.n_skipped_gen,
            "subset": self.subset.value,
        }


def compute_bounds(raw_scores: dict[str, dict[str, float]]) -> MetricBounds:
    """Min/max per metric over a pool of raw per-model scores.

    Degenerate ranges (all models identical on a metric) are widened by
    +-1e-9 with a warning so normalization stays defined.
    """
    if len(raw_scores) < 2:
        raise TooFewModels(f"bounds need at least 2 models, got {len(raw_scores)}")
    bounds = {}
    for name in METRIC_NAMES:
        values = [scores[name] for scores in raw_scores.values()]
        lo, hi = min(values), max(values)
        if lo == hi:
            warnings.warn(f"degenerate bounds for {name}; widening by 1e-9", stacklevel=2)
            lo -= DEGENERATE_WIDENING
            hi += DEGENERATE_WIDENING
        bounds[name] = MetricBound(lo=lo, hi=hi, orientation=METRIC_ORIENTATIONS[name])
    return MetricBounds(pool=tuple(sorted(raw_scores)), **bounds)


def normalize(value: float, metric: str, bounds: MetricBounds) -> float:
    """Min-max normalize one raw value so 1 is best, clamped to [0, 1]."""
    b = bounds.bound(metric)
    span = b.hi - b.lo
    if b.orientation is Orientation.HIGHER_BETTER:
        scaled = (value - b.lo) / span
    else:
        scaled = (b.hi - value) / span
    return float(np.clip(scaled, 0.0, 1.0))


def hpa(s_vis: float, s_gen: float, s_fid: float, bounds: MetricBounds) -> float:
    """Unweighted mean of the three oriented-normalized metrics."""
    return (
        normalize(s_vis, "s_vis", bounds)
        + normalize(s_gen, "s_gen", bounds)
        + normalize(s_fid, "s_fid", bounds)
    ) / 3.0


# --- bounds persistence ---------------------------------------------------------


def save_bounds(bounds: MetricBounds, path: str | Path) -> None:
    payload = {
        "version": BOUNDS_FILE_VERSION,
        "metrics": {
            name: {
                "min": bounds.bound(name).lo,
                "max": bounds.bound(name).hi,
                "orientation": bounds.bound(name).orientation.value,
            }
            for name in METRIC_NAMES
        },
        "pool": list(bounds.pool),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_bounds(path: str | Path) -> MetricBounds:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read bounds file {path}: {exc}") from exc
    if payload.get("version") != BOUNDS_FILE_VERSION:
        raise ParseError(f"unsupported bounds file version {payload.get('version')!r}")
    try:
        kwargs = {
            name: MetricBound(
                lo=float(payload["metrics"][name]["min"]),
                hi=float(payload["metrics"][name]["max"]),
                orientation=Orientation(payload["metrics"][name]["orientation"]),
            )
            for name in METRIC_NAMES
        }
        pool = tuple(payload.get("pool", ()))
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed bounds file {path}: {exc}") from exc
    return MetricBounds(pool=pool, **kwargs)


# --- correlation statistics -------------------------------------------------------


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"inputs must be equal-length vectors: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise LengthMismatch("correlation needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx @ dx) * (dy @ dy))
    if denom == 0.0:
        raise ZeroVariance("correlation undefined for constant input")
    return float(np.clip(dx @ dy / denom, -1.0, 1.0))


def _fractional_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank positions."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks on ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"inputs must be equal-length vectors: {x.shape} vs {y.shape}")
    return pearson(_fractional_ranks(x), _fractional_ranks(y))


def correlation_report(
    hpa_scores: dict[str, float], elo_ratings: dict[str, float]
) -> dict:
    """Pearson/Spearman of HPA vs Elo plus scatter rows for plotting."""
    if set(hpa_scores) != set(elo_ratings):
        raise ModelSetMismatch(
            f"model sets disagree: {sorted(hpa_scores)} vs {sorted(elo_ratings)}"
        )
    models = sorted(hpa_scores)
    hpas = [hpa_scores[m] for m in models]
    elos = [elo_ratings[m] for m in models]
    return {
        "pearson": pearson(hpas, elos),
        "spearman": spearman(hpas, elos),
        "scatter": [
            {"model_id": m, "hpa": hpa_scores[m], "elo": elo_ratings[m]} for m in models
        ],
    }
