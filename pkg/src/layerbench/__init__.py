"""layerbench: evaluation stack for referring layer decomposition.

Core pieces: the RGBA layer data model and pixel operations, a deterministic
reference embedder plus an external-embedder protocol, the three metric axes
(preservation / completion / fidelity) with Fréchet numerics, min-max HPA
aggregation, an Elo pairwise human-study engine, dataset manifest tooling,
and the CLI / annotation service built on top.
"""

from .elo import EloLedger, MatchLease, MatchRecord, Outcome, expected_score, simulate_study
from .embedder import REFERENCE_SPEC, EmbedderMode, EmbedderSpec, embed, perceptual_distance
from .hpa import MetricBounds, ScoreReport, Subset, compute_bounds, hpa, pearson, spearman
from .layers import (
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
    render_checkerboard,
    render_prompt_canvas,
    tight_bbox,
)
from .metrics import (
    GaussianStats,
    LayerPair,
    PassVerdict,
    completion_similarity,
    fidelity_fid,
    fit_gaussian,
    frechet_distance,
    miou_full,
    miou_occ,
    passrate_at_k,
    preservation_distance,
)

__version__ = "0.1.0"
