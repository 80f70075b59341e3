"""Exception hierarchy shared across the library.

Every module raises subclasses of LayerBenchError so callers (CLI, service)
can catch one base type and map it to structured error output.
"""

from __future__ import annotations


class LayerBenchError(Exception):
    """Base class for all library errors."""


# --- pixel / layer domain ---------------------------------------------------


class DimensionMismatch(LayerBenchError):
    pass


class OutOfBounds(LayerBenchError):
    pass


class EmptyAlpha(LayerBenchError):
    """No pixel of the alpha map exceeds the requested threshold."""


class EmptyVisibility(LayerBenchError):
    """The visibility mask contains no visible pixel."""


class NoSpatialComponent(LayerBenchError):
    """Prompt carries no spatial part and cannot be rendered to a canvas."""


class InvariantViolation(LayerBenchError):
    pass


# --- embedder ---------------------------------------------------------------


class BackendUnavailable(LayerBenchError):
    pass


class ProtocolError(LayerBenchError):
    """External embedder returned a malformed or mismatched response."""


class UnsupportedMode(LayerBenchError):
    pass


# --- metrics / statistics ---------------------------------------------------


class TooFewSamples(LayerBenchError):
    pass


class TooFewModels(LayerBenchError):
    pass


class LengthMismatch(LayerBenchError):
    pass


class NumericalFailure(LayerBenchError):
    pass


class NoVerdicts(LayerBenchError):
    pass


class UnknownMetric(LayerBenchError):
    pass


class ZeroVariance(LayerBenchError):
    pass


class ModelSetMismatch(LayerBenchError):
    pass


# --- elo --------------------------------------------------------------------


class UnknownModel(LayerBenchError):
    pass


class DuplicateMatchId(LayerBenchError):
    pass


class StaleLease(LayerBenchError):
    pass


class NotEnoughModels(LayerBenchError):
    pass


class NoComparableSamples(LayerBenchError):
    pass


# --- dataset ----------------------------------------------------------------


class ParseError(LayerBenchError):
    pass


class MissingFile(LayerBenchError):
    pass


class NoForegroundLayers(LayerBenchError):
    pass


class MissingPredictions(LayerBenchError):
    """Prediction set does not cover every manifest layer."""
