"""Exception hierarchy shared by every stage of the review pipeline.

All errors raised by this package derive from :class:`SlrPipeError`, so
callers can catch one base class at the CLI boundary.  Warning categories
live here too: they signal degraded-but-usable results (empty feeds,
degenerate clusterings, fallback text) without aborting a run.
"""

from __future__ import annotations

__all__ = [
    "SlrPipeError",
    # gateway
    "UnknownTemplate",
    "UnboundPlaceholder",
    "UnexpectedBinding",
    "BackendUnavailable",
    "AuthError",
    "RateLimited",
    "EmptyCompletion",
    "EmptyTopic",
    "MalformedQuery",
    # search / screening
    "NetworkError",
    "FeedParseError",
    "ProviderUnavailable",
    "EmbeddingDimMismatch",
    "DimMismatch",
    "ZeroVector",
    "InvalidK",
    # topic modeling
    "TooFewDocuments",
    "TuningFailed",
    "EmptyCluster",
    "InvalidPartition",
    # synthesis
    "EmptyAbstract",
    "SummaryBackendUnavailable",
    "CitationLost",
    # document building
    "NoPapers",
    "DuplicateKey",
    "UndefinedCitation",
    "UnbalancedBraces",
    "UnbalancedEnvironment",
    "ExportError",
    # evaluation
    "NoWords",
    "DegenerateCounts",
    "MissingStage",
    "InvalidLimit",
    # pipeline / CLI
    "ConfigError",
    "StageFailure",
    "ManifestCorrupt",
    "UnknownRun",
    # warnings
    "SlrPipeWarning",
    "EmptyResultWarning",
    "DegenerateClusteringWarning",
    "OutOfBandWarning",
    "FallbackTextWarning",
    "CitationRepairWarning",
    "DegenerateCountsWarning",
    "SweepPointWarning",
]


class SlrPipeError(Exception):
    """Base class for every error raised by this package."""


# --------------------------------------------------------------------------
# LLM gateway
# --------------------------------------------------------------------------

class UnknownTemplate(SlrPipeError):
    """A prompt-template id does not name a bundled template."""


class UnboundPlaceholder(SlrPipeError):
    """A template placeholder was left without a binding."""


class UnexpectedBinding(SlrPipeError):
    """A binding was supplied for a placeholder the template does not use."""


class BackendUnavailable(SlrPipeError):
    """The remote completion backend failed after all retry attempts."""


class AuthError(SlrPipeError):
    """The remote completion backend rejected the credentials."""


class RateLimited(SlrPipeError):
    """The remote completion backend kept returning rate-limit responses."""


class EmptyCompletion(SlrPipeError):
    """A completion backend returned empty or whitespace-only text."""


class EmptyTopic(SlrPipeError):
    """A review topic was empty or whitespace-only."""


class MalformedQuery(SlrPipeError):
    """A search query could not be parsed under the query grammar."""


# --------------------------------------------------------------------------
# Search and screening
# --------------------------------------------------------------------------

class NetworkError(SlrPipeError):
    """An HTTP request to the paper feed failed."""


class FeedParseError(SlrPipeError):
    """A paper feed payload was not valid Atom XML."""


class ProviderUnavailable(SlrPipeError):
    """An optional embedding or summarization provider is not installed."""


class EmbeddingDimMismatch(SlrPipeError):
    """A batch of embeddings did not share a single dimensionality."""


class DimMismatch(SlrPipeError):
    """Two vectors passed to a similarity had different dimensions."""


class ZeroVector(SlrPipeError):
    """A similarity was requested against an all-zero vector."""


class InvalidK(SlrPipeError):
    """A top-K selection was requested with a non-positive K."""


# --------------------------------------------------------------------------
# Topic modeling
# --------------------------------------------------------------------------

class TooFewDocuments(SlrPipeError):
    """Not enough documents to attempt clustering."""


class TuningFailed(SlrPipeError):
    """Topic-count tuning never produced at least two clusters."""


class EmptyCluster(SlrPipeError):
    """A cluster unexpectedly contained no member documents."""


class InvalidPartition(SlrPipeError):
    """Cluster membership and outliers do not partition the corpus."""


# --------------------------------------------------------------------------
# Synthesis
# --------------------------------------------------------------------------

class EmptyAbstract(SlrPipeError):
    """A summarization input had no usable text."""


class SummaryBackendUnavailable(SlrPipeError):
    """The abstractive summarization backend is not available."""


class CitationLost(SlrPipeError):
    """Post-editing dropped every citation marker from a section."""


# --------------------------------------------------------------------------
# Document building
# --------------------------------------------------------------------------

class NoPapers(SlrPipeError):
    """Bibliography generation was invoked with no papers."""


class DuplicateKey(SlrPipeError):
    """Two bibliography entries ended up with the same citation key."""


class UndefinedCitation(SlrPipeError):
    """The rendered document cites a key absent from the bibliography."""


class UnbalancedBraces(SlrPipeError):
    """The rendered document has unbalanced, unescaped braces."""


class UnbalancedEnvironment(SlrPipeError):
    r"""The rendered document's \begin/\end environments do not nest."""


class ExportError(SlrPipeError):
    """Writing the rendered document to disk failed."""


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

class NoWords(SlrPipeError):
    """Readability was requested for text containing no words."""


class DegenerateCounts(SlrPipeError):
    """Co-occurrence counts were too degenerate to score any cluster."""


class MissingStage(SlrPipeError):
    """A stage-similarity report was missing a required stage text."""


class InvalidLimit(SlrPipeError):
    """A document-limit sweep received a non-positive or duplicate limit."""


# --------------------------------------------------------------------------
# Pipeline and CLI
# --------------------------------------------------------------------------

class ConfigError(SlrPipeError):
    """A run configuration failed validation."""


class StageFailure(SlrPipeError):
    """A pipeline stage raised; carries the stage name and original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ManifestCorrupt(SlrPipeError):
    """A run manifest could not be read back."""


class UnknownRun(SlrPipeError):
    """A resume or eval referenced a run directory that does not exist."""


# --------------------------------------------------------------------------
# Warnings
# --------------------------------------------------------------------------

class SlrPipeWarning(UserWarning):
    """Base class for warnings emitted by this package."""


class EmptyResultWarning(SlrPipeWarning):
    """A search returned zero papers."""


class DegenerateClusteringWarning(SlrPipeWarning):
    """All documents were identical; a single cluster was returned."""


class OutOfBandWarning(SlrPipeWarning):
    """Tuning exhausted its iterations outside the target topic band."""


class FallbackTextWarning(SlrPipeWarning):
    """Generated text was replaced by deterministic fallback text."""


class CitationRepairWarning(SlrPipeWarning):
    """A post-edited section failed citation validation and was reverted."""


class DegenerateCountsWarning(SlrPipeWarning):
    """A coherence keyword or cluster was skipped for lacking corpus support."""


class SweepPointWarning(SlrPipeWarning):
    """A sweep point was clamped or failed; the sweep continued."""
