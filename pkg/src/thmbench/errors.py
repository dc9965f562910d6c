"""Exception types shared across pipeline stages."""


class ThmbenchError(Exception):
    """Base class for all package errors."""


# --- gateway ---------------------------------------------------------------

class ConfigError(ThmbenchError):
    """Gateway or pipeline configuration is missing or inconsistent."""


class ProviderError(ThmbenchError):
    """Non-retriable provider failure (bad status, malformed payload)."""


class TransientBackendError(ThmbenchError):
    """Retriable transport failure (connection reset, 429, 5xx)."""


class GatewayTimeout(TransientBackendError):
    """Per-request timeout elapsed."""


# --- harvest / corpus ------------------------------------------------------

class FeedParseError(ThmbenchError):
    """Malformed Atom XML from the paper feed."""


class NetworkError(ThmbenchError):
    """Feed or archive fetch failed after retries."""


class UnsupportedArchive(ThmbenchError):
    """Submission has no usable TeX source (e.g. PDF-only)."""


class CorruptArchive(ThmbenchError):
    """Archive is damaged or contains path-escaping members."""


class NoRootFile(ThmbenchError):
    """No file in the source set looks like the document root."""


class InclusionCycle(ThmbenchError):
    """\\input/\\include graph contains a cycle."""

    def __init__(self, path):
        self.path = list(path)
        super().__init__(" -> ".join(self.path))


# --- mining / annotation ---------------------------------------------------

class ExtractionRefused(ThmbenchError):
    """Fallback extractor returned nothing verifiable for this paper."""


class SketchUnavailable(ThmbenchError):
    """Sketch model refused twice; record proceeds without a sketch."""


class ClassificationFailed(ThmbenchError):
    """Category labels could not be parsed after a retry."""


# --- question forging / filtering -------------------------------------------

class GenerationFailed(ThmbenchError):
    """Model reply did not satisfy the output schema after a retry."""


class JudgeFailed(ThmbenchError):
    """Judge reply unparseable after a retry."""


# --- evaluation --------------------------------------------------------------

class MissingSplit(ThmbenchError):
    """Hard-split file for the requested month does not exist."""


class SchemaError(ThmbenchError):
    """A benchmark entry is missing required fields."""


class MissingSketch(ThmbenchError):
    """Sketch-aware prompt requested for an item without a sketch."""


class MissingMetadata(ThmbenchError):
    """Aggregation asked about an item absent from the split metadata."""


# --- orchestration -----------------------------------------------------------

class StageFailed(ThmbenchError):
    """A pipeline stage failed; the ledger records where to resume."""


class EngineUnavailable(ThmbenchError):
    """No LaTeX engine installed; the gate degrades to lint-only."""
