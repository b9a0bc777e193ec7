"""Exception types shared across the package."""

from __future__ import annotations


class RxVerifyError(Exception):
    """Base class for all errors raised by this package."""


class MalformedCode(RxVerifyError):
    """An ICD-10 code string does not start with letter + two digits."""


class ParseError(RxVerifyError):
    """A file could not be parsed; message carries the path."""


class SchemaError(RxVerifyError):
    """Parsed data does not have the expected shape."""


class EmptyCorpus(RxVerifyError):
    """An operation requires at least one monograph."""


class UnknownDrug(RxVerifyError):
    """The graph has no Drug node for the requested ingredient."""


class UnparseableAgeText(RxVerifyError):
    """An age constraint string did not match the recognized grammar."""


class NoCandidates(RxVerifyError):
    """Disease matching was asked to choose from an empty candidate list."""


class GatewayError(RxVerifyError):
    """Base class for language-model gateway failures."""


class LmUnavailable(GatewayError):
    """A language-model fallback was required but no gateway is configured."""


class Timeout(GatewayError):
    """The provider did not answer in time."""


class RateLimited(GatewayError):
    """The provider asked us to slow down."""

    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ProviderError(GatewayError):
    """The provider returned a malformed or error response."""


class MissingVariable(RxVerifyError):
    """A template was rendered without all of its placeholders bound."""

    def __init__(self, names: list[str]):
        super().__init__("unbound template variables: " + ", ".join(sorted(names)))
        self.names = sorted(names)


class EmbedderUnavailable(RxVerifyError):
    """A remote embedding backend failed or is not configured."""


class DimensionMismatch(RxVerifyError):
    """Two vectors of different lengths were compared."""


class ZeroVector(RxVerifyError):
    """Cosine similarity is undefined for an all-zero vector."""


class EmptyIndex(RxVerifyError):
    """Retrieval was attempted against an index with no entries."""


class ExtractionIncomplete(RxVerifyError):
    """Prescription structuring did not produce all required fields."""

    def __init__(self, missing: list[str]):
        super().__init__("missing fields: " + ", ".join(sorted(missing)))
        self.missing = sorted(missing)


class KeyMismatch(RxVerifyError):
    """Prediction and gold label keys do not line up."""

    def __init__(self, missing: list, extra: list):
        parts = []
        if missing:
            parts.append(f"gold keys without predictions: {sorted(missing)}")
        if extra:
            parts.append(f"predictions without gold keys: {sorted(extra)}")
        super().__init__("; ".join(parts) or "key mismatch")
        self.missing = sorted(missing)
        self.extra = sorted(extra)


class UndefinedMetric(RxVerifyError):
    """A metric's denominator is zero."""
