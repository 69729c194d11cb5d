"""Exception hierarchy shared across the package."""


class ClickDRError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ClickDRError):
    """Vector dimensions do not match."""


class IngestError(ClickDRError):
    """A file being loaded is malformed or violates an invariant."""


class EmptyStoreError(ClickDRError):
    """An operation requires a non-empty embedding store."""


class DomainError(ClickDRError):
    """An argument is outside its mathematical domain."""


class ConfigError(ClickDRError):
    """Invalid or inconsistent configuration."""


class NoFeedbackError(ClickDRError):
    """No click sessions are available for a query that needs them."""


class MissingEmbeddingError(ClickDRError):
    """A clicked passage has no vector in the passage store."""


class StatError(ClickDRError):
    """A statistical test was given insufficient data."""
