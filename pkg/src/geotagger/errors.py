"""Exception types shared across the package."""


class GeotaggerError(Exception):
    """Base class for all errors raised by this package."""


class DocumentFormatError(GeotaggerError):
    """A document record does not match the documented input format."""


class InconsistentTokensError(DocumentFormatError):
    """Parallel token annotations disagree in length; the document is rejected."""


class GazetteerFormatError(GeotaggerError):
    """A gazetteer entry file or cache file could not be parsed."""


class BackendUnavailableError(GeotaggerError):
    """The remote knowledge base did not answer after the configured retries."""


class MalformedResponseError(GeotaggerError):
    """The remote knowledge base answered with a payload we cannot interpret."""


class ConfigError(GeotaggerError):
    """Invalid or contradictory run configuration."""
