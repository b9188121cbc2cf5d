"""Exception hierarchy shared by all fdirlab modules."""


class FdirlabError(Exception):
    """Base class for every error raised on purpose by fdirlab."""


class ConfigError(FdirlabError, ValueError):
    """A configuration object violates one of its invariants.

    ``field`` names the offending parameter so callers (and the CLI) can
    point at it directly.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class FormatError(FdirlabError):
    """A container file has the wrong magic header, version or layout."""


class DataError(FdirlabError, ValueError):
    """Input data is unusable (empty, wrong shape, mismatched lengths)."""


class RequirementError(FdirlabError):
    """No candidate configuration satisfies the requested requirements."""
