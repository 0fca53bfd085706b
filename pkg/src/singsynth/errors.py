"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ValidationError (and its
subclasses) exit 1, MissingArtifactError exits 2.
"""


class SingsynthError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SingsynthError):
    """Inputs or state violate a documented contract."""


class ParseError(ValidationError):
    """A text input (score, intervals, manifest, config) is malformed."""


class MissingArtifactError(SingsynthError):
    """A required file (checkpoint, cache entry, audio) does not exist."""
