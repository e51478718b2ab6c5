"""Shared exception types with stable CLI exit-code semantics."""


class ConfigurationError(ValueError):
    """Bad configuration, shapes, or preconditions (CLI exit code 2)."""


class FormatError(ValueError):
    """Malformed on-disk artifact (feature file, checkpoint, manifest)."""
