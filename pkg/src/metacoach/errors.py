"""Shared exception hierarchy.

Three families, matching the CLI's exit-code contract: configuration/usage
problems, data problems (schema, labels, ordering, empty inputs), and
backend problems (network, auth, malformed responses).
"""

from __future__ import annotations

__all__ = ["MetacoachError", "ConfigError", "DataError", "BackendError"]


class MetacoachError(Exception):
    """Base for every error this package raises deliberately."""


class ConfigError(MetacoachError):
    """Bad configuration or usage."""


class DataError(MetacoachError):
    """Input data violates a schema, label, or ordering contract."""


class BackendError(MetacoachError):
    """A generation backend failed."""
