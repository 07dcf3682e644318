"""Error types shared across the package, mapped to CLI exit codes."""

from __future__ import annotations


class StreamRCAError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(StreamRCAError):
    """Invalid configuration: bad option value, missing column, missing file. Exit code 2."""


class DataError(StreamRCAError):
    """Malformed or degenerate input data. Exit code 3."""


class DivergenceError(StreamRCAError):
    """Optimization produced a non-finite loss. Exit code 4."""
