"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class FensembleError(Exception):
    """Base class for every error raised by fensemble."""


class DomainError(FensembleError, ValueError):
    """Argument outside the domain of a formula (or at one of its poles)."""


class ConfigError(DomainError):
    """Invalid run configuration."""


class ResourceLimitError(FensembleError):
    """Request exceeds a configured ceiling or bound."""


class IntegrityError(FensembleError):
    """An internal cross-check failed."""


class IntegrationError(FensembleError, RuntimeError):
    """The ODE integrator did not reach the far boundary."""
