"""Exception types used across the package.

Every error raised by the library derives from :class:`OscarSimError`, so
callers (the CLI in particular) can distinguish "your input is bad" from
"the run itself blew up".
"""


class OscarSimError(Exception):
    """Base class for all package errors."""


class ParameterError(OscarSimError):
    """A physical or dimensionless parameter is out of range or inconsistent."""


class ConfigError(OscarSimError):
    """A config file could not be parsed or validated.

    Carries the offending key and line number when known so the CLI can
    point at the exact line.
    """

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"key '{key}': "
        super().__init__(prefix + message)


class GeometryError(OscarSimError):
    """The resonant-slice geometry is empty, unreachable, or misconfigured."""


class NumericalError(OscarSimError):
    """A numerical routine lost validity (ill-conditioning, non-convergence)."""


class IntegrationError(OscarSimError):
    """The time integration produced a non-finite or runaway state."""


class AnalysisError(OscarSimError):
    """Signal extraction or fitting could not produce a valid result."""
