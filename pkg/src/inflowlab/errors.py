"""Exception hierarchy shared by the solver, audits and CLI."""


class InflowLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(InflowLabError, ValueError):
    """Invalid configuration; ``path`` names the offending field when known."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class BoundaryDataError(InflowLabError, ValueError):
    """Boundary data missing or out of its admissible range."""


class ExtensionError(InflowLabError):
    """The boundary-velocity lifting failed its collar divergence audit."""

    def __init__(self, message, worst_cell=None, worst_value=None):
        self.worst_cell = worst_cell
        self.worst_value = worst_value
        super().__init__(message)


class DomainError(InflowLabError, ValueError):
    """Argument outside the mathematical domain of a function."""


class UnsupportedLawError(InflowLabError, ValueError):
    """Operation requires a monotone pressure law."""


class HypothesisViolation(InflowLabError):
    """A structural hypothesis failed its sampled check; ``witness`` holds the sample."""

    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message)


class SchemeViolation(InflowLabError):
    """The discrete scheme produced a state it must never produce."""


class NumericalError(InflowLabError):
    """Linear solve or integrator failure."""


class CouplingError(InflowLabError):
    """Density fell below the floor needed to recover the velocity."""


class StepSizeError(InflowLabError):
    """Time step violates an explicit stability restriction."""


class IneligibleTestPair(InflowLabError):
    """A strong-solution test pair does not satisfy its equations to tolerance."""


class ExtensionDomainError(InflowLabError):
    """A characteristic left the region where the extended velocity is defined."""


class TestConfigurationError(InflowLabError, ValueError):
    """A test field violates the support constraints of a weak form."""

    __test__ = False
