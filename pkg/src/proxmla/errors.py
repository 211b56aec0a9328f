"""Exception hierarchy. Each class carries the process exit code the CLI reports."""


class ProxmlaError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(ProxmlaError, ValueError):
    """Invalid parameters, grid/cell mismatch, unknown config keys."""

    exit_code = 2
    kind = "config"


class SamplingError(ConfigError):
    """Grid too coarse for the shortest wavelength in the spectrum."""


class ParseError(ProxmlaError, ValueError):
    exit_code = 3
    kind = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(ProxmlaError, ArithmeticError):
    exit_code = 4
    kind = "numerical"


class DomainError(NumericalError, ValueError):
    """Arguments outside the domain of a closed-form expression."""


class SingularFitError(NumericalError):
    pass


class ExtractionError(NumericalError):
    """No identifiable lens rim in a profile cell."""


class CalibrationError(NumericalError):
    pass


class ContractError(ProxmlaError, ValueError):
    exit_code = 4
    kind = "contract"


class RangeError(ProxmlaError, ValueError):
    exit_code = 5
    kind = "range"

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class MonotonicityError(RangeError):
    pass
