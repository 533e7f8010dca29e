"""Exception hierarchy. Each class carries the short error code used in reports and CLI output."""


class QCHydroError(Exception):
    code = "error"

    def __init__(self, message="", **details):
        super().__init__(message or self.code)
        self.details = details


class ShapeError(QCHydroError, ValueError):
    code = "shape-error"


class UnsupportedOperation(QCHydroError):
    code = "unsupported-operation"


class UnsupportedModel(QCHydroError):
    code = "unsupported-model"


class IncompatibleRHS(QCHydroError, ValueError):
    code = "incompatible-rhs"


class EigenFailure(QCHydroError, ArithmeticError):
    code = "eigen-failure"


class VacuumError(QCHydroError, ValueError):
    code = "vacuum-error"


class LogDomainError(QCHydroError, ValueError):
    code = "log-domain-error"


class UnnormalizedState(QCHydroError, ValueError):
    code = "unnormalized-state"


class RequiresPureState(QCHydroError):
    code = "requires-pure-state"


class DegenerateLoop(QCHydroError, ValueError):
    code = "degenerate-loop"


class BlowUp(QCHydroError, FloatingPointError):
    code = "blow-up"


class ConfigError(QCHydroError, ValueError):
    code = "config-error"

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
