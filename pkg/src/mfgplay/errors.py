"""Exception hierarchy.

``MFGError`` subclasses carry the CLI exit code that the harness maps them to.
"""


class MFGError(Exception):
    exit_code = 1


class ConfigError(MFGError, ValueError):
    exit_code = 2


class BadParams(ConfigError):
    pass


class BadTrace(ConfigError):
    pass


class InvalidModel(MFGError, ValueError):
    exit_code = 2


class InvalidDistribution(InvalidModel):
    pass


class InvalidPolicy(InvalidModel):
    pass


class NumericalFailure(MFGError, ArithmeticError):
    exit_code = 3


class NonPSD(NumericalFailure):
    pass


class DegeneratePolicy(NumericalFailure):
    pass


class SolveFailure(NumericalFailure):
    pass


class ConvergenceFailure(NumericalFailure):
    pass


class StepTooLarge(ConfigError):
    pass


class DegenerateNu0(NumericalFailure):
    pass


class PreconditionViolated(MFGError, ValueError):
    exit_code = 2


class MissingDiagnostics(MFGError, ValueError):
    exit_code = 2


class NoContraction(MFGError):
    exit_code = 4


class InsufficientPoints(MFGError, ValueError):
    exit_code = 2
