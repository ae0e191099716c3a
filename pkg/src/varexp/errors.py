"""Exception hierarchy shared by all modules."""


class VarExpError(Exception):
    """Base class for every error raised by :mod:`varexp`."""


class DegenerateExponent(VarExpError, ValueError):
    pass


class UnsupportedDimension(VarExpError, ValueError):
    pass


class ExponentOrderViolation(VarExpError, ValueError):
    pass


class RootFindFailure(VarExpError, ArithmeticError):
    pass


class FieldOverflow(VarExpError, ArithmeticError):
    pass


class MeshError(VarExpError, ValueError):
    pass


class LevelMismatch(VarExpError, ValueError):
    pass


class SingularFlux(VarExpError, ValueError):
    pass


class FluxEvalError(VarExpError, ArithmeticError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NewtonFailure(VarExpError, RuntimeError):
    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class BadSpec(VarExpError, ValueError):
    pass


class ConfigError(VarExpError, ValueError):
    """Invalid run configuration.

    ``reason`` names the underlying module error (e.g. ``"DegenerateExponent"``)
    when validation delegated to a module precondition; ``line`` is the 1-based
    line of the offending entry, if known.
    """

    def __init__(self, message, line=None, reason=None):
        prefix = f"line {line}: " if line is not None else ""
        tag = f"{reason}: " if reason else ""
        super().__init__(prefix + tag + message)
        self.line = line
        self.reason = reason or "ConfigError"
