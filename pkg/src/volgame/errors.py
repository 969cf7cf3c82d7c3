"""Exception hierarchy shared by all solver modules."""

from __future__ import annotations


class VolgameError(Exception):
    """Base class for every error raised by this package."""


# grid / kernels
class InvalidInterval(VolgameError, ValueError):
    pass


class TooFewNodes(VolgameError, ValueError):
    pass


class InvalidRule(VolgameError, ValueError):
    pass


class DimensionMismatch(VolgameError, ValueError):
    pass


class GridMismatch(VolgameError, ValueError):
    pass


class LengthMismatch(VolgameError, ValueError):
    pass


# quadratic forms
class NotSymmetric(VolgameError, ValueError):
    pass


class AsymmetryDetected(NotSymmetric):
    """An assembled form violates block symmetry; indicates an assembly bug."""


class SingularSystem(VolgameError, ArithmeticError):
    pass


class NotCertified(VolgameError):
    """Definiteness certification failed and no override was given."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class BasisNotOrthonormal(VolgameError, ValueError):
    pass


# volterra
class SingularStep(VolgameError, ArithmeticError):
    pass


# lqc
class SingularG11(SingularSystem):
    pass


class SingularG3(SingularSystem):
    pass


class NodeNotOnGrid(VolgameError, ValueError):
    pass


class NoConvergence(VolgameError):
    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


# pursuit
class TransversalityViolated(VolgameError, ArithmeticError):
    pass


class SingularWeight(SingularSystem):
    pass


class CaptureNotBracketed(VolgameError):
    def __init__(self, message: str, endpoints=None):
        super().__init__(message)
        self.endpoints = endpoints or {}


class InnerNoConvergence(NoConvergence):
    pass


# cli
class ParseError(VolgameError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ValidationError(VolgameError, ValueError):
    def __init__(self, field: str, constraint: str):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint


class MissingArtifact(VolgameError, FileNotFoundError):
    pass
