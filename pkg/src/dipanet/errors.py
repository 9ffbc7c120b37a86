"""Exception hierarchy shared by every module."""

from __future__ import annotations


class DipanetError(Exception):
    """Base class for all library errors."""


class PreconditionError(DipanetError, ValueError):
    """An operation was called outside its documented preconditions."""


class DomainError(PreconditionError):
    """A function was evaluated outside its declared domain."""


class OverlapError(PreconditionError):
    """Smoothing windows around neighbouring breakpoints would merge."""


class StructuralError(DipanetError, ValueError):
    """Matrix or function dimensions are mutually incompatible."""


class InconsistentFamilyError(DipanetError):
    """A matrix family violates one of the truncation relations."""

    def __init__(self, relation: str, residual: float):
        super().__init__(f"inconsistent family: relation {relation!r} violated (residual {residual:.3e})")
        self.relation = relation
        self.residual = residual


class DivergenceError(DipanetError, ArithmeticError):
    """A non-finite value appeared during integration or evaluation."""

    def __init__(self, step: int, where: str = "state"):
        super().__init__(f"non-finite {where} at step {step}")
        self.step = step


class ResourceError(DipanetError):
    """Requested resolution exceeds the configured work budget."""
