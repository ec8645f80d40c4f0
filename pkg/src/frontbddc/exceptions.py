"""Exception hierarchy shared by all frontbddc modules."""


class FrontBDDCError(Exception):
    """Base class for all errors raised by this package."""


class MeshParseError(FrontBDDCError):
    """Malformed mesh file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(FrontBDDCError, ValueError):
    """An input violates a structural invariant; ``check`` names the violated rule."""

    def __init__(self, check, message):
        self.check = check
        super().__init__(f"[{check}] {message}")


class DegenerateElementError(FrontBDDCError):
    pass


class SingularBlockError(FrontBDDCError, ArithmeticError):
    """The free-free block of a constrained factorization is not positive definite.

    ``index`` is the local (unpermuted) dof index at which the first
    non-positive pivot appeared, or -1 when the backend could not tell.
    """

    def __init__(self, index, pivot=None, message=None):
        self.index = index
        self.pivot = pivot
        if message is None:
            message = f"non-positive pivot {pivot!r} at free dof {index}"
        super().__init__(message)


class DependentAveragesError(FrontBDDCError):
    """The dual matrix of average constraints is singular (redundant rows)."""


class InsufficientConstraintsError(FrontBDDCError):
    """The assembled coarse matrix is singular; rigid body modes survive globally."""


class DegenerateDofError(FrontBDDCError):
    pass


class IndefinitePreconditionerError(FrontBDDCError, ArithmeticError):
    pass
