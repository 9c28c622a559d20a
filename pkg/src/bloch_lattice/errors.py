"""Exception hierarchy shared by every module."""


class BlochLatticeError(Exception):
    """Base class for all library errors."""


class DegenerateSimplex(BlochLatticeError, ValueError):
    """A shape or cross-ratio argument is one of 0, 1 or infinity."""


class QuadratureFailure(BlochLatticeError):
    pass


class RootFindingFailure(BlochLatticeError):
    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class InvalidPath(BlochLatticeError, ValueError):
    pass


class SolveFailure(BlochLatticeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularSystem(SolveFailure):
    pass


class InvalidPtolemy(BlochLatticeError, ValueError):
    pass


class InsufficientPrecision(BlochLatticeError):
    pass


class TargetNotInvolved(BlochLatticeError):
    """The relation does not involve the target value (its first coefficient is 0)."""


class UndefinedGcd(BlochLatticeError, ValueError):
    pass


class LatticeOverflow(BlochLatticeError):
    """More independent volumes than the lattice dimension allows."""


class RankDeficient(BlochLatticeError):
    pass


class TooManySubsets(BlochLatticeError):
    pass


class NotInLattice(BlochLatticeError):
    pass


class LatticeViolation(BlochLatticeError):
    """A coefficient denominator does not divide the fit ratio."""

    def __init__(self, message, coefficients=None):
        super().__init__(message)
        self.coefficients = coefficients


class Unsupported(BlochLatticeError):
    pass


class FormatError(BlochLatticeError):
    pass
