"""Exception hierarchy shared by all modules."""


class CalderonError(Exception):
    """Base class for every error raised by this package."""


class NotInvertible(CalderonError, ArithmeticError):
    """Raised when a Clifford number is a zero divisor (no two-sided inverse)."""


class GridTooSmall(CalderonError, ValueError):
    pass


class GridMismatch(CalderonError, ValueError):
    pass


class ZeroNorm(CalderonError, ValueError):
    """The complex norm |zeta|_C vanishes where a division by it is needed."""


class DomainViolation(CalderonError, ValueError):
    pass


class MaskMismatch(CalderonError, ValueError):
    pass


class CompatibilityFailure(CalderonError):
    """div(sigma grad u) is too large for the curl system to be solvable."""


class SolverFailure(CalderonError, RuntimeError):
    pass


class NonConvergence(SolverFailure):
    def __init__(self, iterations, residual):
        super().__init__(
            f"CG did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class ZeroWavevector(CalderonError, ValueError):
    pass


class ProbeOverflow(CalderonError, OverflowError):
    """Probe exponentials exceed the configured growth cap."""


class AsymmetricSpectrum(CalderonError, ValueError):
    pass
