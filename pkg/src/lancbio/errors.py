"""Exception hierarchy shared by the kernels, solvers, problems and CLI."""


class LancBiOError(Exception):
    """Base class for every error raised by this package."""


class NumericalBreakdown(LancBiOError, ArithmeticError):
    """A recoverable numerical event; solvers react by restarting an epoch."""


class NearSingular(NumericalBreakdown):
    """A pivot of a tridiagonal factorization fell below the guard."""


class RankDeficient(NumericalBreakdown):
    """The bordered tridiagonal least-squares matrix lost column rank."""


class LuckyBreakdown(NumericalBreakdown):
    """The Lanczos recurrence produced an invariant subspace.

    ``state`` holds the factorization completed by the failing step, so the
    caller can still use it (it is exact for a static operator).
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class Diverged(NumericalBreakdown):
    """Iterates became non-finite; usually a step size is too large."""


class NotPositiveDefinite(LancBiOError, ArithmeticError):
    pass


class NoConvergence(LancBiOError, RuntimeError):
    pass


class DimensionMismatch(LancBiOError, ValueError):
    pass


class ShapeMismatch(LancBiOError, ValueError):
    pass


class IDXError(LancBiOError, ValueError):
    pass


class BadMagic(IDXError):
    pass


class TruncatedFile(IDXError):
    pass


class CountMismatch(IDXError):
    pass


class ConfigError(LancBiOError, ValueError):
    """Raised for anything wrong with an experiment config (exit code 1)."""


class ConfigParse(ConfigError):
    pass


class UnknownSolver(ConfigError):
    pass


class UnknownProblem(ConfigError):
    pass


class EmptyInput(LancBiOError, ValueError):
    pass
