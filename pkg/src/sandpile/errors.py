class SandpileError(Exception):
    """Base class for errors raised by this package."""


class InvalidConfig(SandpileError, ValueError):
    pass


class NonConvergence(SandpileError, RuntimeError):
    """Stabilization hit its toppling cap before every excess fell below eps_stop."""

    def __init__(self, message: str, *, sweeps: int, topplings: int, residual_excess: float):
        super().__init__(message)
        self.sweeps = sweeps
        self.topplings = topplings
        self.residual_excess = residual_excess


class NotApplicable(SandpileError, ValueError):
    """A check was asked of a state it does not apply to (e.g. multi-source symmetry)."""


class BracketError(SandpileError, ArithmeticError):
    def __init__(self, message: str, *, lo: float, hi: float, f_lo: float, f_hi: float):
        super().__init__(f"{message} (f({lo:g})={f_lo:g}, f({hi:g})={f_hi:g})")
        self.lo, self.hi, self.f_lo, self.f_hi = lo, hi, f_lo, f_hi


class CheckFailure(SandpileError, AssertionError):
    """A verification predicate that must hold did not (e.g. super-solution minimality)."""
