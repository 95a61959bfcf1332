"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: InputError -> 2,
NumericalError and ConvergenceError -> 3.
"""


class InputError(ValueError):
    """Invalid user input: bad dimensions, malformed files, violated preconditions."""


class NumericalError(RuntimeError):
    """A linear-algebra or sampling step failed beyond recovery (e.g. non-SPD
    precision after the full jitter ladder)."""


class ConvergenceError(RuntimeError):
    """A hyperparameter fixed point did not converge within its iteration budget.

    Carries the last iterate so callers can inspect how far it got.
    """

    def __init__(self, message, last_iterate=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
