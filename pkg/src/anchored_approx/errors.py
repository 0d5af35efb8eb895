"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: input errors exit with 2, numerical
errors with 3 and capability errors with 4.
"""


class AnchoredApproxError(Exception):
    exit_code = 1


class InputError(AnchoredApproxError, ValueError):
    """Invalid arguments or malformed input data."""

    exit_code = 2


class NumericalError(AnchoredApproxError, ArithmeticError):
    """A computation failed numerically (factorization, noisy differences)."""

    exit_code = 3


class CapabilityError(AnchoredApproxError):
    """The request exceeds what the implementation supports (size caps)."""

    exit_code = 4


class CoercivityError(InputError):
    """The diffusion coefficient is not uniformly positive."""


class StepError(NumericalError):
    """A finite-difference step is dominated by round-off."""
