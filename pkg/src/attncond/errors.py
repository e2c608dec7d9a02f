"""Exception classes shared across the package.

The split mirrors the CLI exit-code contract: ValidationError maps to
exit 2 (bad configuration or input), NumericalError and its subclasses
map to exit 4 (numerical failure), and plain OSError maps to exit 3.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Invalid input, shape, or configuration."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (non-convergence, non-finite values).

    `iterations` carries the iteration count for convergence failures.
    """

    def __init__(self, message: str, *, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class DivergenceError(NumericalError):
    """A training run produced a non-finite loss or gradient.

    `last_good_step` is the last optimizer step that completed with a
    finite loss (0 means divergence on the first step).
    """

    def __init__(self, message: str, *, last_good_step: int):
        super().__init__(message)
        self.last_good_step = last_good_step
