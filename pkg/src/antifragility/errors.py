"""Exception hierarchy.

Two families matter to callers: :class:`InputError` (bad matrices, models,
doses, grids; CLI exit code 2) and :class:`NumericalError` (iteration
budgets, overflow; CLI exit code 3).
"""

from __future__ import annotations


class AntifragilityError(Exception):
    """Base class for every error raised by this package."""


class InputError(AntifragilityError, ValueError):
    """Input violates a documented precondition or invariant."""


class NumericalError(AntifragilityError, ArithmeticError):
    """A computation could not be completed to the requested accuracy."""


class NotSquare(InputError):
    pass


class NotMetzler(InputError):
    def __init__(self, index: tuple[int, int], value: float, context: str = ""):
        self.index = index
        self.value = value
        where = f" {context}" if context else ""
        super().__init__(
            f"matrix{where} is not Metzler: off-diagonal entry "
            f"({index[0] + 1},{index[1] + 1}) = {value!r} is negative"
        )


class NotMetzlerAtDose(NotMetzler):
    def __init__(self, index: tuple[int, int], value: float, dose: float):
        self.dose = dose
        super().__init__(index, value, context=f"at dose u={dose!r}")


class NegativeFlux(InputError):
    pass


class Reducible(InputError):
    """Irreducibility precondition failed.

    ``dominant`` carries the largest real part of the spectrum (from a dense
    eigensolver) as advisory data, since callers such as the CLI still want
    to report it.
    """

    def __init__(self, message: str, dominant: float | None = None):
        self.dominant = dominant
        super().__init__(message)


class DoseOutOfDomain(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        pos = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{pos}")


class ModelValidationError(InputError):
    """A model file parsed but failed a named invariant."""


class GridTooSmall(InputError):
    pass


class AllReducible(InputError):
    pass


class InsufficientSamples(InputError):
    pass


class NonpositiveOutput(InputError):
    pass


class NegativeDiscriminant(InputError):
    pass


class ComplexRoots(InputError):
    pass


class DrugBudgetMismatch(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message: str, iterations: int):
        self.iterations = iterations
        super().__init__(message)


class Overflow(NumericalError):
    pass
