"""Exception and warning types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class GenerationError(RuntimeError):
    """A trail could not be generated from the given chain."""


class IrreducibilityError(RuntimeError):
    """A hitting-time system is singular because the chain is reducible."""


class NumericFailure(RuntimeError):
    """An optimization produced non-finite values it could not recover from."""


class NumericWarning(RuntimeWarning):
    """A computation went through but touched a numerical guard."""
