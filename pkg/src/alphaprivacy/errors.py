"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a distribution/shape invariant (bad probabilities,
    mismatched alphabets, inconsistent batch dimensions, ...)."""


class DataFormatError(ValueError):
    """A file on disk (CSV dataset, JSON world/config) is malformed."""


class DivergenceError(RuntimeError):
    """Adversarial training produced a non-finite or exploding loss."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
