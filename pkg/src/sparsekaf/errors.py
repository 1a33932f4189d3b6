"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """Raised when a computation fails for numerical reasons.

    Covers singular or near-singular Gram matrices, failed factorizations
    and diverging learner configurations, as opposed to plain argument
    errors which raise ``ValueError``.
    """
