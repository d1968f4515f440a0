"""Exception types shared across the package."""


class KCMError(Exception):
    """Base class for all kcmfold errors."""


class ValidationError(KCMError, ValueError):
    """Invalid input: malformed chain spec, wrong vector length, bad config."""


class SingularityError(KCMError, ArithmeticError):
    """Two interacting atoms are closer than the distance floor."""

    def __init__(self, message, pair=None, distance=None):
        super().__init__(message)
        self.pair = pair
        self.distance = distance
