class TreeRWREError(Exception):
    pass


class InvalidSpec(TreeRWREError, ValueError):
    pass


class BudgetExceeded(TreeRWREError):
    """A computation would exceed its node, state or step budget.

    Raised instead of returning a truncated (unverified) answer.
    """


class NotNormalized(TreeRWREError, ValueError):
    pass


class NonConvergence(TreeRWREError):
    pass


class TrivialFixedPoint(TreeRWREError):
    pass


class GridUnderflow(TreeRWREError, ValueError):
    pass


class SingularSystem(TreeRWREError):
    pass


class InsufficientPoints(TreeRWREError, ValueError):
    pass


class EmptySample(TreeRWREError, ValueError):
    pass
