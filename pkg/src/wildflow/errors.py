"""Exception types raised across the package."""


class WildflowError(Exception):
    pass


class CenterOnAxis(WildflowError):
    """The center maps onto the ball center ``a_x`` (or ``a_y``); the split is undefined."""


class OutOfBall(WildflowError):
    """``x(A)`` or ``y(A)`` left the open ball of the cone circle."""


class NoAdmissibleDelta(WildflowError):
    pass


class NotMember(WildflowError):
    def __init__(self, message, best=None, defect=float("inf")):
        super().__init__(message)
        self.best = best
        self.defect = defect


class DegenerateWitness(WildflowError):
    pass


class CornerEscape(WildflowError):
    pass


class BadShrink(WildflowError):
    pass


class DegenerateDirection(WildflowError):
    pass


class IterationCap(WildflowError):
    def __init__(self, message, achieved=0.0):
        super().__init__(message)
        self.achieved = achieved


class InvalidConfig(WildflowError):
    pass


class NotInHull(WildflowError):
    pass


class ToleranceUnreachable(WildflowError):
    def __init__(self, k):
        super().__init__(f"no frequency in the schedule meets the 2^-{k} pairing bound")
        self.k = k


class GridTooCoarse(WildflowError):
    def __init__(self, message, estimate=float("nan")):
        super().__init__(message)
        self.estimate = estimate


class NotIrrotational(WildflowError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class FormatError(WildflowError):
    pass
