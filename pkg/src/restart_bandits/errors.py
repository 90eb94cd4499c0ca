class AssumptionError(ValueError):
    """Arm violates the monotonicity/submodularity conditions the index theory needs."""


class NotThresholdError(ValueError):
    """A policy or passive set is not of threshold form in k."""


class DegenerateIndexError(RuntimeError):
    """No probe state separates two neighbouring policies at working precision."""


class StateSpaceTooLarge(ValueError):
    pass
