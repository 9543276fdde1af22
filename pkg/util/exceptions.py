'''Errors raised across the scheduling stack.'''


class SchedulingError(Exception):
    pass


class DomainError(SchedulingError, ValueError):
    '''Argument outside its mathematical domain (AoI < 1, channel state out of range, ...).'''


class InvalidAction(SchedulingError, ValueError):
    '''Schedule violates the one-sensor-per-channel constraint.'''


class ShapeError(SchedulingError, ValueError):
    pass


class NonConvergence(SchedulingError):
    '''Riccati fixed-point iteration did not settle.'''


class CapacityError(SchedulingError):
    pass


class IncompletePolicy(SchedulingError):
    pass


class GenerationFailure(SchedulingError):
    pass


class ConfigError(SchedulingError):
    pass


class TrainingDivergence(SchedulingError):
    pass


class NonFiniteLoss(TrainingDivergence):
    pass


class NonFiniteGradient(TrainingDivergence):
    pass


class CertificationFailure(SchedulingError):
    pass
