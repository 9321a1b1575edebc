"""Exception hierarchy.

``ApplicabilityError`` and its subclasses signal that a model violates a
mathematical precondition (drift, moment, hazard conditions). The CLI maps
them to exit code 2, everything else to 1.
"""


class PertWalkError(Exception):
    """Base class for all package errors."""


class ApplicabilityError(PertWalkError, ValueError):
    """A model does not satisfy the hypotheses a computation requires."""


class InvalidDriftError(ApplicabilityError):
    pass


class NoRootError(ApplicabilityError):
    pass


class DivergenceError(ApplicabilityError):
    """An integral or moment that must be finite is infinite."""


class UndefinedHazardError(ApplicabilityError):
    pass


class ConditionViolatedError(ApplicabilityError):
    """A regime condition (e.g. E exp(nu X) < 1) fails for the model."""


class InapplicableModelError(ApplicabilityError):
    """A closed form was requested for a model outside its family."""


class UnsupportedError(PertWalkError, ValueError):
    """Requested operation is not available for this family or dependence mode."""


class ConfigError(PertWalkError, ValueError):
    """Malformed configuration. ``errors`` holds every problem found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class StepLimitError(PertWalkError, RuntimeError):
    pass


class NonConvergenceError(PertWalkError, RuntimeError):
    pass


class NoPlateauError(PertWalkError, RuntimeError):
    pass


class ApplicabilityWarning(UserWarning):
    pass
