"""Exception hierarchy.

Every error raised by the library derives from :class:`CoinfectError`, so CLI
code can map the whole family to exit codes in one place.
"""


class CoinfectError(Exception):
    """Base class for all library errors."""


class ValidationError(CoinfectError, ValueError):
    """Parameters violate a model invariant."""


class NonPositiveParameter(ValidationError):
    pass


class SigmaOrderViolation(ValidationError):
    pass


class DegenerateEta(ValidationError):
    pass


class DegenerateDeltaAlpha(ValidationError):
    pass


class InternalInvariantViolation(CoinfectError, AssertionError):
    """A derived identity failed; indicates a bug rather than bad input."""


class NotAnEquilibrium(CoinfectError, ValueError):
    pass


class NoBifurcation(CoinfectError):
    pass


class MultipleRoots(CoinfectError):
    pass


class NewtonDiverged(CoinfectError):
    pass


class LeftPositiveOrthant(CoinfectError):
    pass


class BoundsViolated(CoinfectError):
    pass


class StepUnderflow(CoinfectError):
    """Continuation could not advance; ``branch`` holds the partial result."""

    def __init__(self, message, branch=None):
        super().__init__(message)
        self.branch = branch


class DegenerateComponents(CoinfectError, ValueError):
    pass


class HypothesisViolated(CoinfectError, ValueError):
    pass


class ImpossiblePattern(CoinfectError):
    """An equilibrium shows a component pattern the proximity lemma excludes."""

    def __init__(self, message, case=None):
        super().__init__(message)
        self.case = case


class NotRankDeficient(CoinfectError, ValueError):
    pass


class NotSimpleKernel(CoinfectError, ValueError):
    pass


class NormalizationImpossible(CoinfectError, ValueError):
    pass


class OmegaVanishes(CoinfectError):
    pass


class TrivialBranchLost(CoinfectError):
    pass


class SingularLeadingBlock(CoinfectError, ValueError):
    pass


class StepUnderflowODE(CoinfectError):
    pass


class NonConvergent(CoinfectError):
    """``settle`` hit its horizon; ``state`` is the last integrated state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
