"""Exception hierarchy shared by all engine modules."""


class MixedCurvError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(MixedCurvError):
    pass


class JetDepthError(InvalidArgumentError):
    """Nesting a jet beyond the supported depth."""


class SingularEvaluationError(MixedCurvError):
    """Division by zero, domain violation or non-finite intermediate.

    Carries the chart point at which evaluation failed when known.
    """

    def __init__(self, message, point=None):
        super().__init__(message if point is None else f"{message} at point {tuple(point)}")
        self.point = None if point is None else tuple(point)


class ExprError(MixedCurvError):
    pass


class ExprSyntaxError(ExprError):
    """Syntax error with a byte offset and the token set expected there."""

    def __init__(self, offset, expected, message):
        super().__init__(f"{message} (offset {offset}, expected one of {sorted(expected)})")
        self.offset = offset
        self.expected = frozenset(expected)
        self.reason = message

    @property
    def diagnostic(self):
        from .exprlang import ParseDiagnostic
        return ParseDiagnostic(self.offset, self.expected, self.reason)


class NameResolutionError(ExprError):
    def __init__(self, name, offset=None):
        super().__init__(f"undeclared identifier {name!r}")
        self.name = name
        self.offset = offset


class SpecFormatError(MixedCurvError):
    """Malformed structure spec file."""


class DomainError(MixedCurvError):
    """Point outside the declared domain box."""


class DegenerateDistributionError(SingularEvaluationError):
    """No frame candidate with |g(v,v)| above the degeneracy tolerance."""


class SignatureInstabilityError(MixedCurvError):
    """Frame signs flip between sample points of the domain box."""


class ClassificationError(MixedCurvError):
    """Declared variation class contradicts the computed block decomposition."""


class SpecializationError(MixedCurvError):
    """An operation was asked for on a structure outside its specialization
    (e.g. a flow equation with dim(D-tilde) != 1)."""


class SupportError(MixedCurvError):
    """Variation not negligible on the integration box boundary."""
