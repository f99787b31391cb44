"""Exception hierarchy shared by all modules.

Every error carries a stable ``code`` string that the CLI turns into an
exit status and a machine-readable JSON error record.
"""


class SaddleFlapError(Exception):
    code = "error"


class DomainError(SaddleFlapError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    code = "domain"


class PoleError(DomainError):
    code = "pole"


class TruncationError(SaddleFlapError, ValueError):
    """A series operation asked for more coefficients than the inputs carry."""

    code = "truncation"


class SpecParseError(SaddleFlapError, ValueError):
    code = "parse"


class HypothesisViolation(SaddleFlapError, ValueError):
    """Input violates a hard structural hypothesis of the normal form."""

    code = "hypothesis"


class ResonanceError(SaddleFlapError, ValueError):
    """1/eps is (numerically) an integer."""

    code = "resonance"


class BracketError(SaddleFlapError, ValueError):
    code = "bracket"


class StiffnessError(SaddleFlapError, RuntimeError):
    code = "stiffness"


class SeedQualityError(SaddleFlapError, RuntimeError):
    code = "seed"


class SaddleDegenerateError(SaddleFlapError, RuntimeError):
    code = "saddle"


class BoundWarning(UserWarning):
    """Advisory: a coefficient exceeds the stated B/rho bounds."""


class SmallDivisorWarning(UserWarning):
    """Advisory: weak-manifold recursion pushed past k = N."""
