"""Exception hierarchy shared across the package."""


class CVRQSSError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimension(CVRQSSError, ValueError):
    """Matrix or vector shapes are inconsistent with the number of modes."""


class UnphysicalState(CVRQSSError, ValueError):
    """A covariance matrix violates the uncertainty principle (some nu < 1)."""


class NotSymplectic(CVRQSSError, ValueError):
    """A matrix fails S Omega S^T = Omega."""


class InadmissibleSqueezing(CVRQSSError, ValueError):
    """A squeezing parameter lies outside the device disk."""


class AccessConditionViolated(CVRQSSError, ValueError):
    """An encoding matrix does not give every k-family full rank."""


class InsufficientCollaborators(CVRQSSError, ValueError):
    """Fewer than k players tried to decode."""


class FormulaDomainError(CVRQSSError, ArithmeticError):
    """A closed-form expression was evaluated outside its valid domain."""


class EstimationFailed(CVRQSSError, RuntimeError):
    """The copy budget ran out before the estimate reached its tolerance."""
