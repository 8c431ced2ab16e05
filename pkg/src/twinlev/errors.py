"""Exception hierarchy.

Physics errors (the configuration is valid but the physics has no answer)
derive from ``PhysicsError``; malformed input derives from ``ConfigError``.
The command line maps the two families to exit codes 1 and 2.
"""


class TwinlevError(Exception):
    """Base class for all package errors."""


class PhysicsError(TwinlevError):
    """The requested physical situation is unstable or has no solution."""


class ConfigError(TwinlevError, ValueError):
    """Invalid or inconsistent input.

    Parameters
    ----------
    message : str
    key : str, optional
        Name of the offending configuration key.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UnstableTrap(PhysicsError):
    """The difference mode has no restoring force (omega_-^2 <= 0)."""


class NoSolution(PhysicsError):
    """The transcendental equilibrium equation has no root."""


class EqualCharges(PhysicsError):
    """Compensation field undefined for identical charges."""


class StepTooLarge(TwinlevError, ValueError):
    """Integration step exceeds the stability bound."""


class NonPhysicalState(PhysicsError):
    """Covariance violates the uncertainty principle beyond tolerance."""


class SingularResponse(PhysicsError):
    """Mechanical susceptibility diverges (undamped resonance)."""


class GeometryInvalid(TwinlevError, ValueError):
    """Electron-demo geometry outside the point-charge gradient regime."""


class KernelNotCausal(TwinlevError, ValueError):
    """Feedback kernel has support at t <= 0."""


class SegmentTooShort(TwinlevError, ValueError):
    """Too few stationary samples for a spectral estimate."""


class FeedbackWarning(UserWarning):
    """Configuration is valid but feedback may not work as intended."""
