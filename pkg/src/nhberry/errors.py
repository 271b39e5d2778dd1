"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line driver
(2 configuration, 3 numerical guard, 4 I/O).
"""


class NHBerryError(Exception):
    exit_code = 3


class ConfigInvalid(NHBerryError, ValueError):
    exit_code = 2


class SampleOnSingularity(NHBerryError):
    """A sample point (or a finite-difference stencil point) sits where the
    real-part branch of the spectrum is undefined, i.e. ``a < degeneracy_tol``
    or the stencil straddles the branch disk."""


class StringProximity(NHBerryError):
    """Fixed-gauge eigenvector too close to its nodal line."""


class UnsupportedBand(NHBerryError, ValueError):
    pass


class QuadratureNotConverged(NHBerryError):
    pass


class AdiabaticityBroken(NHBerryError):
    pass


class StepUnstable(NHBerryError):
    pass


class PhaseUnwrapAmbiguous(NHBerryError):
    pass


class ZeroState(NHBerryError, ValueError):
    pass


class StabilityViolation(NHBerryError):
    pass


class SolitonLost(NHBerryError):
    pass
