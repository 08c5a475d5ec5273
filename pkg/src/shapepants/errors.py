"""Exception types raised across the package."""


class ShapePantsError(Exception):
    """Base class for all errors raised by shapepants."""


class ConfigError(ShapePantsError, ValueError):
    """Invalid user-supplied configuration."""


class CollisionSingularity(ShapePantsError, ValueError):
    """A point lies inside the exclusion ball of a binary collision."""


class PoleSingularity(ShapePantsError, ValueError):
    """The (phi, theta) chart degenerates at the Lagrange points."""


class AtCollision(CollisionSingularity):
    """An equator crossing was requested exactly at a collision angle."""


class StepTooLarge(ShapePantsError, ValueError):
    """Finite-difference step exceeds the supported maximum."""


class OutOfChart(ShapePantsError, ValueError):
    """A point lies outside the cylindrical-end chart domain."""


class StepFailure(ShapePantsError, RuntimeError):
    """The adaptive integrator could not make progress."""


class OddPeriodicLength(ShapePantsError, ValueError):
    """A periodic word of odd length cannot carry alternating signs."""


class NoValidShift(ShapePantsError, RuntimeError):
    """No window shift yields a stutter-free periodic approximant."""


class UntiedWord(ShapePantsError, ValueError):
    """The word winds around a single end and has no geodesic."""


class TiedWord(ShapePantsError, ValueError):
    """The operation requires an untied (two-letter) word."""


class HomotopyEscape(ShapePantsError, RuntimeError):
    """A loop update changed the free homotopy class."""


class NoConvergence(ShapePantsError, RuntimeError):
    """An iterative solver exhausted its iteration budget."""


class PatchViolation(ShapePantsError, RuntimeError):
    """Two geodesics left the collision-free patch of a convexity probe."""


class BoundViolated(ShapePantsError, RuntimeError):
    """A collision experiment broke the predicted time bound."""
