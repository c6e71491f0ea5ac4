"""Semantic exception hierarchy.

Public operations never raise bare ValueError/KeyError; every contract
violation maps to one of the classes below so callers (and the CLI) can
translate failures into exit codes without string matching.
"""


class PridecError(Exception):
    """Base class for all errors raised by this package."""


class SpaceMismatch(PridecError):
    """Two objects built over different finite spaces were combined."""


class RangeError(PridecError, ValueError):
    """A numeric argument lies outside its documented domain."""


class AbsoluteContinuityError(PridecError):
    """A divergence requiring support(P) <= support(Q) was violated."""


class NotDP(PridecError):
    """A channel failed the differential-privacy level it was asserted at."""


class NotFound(PridecError, LookupError):
    """A referenced model, decision, or builder id does not exist."""


class EmptyClass(PridecError):
    """An operation requiring a non-empty model class received an empty one."""


class InstanceTooLarge(PridecError):
    """Explicit enumeration would exceed the configured size cap."""


class InvalidPartition(PridecError):
    """A hypothesis-selection partition has an empty or overlapping block."""


class ConfigError(PridecError):
    """A run configuration is inconsistent (horizons, schema, ids)."""


class ProtocolError(PridecError):
    """A learner action does not match the environment's interface."""


class StructureError(PridecError):
    """An information-set structure violates its invariants."""


class Infeasible(PridecError):
    """The requested computation has no finite answer on this instance."""


class NonConvergence(PridecError):
    """An iterative solver exhausted its budget before reaching tolerance."""
