"""Exception hierarchy shared by every module."""


class MicrocountError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MicrocountError, ValueError):
    """Operands live in incompatible or insufficient dimensions."""


class ZeroStateError(MicrocountError, ValueError):
    """A nonzero state was required."""


class ExpansionError(MicrocountError):
    """An equiamplitude expansion could not be constructed."""


class RankError(ExpansionError):
    """A projector (or its complement) has too few dimensions for the request."""


class SchmidtRankError(ExpansionError):
    """A branch vector is entangled across the bipartition, so no product split exists."""


class UnverifiedExpansionError(MicrocountError):
    """An expansion failed its defining checks and cannot be used for counting."""


class ContainmentError(MicrocountError, AssertionError):
    """Counted bounds failed to contain the Born quantity."""


class InvarianceError(MicrocountError, ValueError):
    """The unitary does not fix the designated microstate."""


class ContextError(MicrocountError):
    """A contextual model was asked about settings it was not built for."""


class ScenarioError(MicrocountError, ValueError):
    """Invalid scenario configuration."""


class InfiniteSupportError(MicrocountError, ValueError):
    """An exact average was requested over a continuous hidden-variable space."""
