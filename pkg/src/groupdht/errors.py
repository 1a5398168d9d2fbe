"""Exception hierarchy shared by every simulator module."""


class SimulationError(Exception):
    """Base class for all errors raised by groupdht."""


class InvalidConfig(SimulationError, ValueError):
    pass


class UnknownGroup(SimulationError, KeyError):
    pass


class UnknownPeer(SimulationError, KeyError):
    pass


class DuplicatePeer(SimulationError, ValueError):
    pass


class PastDeadline(SimulationError, ValueError):
    pass


class InsufficientPeers(SimulationError, ValueError):
    pass


class NotEnoughPeers(SimulationError, ValueError):
    pass


class LastGroup(SimulationError):
    """Merge requested while the overlay holds a single group."""


class TooSmallToSplit(SimulationError):
    """Split requested for a group that cannot give each child ``l`` members."""


class AlreadyOpen(SimulationError):
    pass


class EmptyInput(SimulationError, ValueError):
    pass


class MixedCells(SimulationError, ValueError):
    pass
