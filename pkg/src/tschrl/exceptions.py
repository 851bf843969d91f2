"""Exception hierarchy shared by all tschrl modules."""


class TschError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(TschError, ValueError):
    """Invalid user-provided configuration (ranges, ids, weights)."""


class TopologyError(TschError, ValueError):
    """The network graph or forwarding tree cannot support the request."""


class UnknownNodeError(TschError, KeyError):
    """A node id that does not belong to the topology."""


class ContractError(TschError, ValueError):
    """A caller broke a function precondition (shape, weight sum, bounds)."""


class ScheduleCapacityError(TschError, RuntimeError):
    """A feasible schedule could not be placed in the slotframe."""


class EpisodeError(TschError, RuntimeError):
    """Environment used outside its reset/step lifecycle."""


class PolicyBankError(TschError, RuntimeError):
    """A policy bank is incomplete or belongs to another topology."""
