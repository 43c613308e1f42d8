"""Exception hierarchy shared by every layer of the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(SimulationError):
    """Invalid configuration, unknown identifiers or bad parameters."""


class AllocationImpossibleError(SimulationError):
    """A memory allocation can never fit, even after evicting everything else."""


class EvictionError(SimulationError):
    """An allocation was evicted while an execution depended on it."""

    def __init__(self, allocation_id, message=None):
        self.allocation_id = allocation_id
        super().__init__(message or f"allocation {allocation_id} was evicted")


class DataMissingError(SimulationError):
    """A data item has no replica anywhere."""


class InstanceCreationError(SimulationError):
    """An instance footprint cannot be placed in worker memory."""


class StabilityError(SimulationError, ValueError):
    """A queueing model was evaluated at or beyond its stability limit."""


class SaturationError(SimulationError, ValueError):
    """A player's arrival rate exceeds the residual capacity offered to it."""


class InvariantViolation(SimulationError):
    """A run broke one of its own bookkeeping invariants."""
