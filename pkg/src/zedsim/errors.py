"""Exception types shared across the simulator."""


class ZedSimError(Exception):
    """Base class for all simulator errors."""


class DomainError(ZedSimError, ValueError):
    """An argument lies outside its physically meaningful range."""


class ConfigError(ZedSimError, ValueError):
    """A configuration value or combination violates an invariant."""


class UnreachableRequirementError(ConfigError):
    """An energy requirement that can never be met below the voltage ceiling."""


class TraceError(ZedSimError, ValueError):
    """A trace or harvest file failed to parse or validate."""


class FitError(ZedSimError, ValueError):
    """Synthetic trace targets that the generator cannot meet."""


class SimulationFault(ZedSimError):
    """Load was requested while the supply outputs were disabled."""
