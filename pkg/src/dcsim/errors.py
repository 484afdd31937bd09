class SimulationError(Exception):
    """Base class for simulator errors."""


class InvalidArgument(SimulationError, ValueError):
    pass


class ConfigurationError(SimulationError):
    """The experiment cannot run as configured (capacity shortfall, short traces)."""


class NoBandwidthError(SimulationError):
    """A host has no migration bandwidth left in this step."""


class TraceParseError(SimulationError, ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
