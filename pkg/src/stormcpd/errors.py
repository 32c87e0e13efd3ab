"""Exception types shared across the simulator and detector."""


class StormcpdError(Exception):
    """Base class for all package errors."""


class SchedulingInPast(StormcpdError):
    """An event was scheduled before the current simulation clock."""


class CapacityExceeded(StormcpdError):
    """A write would push a storage device past its capacity."""


class ComponentOffline(StormcpdError):
    """Work was issued to a component that is currently broken."""


class UnknownComponent(StormcpdError):
    """An anomaly or request referenced a component id not in the topology."""


class NoPathAvailable(StormcpdError):
    """The balancer found no online path for a request."""


class RequestFailed(StormcpdError):
    """A request was aborted mid-flight with no surviving retry path."""


class SeriesTooShort(StormcpdError):
    """The input series is shorter than the detector warm-up requires."""


class NotWarmedUp(StormcpdError):
    """A detector step was taken before the warm-up index was reached."""


class ConfigError(StormcpdError):
    """A scenario configuration failed validation.

    ``location`` names the offending field or config line so CLI error
    messages can point at it.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
