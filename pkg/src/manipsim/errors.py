"""Exception hierarchy.

Every error raised on purpose by this package derives from ManipSimError so
callers can catch one type at the boundary. Messages name the offending field
or entity and the offending value where one exists.
"""


class ManipSimError(Exception):
    """Base class for all errors raised by manipsim."""


class ConfigurationError(ManipSimError):
    """A config value, catalog reference, or argument is invalid."""


class SpawnError(ManipSimError):
    """Object placement could not be satisfied (overlap, crowding)."""


class LifecycleError(ManipSimError):
    """An operation was called in the wrong environment state."""


class AgentError(ManipSimError):
    """An agent produced an unusable action or cannot serve this task."""


class ProtocolError(ManipSimError):
    """A session-service message violates the wire protocol."""
