"""Exception hierarchy for the storage engine."""


class LsmError(Exception):
    """Base class for all engine errors."""


class InvalidArgument(LsmError):
    """Caller passed an argument that violates an operation precondition."""


class StorageIOError(LsmError):
    """A device read or write failed; the manifest is left untouched."""


class InvariantViolation(LsmError):
    """An internal consistency check failed (engine bug, not user error)."""


class ConfigError(LsmError):
    """Experiment or engine configuration does not parse or validate."""


class WorkloadError(LsmError):
    """Workload specification is inconsistent or a workload file is malformed."""
