"""Desk-scale LSM-tree storage engine with composable compaction strategies."""

from .compaction import (
    CompactionStrategy,
    DataLayout,
    Granularity,
    GranularityKind,
    LayoutKind,
    MovementPolicy,
    PRESET_NAMES,
    Trigger,
    TriggerKind,
    get_strategy,
    presets,
)
from .config import TreeConfig
from .engine import LookupResult, LsmEngine
from .errors import (
    ConfigError,
    InvalidArgument,
    InvariantViolation,
    LsmError,
    StorageIOError,
    WorkloadError,
)
from .metrics import MetricsReport
from .workload import Distribution, WorkloadSpec, generate

__all__ = [
    "CompactionStrategy",
    "ConfigError",
    "DataLayout",
    "Distribution",
    "Granularity",
    "GranularityKind",
    "InvalidArgument",
    "InvariantViolation",
    "LayoutKind",
    "LookupResult",
    "LsmEngine",
    "LsmError",
    "MetricsReport",
    "MovementPolicy",
    "PRESET_NAMES",
    "StorageIOError",
    "Trigger",
    "TriggerKind",
    "TreeConfig",
    "WorkloadError",
    "WorkloadSpec",
    "generate",
    "get_strategy",
    "presets",
]

__version__ = "0.1.0"
