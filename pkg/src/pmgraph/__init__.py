"""Dynamic graph store on emulated persistent memory."""

from .errors import PmGraphError
from .pm_region import CrashPlan, PmRegion, WriteStats
from .pma import DEFAULT_THRESHOLDS, Thresholds
from .store import GraphConfig, Graph, Snapshot, VertexEntry

__all__ = [
    "CrashPlan", "DEFAULT_THRESHOLDS", "Graph", "GraphConfig", "PmGraphError",
    "PmRegion", "Snapshot", "Thresholds", "VertexEntry", "WriteStats",
]
