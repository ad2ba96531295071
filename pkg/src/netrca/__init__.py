"""netrca: statistical root-cause analysis and LLM-assisted diagnosis
for layered network topology snapshots."""

from .statrca import HealthReport, SeriesRef, StatConfig, analyze
from .topology import TopologySnapshot, parse_snapshot, serialize_snapshot

__version__ = "0.1.0"

__all__ = [
    "HealthReport",
    "SeriesRef",
    "StatConfig",
    "TopologySnapshot",
    "analyze",
    "parse_snapshot",
    "serialize_snapshot",
    "__version__",
]
