"""Decentralized multi-agent target search with belief-sharing protocols."""

from .belief import Belief, SensorModel
from .engine import EpisodeConfig, phase_order_audit, run_episode
from .grid import Cell, GridConfig
from .metrics import EpisodeResult, MehConfig
from .network import ChannelConfig
from .protocols import ProtocolConfig, Variant

__version__ = "0.1.0"

__all__ = [
    "Belief", "Cell", "ChannelConfig", "EpisodeConfig", "EpisodeResult", "GridConfig", "MehConfig",
    "ProtocolConfig", "SensorModel", "Variant", "phase_order_audit", "run_episode",
]
