"""Discrete-event DTN simulator with SIR and CISER forwarding."""

from .config import ConfigInvalid, SimConfig, config_hash, dump_config, load_config
from .engine import SimResult, contact_rate_rwp, run_simulation

__all__ = [
    "ConfigInvalid",
    "SimConfig",
    "SimResult",
    "config_hash",
    "contact_rate_rwp",
    "dump_config",
    "load_config",
    "run_simulation",
]
