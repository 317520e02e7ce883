"""Configuration, orchestration, persistence and reporting."""
from .config import RunConfig, from_dict, load_config
from .container import load_state, persist_state
from .pipeline import prepare, run_benchmark, run_network, sweep

__all__ = ["RunConfig", "from_dict", "load_config", "load_state", "persist_state", "prepare",
           "run_benchmark", "run_network", "sweep"]
