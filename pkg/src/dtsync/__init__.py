"""Digital-twin synchronization with semantic communication: simulator, SAC agent and baselines."""
from .config import ExperimentConfig, SystemConfig, TrainConfig, load_config
from .env import DtSyncEnv, decode_action
from .simcore import evaluate_slot

__all__ = ["DtSyncEnv", "ExperimentConfig", "SystemConfig", "TrainConfig", "decode_action",
           "evaluate_slot", "load_config"]
__version__ = "0.1.0"
