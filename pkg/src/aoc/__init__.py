"""Attention option-critic on the four-rooms gridworld."""

from .agent import (
    AgentConfig,
    LinearSchedule,
    TrainResult,
    improvement_grads,
    td_target,
    train,
)
from .attention import AttentionBank, identity_bank, learnable_bank, room_bank
from .config import RunConfig, load_config
from .errors import AocError, ConfigurationError, TrainingError, UsageError
from .fourrooms import FOUR_ROOMS_TEXT, FourRooms, GridLayout, build_layout
from .metrics import EvalResult, evaluate
from .network import NetworkParams, RMSprop, backward, forward, init_params

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "AocError",
    "AttentionBank",
    "ConfigurationError",
    "EvalResult",
    "FOUR_ROOMS_TEXT",
    "FourRooms",
    "GridLayout",
    "LinearSchedule",
    "NetworkParams",
    "RMSprop",
    "RunConfig",
    "TrainResult",
    "TrainingError",
    "UsageError",
    "backward",
    "build_layout",
    "evaluate",
    "forward",
    "identity_bank",
    "improvement_grads",
    "init_params",
    "learnable_bank",
    "load_config",
    "room_bank",
    "td_target",
    "train",
]
