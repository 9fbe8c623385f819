"""Online temperature control for distillation."""

from .config import ControllerConfig
from .dynamic import DynamicResult, TemperatureController, dynamic_distill
from .policy import (
    ActorNet,
    CriticNet,
    entropy_bonus,
    gaussian_log_prob,
    map_temperature,
    sample_action,
)
from .ppo import RolloutBuffer, clipped_objective, gae, policy_update, reward
from .state import ControllerState, state_features

__all__ = [
    "ActorNet",
    "ControllerConfig",
    "ControllerState",
    "CriticNet",
    "DynamicResult",
    "RolloutBuffer",
    "TemperatureController",
    "clipped_objective",
    "dynamic_distill",
    "entropy_bonus",
    "gae",
    "gaussian_log_prob",
    "map_temperature",
    "policy_update",
    "reward",
    "sample_action",
    "state_features",
]
