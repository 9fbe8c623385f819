"""Gaussian temperature policy and its critic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..networks.layers import Linear, Module
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor, no_grad
from .state import STATE_DIM, ControllerState

HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)
HALF_LOG_TWO_PI_E = 0.5 * math.log(2.0 * math.pi * math.e)


class ActorNet(Module):
    """state -> (mean in (0, 1), log std). The log std is clipped to per-row bounds."""

    def __init__(self, hidden: int, initial_sigma: float, rng: np.random.Generator) -> None:
        self.body = Linear(STATE_DIM, hidden, rng)
        self.mean_head = Linear(hidden, 1, rng)
        self.log_sigma_head = Linear(hidden, 1, rng)
        self.mean_head.weight.data *= 0.1
        self.log_sigma_head.weight.data *= 0.01
        self.log_sigma_head.bias.data[:] = math.log(initial_sigma)

    def __call__(
        self, states: Any, log_sigma_low: Any, log_sigma_high: Any
    ) -> tuple[Tensor, Tensor]:
        hidden = ops.tanh(self.body(as_tensor(states)))
        mu = ops.sigmoid(self.mean_head(hidden))
        log_sigma = ops.clip(self.log_sigma_head(hidden), log_sigma_low, log_sigma_high)
        return mu, log_sigma


class CriticNet(Module):
    def __init__(self, hidden: int, rng: np.random.Generator) -> None:
        self.body = Linear(STATE_DIM, hidden, rng)
        self.value_head = Linear(hidden, 1, rng)

    def __call__(self, states: Any) -> Tensor:
        return self.value_head(ops.tanh(self.body(as_tensor(states))))

    def value(self, state: ControllerState) -> float:
        with no_grad():
            return self(state.as_array()[None, :]).item()


@dataclass(frozen=True)
class ActionSample:
    action: float
    raw_action: float
    log_prob: float
    mu: float
    sigma: float
    log_sigma_bounds: tuple[float, float]


def gaussian_log_prob(x: Any, mu: Any, log_sigma: Any) -> Tensor:
    """-0.5*((x - mu)/sigma)^2 - log(sigma) - 0.5*log(2*pi), elementwise."""
    z = ops.div(ops.sub(x, mu), ops.exp(log_sigma))
    return ops.sub(ops.sub(ops.mul(ops.mul(z, z), -0.5), log_sigma), HALF_LOG_TWO_PI)


def entropy_bonus(sigma: float) -> float:
    """Differential entropy of N(mu, sigma^2): 0.5 * ln(2*pi*e*sigma^2)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return HALF_LOG_TWO_PI_E + math.log(sigma)


def gaussian_entropy(log_sigma: Tensor) -> Tensor:
    return ops.add(log_sigma, HALF_LOG_TWO_PI_E)


def sample_action(
    state: ControllerState,
    actor: ActorNet,
    rng: np.random.Generator,
    sigma_bounds: tuple[float, float],
) -> ActionSample:
    """a = clip(mu + eps, 0, 1) with eps ~ N(0, sigma^2); the log-prob is of the pre-clip draw."""
    bounds = (math.log(sigma_bounds[0]), math.log(sigma_bounds[1]))
    with no_grad():
        mu_t, log_sigma_t = actor(state.as_array()[None, :], bounds[0], bounds[1])
    mu, log_sigma = mu_t.item(), log_sigma_t.item()
    sigma = min(max(math.exp(log_sigma), sigma_bounds[0]), sigma_bounds[1])
    raw = mu + sigma * float(rng.standard_normal())
    with no_grad():
        log_prob = gaussian_log_prob(np.array([[raw]]), mu_t, log_sigma_t).item()
    return ActionSample(
        action=min(max(raw, 0.0), 1.0),
        raw_action=raw,
        log_prob=log_prob,
        mu=mu,
        sigma=sigma,
        log_sigma_bounds=bounds,
    )


def map_temperature(action: float, tau_min: float, tau_max: float) -> float:
    if not 0.0 <= action <= 1.0:
        raise ValueError(f"action must lie in [0, 1], got {action}")
    return tau_min + action * (tau_max - tau_min)
