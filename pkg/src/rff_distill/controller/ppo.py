"""Reward shaping, advantage estimation and the clipped-surrogate policy update."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..numcore import ops
from ..numcore.optim import Adam
from ..numcore.tensor import Tensor, as_tensor, backward
from .config import ControllerConfig
from .policy import ActorNet, ActionSample, CriticNet, gaussian_entropy, gaussian_log_prob
from .state import STATE_DIM, ControllerState

logger = logging.getLogger(__name__)

ADV_STD_EPS = 1e-8


def reward(xi: float, kl: float, tau: float, tau_prev: float, cfg: ControllerConfig) -> float:
    """w1*(xi - xi_base) + w2*log(1 + 10*(kl - k_target)^2) + w3*|tau - tau_prev|^rho, clipped."""
    if not all(math.isfinite(value) for value in (xi, kl, tau, tau_prev)):
        raise ValueError(
            f"reward inputs must be finite: xi={xi} kl={kl} tau={tau} tau_prev={tau_prev}"
        )
    w1, w2, w3 = cfg.reward_weights
    value = (
        w1 * (xi - cfg.xi_base)
        + w2 * math.log1p(10.0 * (kl - cfg.k_target) ** 2)
        + w3 * abs(tau - tau_prev) ** cfg.rho
    )
    low, high = cfg.reward_clip
    return min(max(value, low), high)


def gae(
    rewards: Sequence[float],
    values: Sequence[float],
    value_next: float,
    gamma: float,
    gae_lambda: float = 1.0,
) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError(f"{rewards.size} rewards but {values.size} values")
    next_values = np.append(values[1:], value_next)
    deltas = rewards + gamma * next_values - values
    advantages = np.zeros_like(deltas)
    running = 0.0
    for t in range(deltas.size - 1, -1, -1):
        running = deltas[t] + gamma * gae_lambda * running
        advantages[t] = running
    return advantages


def clipped_objective(
    log_prob_new: Any, log_prob_old: Any, advantages: Any, kappa: float
) -> Tensor:
    """Per-step min(r*A, clip(r, 1-kappa, 1+kappa)*A) with r = exp(new - old)."""
    ratio = ops.exp(ops.sub(log_prob_new, as_tensor(log_prob_old).detach()))
    adv = as_tensor(advantages).detach()
    unclipped = ops.mul(ratio, adv)
    clipped = ops.mul(ops.clip(ratio, 1.0 - kappa, 1.0 + kappa), adv)
    return ops.minimum(unclipped, clipped)


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    centered = advantages - advantages.mean()
    std = advantages.std()
    if std == 0.0:
        return centered
    return centered / (std + ADV_STD_EPS)


@dataclass
class RolloutBuffer:
    capacity: int
    states: list[np.ndarray] = field(default_factory=list)
    raw_actions: list[float] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    log_sigma_bounds: list[tuple[float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def full(self) -> bool:
        return len(self) >= self.capacity

    def add(
        self, state: ControllerState, sample: ActionSample, value: float, reward_value: float
    ) -> None:
        if self.full:
            raise ValueError(f"rollout buffer already holds {self.capacity} transitions")
        self.states.append(state.as_array())
        self.raw_actions.append(sample.raw_action)
        self.log_probs.append(sample.log_prob)
        self.values.append(value)
        self.rewards.append(reward_value)
        self.log_sigma_bounds.append(sample.log_sigma_bounds)

    def clear(self) -> None:
        for items in (
            self.states,
            self.raw_actions,
            self.log_probs,
            self.values,
            self.rewards,
            self.log_sigma_bounds,
        ):
            items.clear()


@dataclass
class UpdateStats:
    transitions: int
    actor_loss: float
    critic_loss: float
    mean_advantage: float
    mean_ratio: float


def actor_objective(
    actor: ActorNet,
    states: np.ndarray,
    raw_actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    bounds: np.ndarray,
    cfg: ControllerConfig,
) -> tuple[Tensor, Tensor]:
    """Actor loss -(mean surrogate + entropy_coef * mean entropy), and the ratios."""
    mu, log_sigma = actor(states, bounds[:, :1], bounds[:, 1:])
    new_log_probs = gaussian_log_prob(raw_actions[:, None], mu, log_sigma)
    surrogate = clipped_objective(
        new_log_probs, old_log_probs[:, None], advantages[:, None], cfg.clip_kappa
    )
    entropy = gaussian_entropy(log_sigma)
    objective = ops.add(ops.mean(surrogate), ops.mul(ops.mean(entropy), cfg.entropy_coef))
    ratio = np.exp(new_log_probs.data - old_log_probs[:, None])
    return ops.neg(objective), Tensor(ratio)


def critic_objective(critic: CriticNet, states: np.ndarray, returns: np.ndarray) -> Tensor:
    error = ops.sub(critic(states), returns[:, None])
    return ops.mean(ops.mul(error, error))


def policy_update(
    buffer: RolloutBuffer,
    actor: ActorNet,
    critic: CriticNet,
    actor_opt: Adam,
    critic_opt: Adam,
    cfg: ControllerConfig,
    value_next: float = 0.0,
) -> UpdateStats:
    """Consume every buffered transition, run the minor epochs, then clear the buffer."""
    if len(buffer) == 0:
        raise ValueError("policy_update needs at least one transition")
    states = np.stack(buffer.states).reshape(-1, STATE_DIM)
    raw_actions = np.asarray(buffer.raw_actions, dtype=np.float64)
    old_log_probs = np.asarray(buffer.log_probs, dtype=np.float64)
    values = np.asarray(buffer.values, dtype=np.float64)
    bounds = np.asarray(buffer.log_sigma_bounds, dtype=np.float64)

    advantages = gae(buffer.rewards, values, value_next, cfg.gamma, cfg.gae_lambda)
    returns = advantages + values
    normalized = normalize_advantages(advantages)

    actor_loss = critic_loss = math.nan
    mean_ratio = 1.0
    for _ in range(cfg.minor_epochs):
        loss, ratio = actor_objective(
            actor, states, raw_actions, old_log_probs, normalized, bounds, cfg
        )
        backward(loss, actor_opt.params)
        actor_opt.step()
        actor_loss, mean_ratio = loss.item(), float(ratio.data.mean())

        value_loss = critic_objective(critic, states, returns)
        backward(value_loss, critic_opt.params)
        critic_opt.step()
        critic_loss = value_loss.item()

    stats = UpdateStats(
        transitions=len(buffer),
        actor_loss=actor_loss,
        critic_loss=critic_loss,
        mean_advantage=float(advantages.mean()),
        mean_ratio=mean_ratio,
    )
    buffer.clear()
    logger.debug(
        "policy update over %s transitions: actor_loss=%.5f critic_loss=%.5f ratio=%.4f",
        stats.transitions,
        stats.actor_loss,
        stats.critic_loss,
        stats.mean_ratio,
    )
    return stats
