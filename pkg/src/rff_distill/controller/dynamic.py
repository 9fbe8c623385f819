"""Distillation with a learned, per-epoch temperature.

Each epoch the controller observes windowed accuracy/KL telemetry, samples an action,
maps it to a temperature, and the student runs one distillation epoch at that
temperature. Rewards feed an on-policy rollout buffer; a clipped-surrogate update
runs whenever the buffer fills and once more at the end of the run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..distill.losses import kl_divergence
from ..distill.trace import DistillTrace
from ..distill.trainer import (
    DistillConfig,
    TrainingSession,
    accuracy,
    distill_epoch,
    predict_logits,
)
from ..features.dataset import DatasetArrays
from ..networks.factory import Classifier
from ..numcore.optim import Adam
from .config import ControllerConfig
from .policy import ActionSample, ActorNet, CriticNet, map_temperature, sample_action
from .ppo import RolloutBuffer, UpdateStats, policy_update, reward
from .state import ControllerState, state_features

logger = logging.getLogger(__name__)

_CONTROLLER_STREAM = 0xC7


@dataclass
class TemperatureController:
    cfg: ControllerConfig
    actor: ActorNet
    critic: CriticNet
    actor_opt: Adam
    critic_opt: Adam
    rng: np.random.Generator
    buffer: RolloutBuffer
    updates: list[UpdateStats] = field(default_factory=list)

    @classmethod
    def create(cls, cfg: ControllerConfig, seed: int) -> "TemperatureController":
        init_seq, sample_seq = np.random.SeedSequence([seed, _CONTROLLER_STREAM]).spawn(2)
        init_rng = np.random.default_rng(init_seq)
        actor = ActorNet(cfg.hidden, cfg.initial_sigma, init_rng)
        critic = CriticNet(cfg.hidden, init_rng)
        return cls(
            cfg=cfg,
            actor=actor,
            critic=critic,
            actor_opt=Adam(actor.parameters(), lr=cfg.lr, max_grad_norm=cfg.max_grad_norm),
            critic_opt=Adam(critic.parameters(), lr=cfg.lr, max_grad_norm=cfg.max_grad_norm),
            rng=np.random.default_rng(sample_seq),
            buffer=RolloutBuffer(capacity=cfg.horizon),
        )

    def sigma_bounds(self, clamped: bool) -> tuple[float, float]:
        if clamped:
            return self.cfg.sigma_clip
        return self.cfg.sigma_floor, self.cfg.sigma_max

    def act(self, state: ControllerState, clamped: bool) -> tuple[ActionSample, float, float]:
        sample = sample_action(state, self.actor, self.rng, self.sigma_bounds(clamped))
        tau = map_temperature(sample.action, self.cfg.tau_min, self.cfg.tau_max)
        return sample, tau, self.critic.value(state)

    def update(self, value_next: float) -> UpdateStats:
        stats = policy_update(
            self.buffer,
            self.actor,
            self.critic,
            self.actor_opt,
            self.critic_opt,
            self.cfg,
            value_next,
        )
        self.updates.append(stats)
        return stats


@dataclass
class DynamicResult:
    student: Classifier
    trace: DistillTrace
    controller: TemperatureController


def dynamic_distill(
    teacher: Classifier,
    student: Classifier,
    data: DatasetArrays,
    distill_cfg: DistillConfig,
    controller_cfg: ControllerConfig,
    seed: int,
) -> DynamicResult:
    session = TrainingSession(
        student,
        data,
        distill_cfg,
        seed,
        teacher=teacher,
        scale_by_tau_sq=distill_cfg.scale_by_tau_sq,
        kl_direction=distill_cfg.kl_direction,
    )
    controller = TemperatureController.create(controller_cfg, seed)
    total = distill_cfg.epochs
    trace = DistillTrace(mode="dynamic")

    tau_prev = map_temperature(0.5, controller_cfg.tau_min, controller_cfg.tau_max)
    initial_logits = predict_logits(student, data.x_train)
    acc_history = [accuracy(initial_logits, data.y_train)]
    teacher_logits = session.teacher_logits
    kl_history = [kl_divergence(teacher_logits, initial_logits, tau_prev)]  # type: ignore[arg-type]
    clamped = False
    sigma = controller_cfg.initial_sigma
    first_step = True

    for epoch in range(1, total + 1):
        state = state_features(acc_history, kl_history, epoch - 1, total, controller_cfg.window)
        if controller.buffer.full:
            # bootstrap from the state that followed the last buffered transition
            controller.update(controller.critic.value(state) if state.is_finite() else 0.0)
        held = not state.is_finite()
        if held:
            logger.warning(
                "Non-finite controller telemetry at epoch %s; holding tau=%.4f", epoch, tau_prev
            )
            tau, sample, value = tau_prev, None, math.nan
        else:
            sample, tau, value = controller.act(state, clamped)
            sigma = sample.sigma
        if first_step:
            tau_prev = tau
            first_step = False

        metrics = distill_epoch(session, tau, distill_cfg.beta)
        xi, kl = metrics.train_acc, metrics.kl_mean
        extras = {**state.named(), "sigma": sigma, "held": float(held), "clamped": float(clamped)}
        if sample is not None:
            extras.update({"action": sample.action, "mu": sample.mu})
        reward_value: float | None = None
        if sample is not None and math.isfinite(xi) and math.isfinite(kl):
            reward_value = reward(xi, kl, tau, tau_prev, controller_cfg)
            controller.buffer.add(state, sample, value, reward_value)
        elif sample is not None:
            logger.warning("Non-finite epoch telemetry at epoch %s; transition dropped", epoch)
        trace.append(metrics.to_record(reward=reward_value, controller=extras))

        acc_history.append(xi)
        kl_history.append(kl)
        tau_prev = tau
        if not clamped and metrics.val_acc > controller_cfg.a_base:
            clamped = True
            logger.info(
                "Validation accuracy %.4f exceeded %.2f at epoch %s; clamping sigma",
                metrics.val_acc,
                controller_cfg.a_base,
                epoch,
            )

    if len(controller.buffer):
        controller.update(0.0)
    student.eval()
    logger.info(
        "Dynamic distillation finished: %s epochs, %s policy updates",
        total,
        len(controller.updates),
    )
    return DynamicResult(student=student, trace=trace, controller=controller)
