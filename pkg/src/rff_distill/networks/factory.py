from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..core.errors import ConfigError, MissingArtifactError
from ..core.npz import write_npz
from ..numcore import ops
from ..numcore.tensor import Tensor
from .layers import Module
from .student import StudentConfig, StudentNet
from .teacher import TeacherConfig, TeacherNet

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
Classifier = Union[TeacherNet, StudentNet]


def frobenius_reg(head_weights: Sequence[Tensor], reg_lambda: float) -> Tensor:
    """reg_lambda * sum of squared Frobenius norms of the head matrices."""
    if reg_lambda < 0:
        raise ValueError(f"reg_lambda must be nonnegative, got {reg_lambda}")
    if reg_lambda == 0 or not head_weights:
        return Tensor(0.0)
    total = ops.square_sum(head_weights[0])
    for weight in head_weights[1:]:
        total = ops.add(total, ops.square_sum(weight))
    return ops.mul(total, reg_lambda)


def param_count(model: Module) -> int:
    return int(sum(param.size for param in model.parameters()))


def student_formula_count(cfg: StudentConfig) -> int:
    """Closed-form parameter count: sum(k^2 * c_in * c_out + c_out) plus the dense layers."""
    channels = [1] + list(cfg.widths)
    total = sum(cfg.kernel**2 * c_in * c_out + c_out for c_in, c_out in zip(channels, channels[1:]))
    width = cfg.widths[-1]
    if cfg.classifier_width:
        total += width * cfg.classifier_width + cfg.classifier_width
        width = cfg.classifier_width
    return total + width * cfg.num_classes + cfg.num_classes


def build_teacher(cfg: TeacherConfig, n_features: int, seed: int) -> TeacherNet:
    return TeacherNet(cfg, n_features, np.random.default_rng(seed))


def build_student(cfg: StudentConfig, seed: int, teacher_params: int | None = None) -> StudentNet:
    student = StudentNet(cfg, np.random.default_rng(seed))
    count = param_count(student)
    if teacher_params is not None and count >= teacher_params:
        raise ConfigError(
            f"student has {count} parameters, not fewer than the teacher's {teacher_params}",
            field_path="student.widths",
        )
    logger.debug("Built student with %s parameters", count)
    return student


def save_checkpoint(
    path: Path, model: Classifier, config_hash: str, extra: dict | None = None
) -> dict:
    kind = "teacher" if isinstance(model, TeacherNet) else "student"
    summary = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "param_count": param_count(model),
        "config_hash": config_hash,
        "model_config": model.cfg.model_dump(),
        "n_features": getattr(model, "n_features", None),
        **(extra or {}),
    }
    tensors = model.state_dict()
    write_npz(path, {"__summary__": np.array(json.dumps(summary, sort_keys=True)), **tensors})
    summary_path = path.with_suffix(".json")
    summary["shapes"] = {name: list(value.shape) for name, value in tensors.items()}
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Saved %s checkpoint (%s params) to %s", kind, summary["param_count"], path)
    return summary


def load_checkpoint(path: Path) -> tuple[Classifier, dict]:
    if not path.exists():
        raise MissingArtifactError(f"checkpoint {path} not found")
    with np.load(path) as data:
        summary = json.loads(str(data["__summary__"]))
        state = {name: data[name] for name in data.files if name != "__summary__"}
    if summary.get("version") != CHECKPOINT_VERSION:
        raise MissingArtifactError(
            f"checkpoint {path} has unsupported version {summary.get('version')}"
        )
    rng = np.random.default_rng(0)
    if summary["kind"] == "teacher":
        teacher_cfg = TeacherConfig.model_validate(summary["model_config"])
        model: Classifier = TeacherNet(teacher_cfg, summary["n_features"], rng)
    else:
        model = StudentNet(StudentConfig.model_validate(summary["model_config"]), rng)
    model.load_state_dict(state)
    model.eval()
    return model, summary
