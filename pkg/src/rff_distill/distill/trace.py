"""Per-epoch audit trail of a training or distillation run."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

TRACE_COLUMNS = ["epoch", "tau", "train_acc", "val_acc", "ce", "kl", "reward"]


@dataclass
class EpochRecord:
    epoch: int
    tau: float
    train_acc: float
    val_acc: float
    ce: float
    kl: float
    reward: float | None = None
    wall_time: float = 0.0
    controller: dict[str, float] = field(default_factory=dict)


@dataclass
class DistillTrace:
    mode: str
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError(f"epoch {record.epoch} does not follow {self.records[-1].epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        values = []
        for record in self.records:
            value = getattr(record, name, None)
            if value is None:
                value = record.controller.get(name, math.nan)
            values.append(value)
        return np.asarray(values, dtype=np.float64)

    def to_frame(self) -> pd.DataFrame:
        """Deterministic columns only; wall time is kept in the JSON summary."""
        rows = []
        for record in self.records:
            row: dict[str, Any] = {name: getattr(record, name) for name in TRACE_COLUMNS}
            row.update(record.controller)
            rows.append(row)
        return pd.DataFrame(rows, columns=None if rows else TRACE_COLUMNS)

    def write_csv(self, path: Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def summary(self, a_base: float | None = None) -> dict[str, Any]:
        tau = self.column("tau")
        val = self.column("val_acc")
        out: dict[str, Any] = {
            "mode": self.mode,
            "epochs": len(self.records),
            "final_val_acc": float(val[-1]) if val.size else None,
            "best_val_acc": float(val.max()) if val.size else None,
            "wall_time_total": float(sum(record.wall_time for record in self.records)),
        }
        out.update(tau_quartile_stats(tau))
        if a_base is not None:
            out["first_epoch_above_a_base"] = first_epoch_above(self, a_base)
        return out

    def write_json(self, path: Path, a_base: float | None = None) -> None:
        payload = {
            "summary": self.summary(a_base),
            "records": [asdict(record) for record in self.records],
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path: Path, mode: str) -> "DistillTrace":
        frame = pd.read_csv(path)
        trace = cls(mode=mode)
        extras = [name for name in frame.columns if name not in TRACE_COLUMNS]
        for row in frame.to_dict(orient="records"):
            reward = row.get("reward")
            if isinstance(reward, float) and math.isnan(reward):
                reward = None
            trace.append(
                EpochRecord(
                    epoch=int(row["epoch"]),
                    tau=float(row["tau"]),
                    train_acc=float(row["train_acc"]),
                    val_acc=float(row["val_acc"]),
                    ce=float(row["ce"]),
                    kl=float(row["kl"]),
                    reward=None if reward is None else float(reward),
                    controller={name: float(row[name]) for name in extras},
                )
            )
        return trace


def tau_quartile_stats(tau: np.ndarray) -> dict[str, float | None]:
    """Mean and population std of tau over the first and last quarter of epochs."""
    if tau.size < 4:
        return {
            "tau_first_q_mean": None,
            "tau_first_q_std": None,
            "tau_last_q_mean": None,
            "tau_last_q_std": None,
        }
    quarter = tau.size // 4
    first, last = tau[:quarter], tau[-quarter:]
    return {
        "tau_first_q_mean": float(first.mean()),
        "tau_first_q_std": float(first.std()),
        "tau_last_q_mean": float(last.mean()),
        "tau_last_q_std": float(last.std()),
    }


def first_epoch_above(trace: DistillTrace, a_base: float) -> int | None:
    for record in trace.records:
        if record.val_acc > a_base:
            return record.epoch
    return None
