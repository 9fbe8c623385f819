"""Experiment orchestration behind the CLI verbs.

Every command reads and writes artifacts under one output directory, records itself
in the run ledger and keeps ``manifest.json`` listing what it produced. Numbers in
reports come from the traces and evaluations written next to them.
"""

from __future__ import annotations

import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterator, Literal

import numpy as np
import pandas as pd

from ..api_schemas import ExperimentConfig, ModelReport, RunReport
from ..controller.dynamic import dynamic_distill
from ..core.config import Settings, get_settings
from ..core.errors import ConfigError, MissingArtifactError, exit_code_for
from ..core.models import RunStatus
from ..distill.evaluation import EvaluationResult, evaluate
from ..distill.trace import DistillTrace
from ..distill.trainer import distill_fixed, train_supervised
from ..features.dataset import (
    DatasetArrays,
    dataset_from_frames,
    load_dataset,
    manifest_entries,
    save_dataset,
    write_manifest,
)
from ..features.ingest import IngestLayout, ingest_iq
from ..networks.factory import (
    Classifier,
    build_student,
    build_teacher,
    load_checkpoint,
    param_count,
    save_checkpoint,
)
from ..numcore.tensor import no_grad
from ..repositories.unit_of_work import UnitOfWork
from ..signals.archive import read_archive, write_archive
from ..signals.fingerprint import sample_fleet, save_fleet
from ..signals.synthesis import synthesize_fleet_frames
from .analysis import cluster_silhouette, median_latency_ms, pca_project, peak_rss_mb

logger = logging.getLogger(__name__)

DistillMode = Literal["nkd", "fixed", "dynamic"]

FLEET_FILE = "fleet.json"
ARCHIVE_FILE = "frames.drfx"
DATASET_FILE = "dataset.npz"
DATASET_MANIFEST_FILE = "dataset_manifest.json"
MANIFEST_FILE = "manifest.json"
TEACHER_CHECKPOINT = "checkpoints/teacher.npz"

_STREAMS = {
    "fleet": 1,
    "teacher_init": 2,
    "teacher_train": 3,
    "student_init": 4,
    "student_train": 5,
}


def derive_seed(seed: int, stream: str) -> int:
    state = np.random.SeedSequence([seed, _STREAMS[stream]]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def mode_name(mode: DistillMode, tau: float | None = None) -> str:
    if mode == "fixed":
        return f"fixed_tau_{tau:g}"
    return mode


@dataclass
class RunContext:
    run_id: int
    command: str
    artifacts: dict[str, Path] = field(default_factory=dict)
    report: dict[str, Any] = field(default_factory=dict)


@dataclass
class TrainedModel:
    mode: str
    model: Classifier
    trace: DistillTrace
    test: EvaluationResult
    report: ModelReport


class ExperimentRunner:
    def __init__(
        self,
        config: ExperimentConfig,
        out_dir: Path | None = None,
        settings: Settings | None = None,
    ) -> None:
        self.config = config
        self.settings = settings or get_settings()
        self.out_dir = Path(out_dir or config.out_dir or self.settings.default_out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.ledger_path = self.settings.ledger_path(self.out_dir)
        self.config_hash = config.config_hash()

    # --- bookkeeping -------------------------------------------------------

    def path(self, relative: str) -> Path:
        target = self.out_dir / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _require(self, relative: str, hint: str) -> Path:
        target = self.out_dir / relative
        if not target.exists():
            raise MissingArtifactError(f"{target} not found; run `rff-distill {hint}` first")
        return target

    @contextmanager
    def tracked(self, command: str, mode: str | None = None) -> Iterator[RunContext]:
        with UnitOfWork(self.ledger_path) as uow:
            run = uow.runs.create_run(
                command=command, config_hash=self.config_hash, seed=self.config.seed, mode=mode
            )
            run_id = run.id
        logger.info(
            "Run %s: %s seed=%s config=%s %s",
            run_id,
            command,
            self.config.seed,
            self.config_hash[:12],
            self.config.canonical_json(),
        )
        ctx = RunContext(run_id=run_id, command=command)
        try:
            yield ctx
        except Exception as exc:
            with UnitOfWork(self.ledger_path) as uow:
                failed = uow.runs.get(run_id)
                if failed is not None:
                    failed.status = RunStatus.FAILED.value
                    failed.exit_code = exit_code_for(exc)
                    failed.last_error = str(exc)
                    failed.finished_at = datetime.utcnow()
                    uow.runs.add(failed)
            logger.debug("Run %s failed: %s", run_id, exc)
            raise
        with UnitOfWork(self.ledger_path) as uow:
            done = uow.runs.get(run_id)
            if done is not None:
                done.status = RunStatus.COMPLETED.value
                done.exit_code = 0
                done.report = ctx.report
                done.finished_at = datetime.utcnow()
                uow.runs.add(done)
            for kind, target in ctx.artifacts.items():
                uow.artifacts.record(
                    run_id=run_id,
                    kind=kind,
                    path=str(target.relative_to(self.out_dir)),
                    sha256=file_sha256(target),
                    size_bytes=target.stat().st_size,
                )
        self._update_manifest(ctx)

    def _update_manifest(self, ctx: RunContext) -> None:
        manifest_path = self.out_dir / MANIFEST_FILE
        manifest: dict[str, Any] = {}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest["config_hash"] = self.config_hash
        manifest["seed"] = self.config.seed
        artifacts = manifest.setdefault("artifacts", {})
        for kind, target in ctx.artifacts.items():
            artifacts[kind] = {
                "path": str(target.relative_to(self.out_dir)),
                "sha256": file_sha256(target),
                "command": ctx.command,
            }
        payload = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        manifest_path.write_text(payload, encoding="utf-8")

    def _write_report(self, ctx: RunContext, name: str, report: RunReport) -> Path:
        target = self.path(f"reports/{name}.json")
        target.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        ctx.artifacts[f"report:{name}"] = target
        ctx.report = json.loads(report.model_dump_json())
        return target

    def _base_report(self, command: str) -> RunReport:
        return RunReport(command=command, config_hash=self.config_hash, seed=self.config.seed)

    # --- data ---------------------------------------------------------------

    def synth(self) -> RunReport:
        cfg = self.config
        with self.tracked("synth") as ctx:
            fleet_rng = np.random.default_rng(derive_seed(cfg.seed, "fleet"))
            fleet = sample_fleet(fleet_rng, cfg.fleet.num_devices, cfg.fleet.ranges)
            frames = synthesize_fleet_frames(
                fleet, cfg.dataset.channels, cfg.dataset.per_device, cfg.seed, cfg.dataset.waveform
            )
            fleet_path, archive_path = self.path(FLEET_FILE), self.path(ARCHIVE_FILE)
            save_fleet(fleet_path, fleet)
            write_archive(archive_path, frames)
            ctx.artifacts.update({"fleet": fleet_path, "archive": archive_path})
            report = self._base_report("synth")
            report.artifacts = {
                "fleet": FLEET_FILE,
                "archive": ARCHIVE_FILE,
                "frames": str(len(frames)),
            }
            self._write_report(ctx, "synth", report)
        return report

    def ingest(self, source: Path | None = None, layout: IngestLayout | None = None) -> RunReport:
        ingest_cfg = self.config.ingest
        if source is None and ingest_cfg is None:
            raise ConfigError(
                "ingest needs a capture path (argument or config.ingest.path)",
                field_path="ingest.path",
            )
        source = Path(source or ingest_cfg.path)  # type: ignore[union-attr]
        layout = layout or (ingest_cfg.layout if ingest_cfg else IngestLayout())
        if not source.exists():
            raise ConfigError(f"capture {source} not found", field_path="ingest.path")
        with self.tracked("ingest") as ctx:
            frames = ingest_iq(source, layout)
            if not frames:
                raise ConfigError(f"{source} holds no complete frames", field_path="ingest.path")
            archive_path = self.path(ARCHIVE_FILE)
            write_archive(archive_path, frames)
            ctx.artifacts["archive"] = archive_path
            report = self._base_report("ingest")
            report.artifacts = {
                "archive": ARCHIVE_FILE,
                "frames": str(len(frames)),
                "source": str(source),
            }
            self._write_report(ctx, "ingest", report)
        return report

    def featurize(self) -> RunReport:
        cfg = self.config
        with self.tracked("featurize") as ctx:
            archive_path = self._require(ARCHIVE_FILE, "synth")
            frames = read_archive(archive_path)
            num_classes = int(max(frame.label for frame in frames)) + 1
            split = dataset_from_frames(
                frames,
                cfg.seed,
                cfg.dataset.featurizer,
                cfg.dataset.augmentation,
                workers=self.settings.featurize_workers,
                num_classes=num_classes,
            )
            dataset_path = self.path(DATASET_FILE)
            save_dataset(dataset_path, split.as_arrays())
            manifest_path = self.path(DATASET_MANIFEST_FILE)
            entries = manifest_entries(
                split.indices, [frame.label for frame in frames], ARCHIVE_FILE, frames[0].n_samples
            )
            write_manifest(manifest_path, entries)
            ctx.artifacts.update({"dataset": dataset_path, "dataset_manifest": manifest_path})
            report = self._base_report("featurize")
            sizes = {name: str(count) for name, count in split.sizes().items()}
            report.artifacts = {"dataset": DATASET_FILE, **sizes}
            self._write_report(ctx, "featurize", report)
        return report

    def _dataset(self) -> DatasetArrays:
        self._require(DATASET_FILE, "featurize")
        return load_dataset(self.out_dir / DATASET_FILE)

    # --- models -------------------------------------------------------------

    def _class_config(self, data: DatasetArrays) -> ExperimentConfig:
        if data.num_classes == self.config.fleet.num_devices:
            return self.config
        return self.config.with_num_classes(data.num_classes)

    def _persist_trace(self, ctx: RunContext, mode: str, trace: DistillTrace) -> Path:
        csv_path = self.path(f"traces/{mode}.csv")
        trace.write_csv(csv_path)
        json_path = self.path(f"traces/{mode}.json")
        a_base = self.config.controller.a_base if mode == "dynamic" else None
        trace.write_json(json_path, a_base=a_base)
        ctx.artifacts[f"trace:{mode}"] = csv_path
        ctx.artifacts[f"trace_summary:{mode}"] = json_path
        return csv_path

    def _model_report(
        self,
        ctx: RunContext,
        mode: str,
        model: Classifier,
        data: DatasetArrays,
        trace: DistillTrace | None,
        checkpoint: Path | None,
    ) -> tuple[ModelReport, EvaluationResult]:
        result = evaluate(model, data.x_test, data.y_test, data.num_classes)
        confusion_path = self.path(f"reports/confusion_{mode}_test.csv")
        result.write_confusion_csv(confusion_path)
        ctx.artifacts[f"confusion:{mode}"] = confusion_path
        worst = result.weakest_classes(1)[0]
        trace_path = self._persist_trace(ctx, mode, trace) if trace is not None else None
        tau_stats = None
        if trace is not None and mode == "dynamic":
            tau_stats = trace.summary(self.config.controller.a_base)
        report = ModelReport(
            mode=mode,
            accuracy=result.accuracy,
            param_count=param_count(model),
            latency_ms_median=median_latency_ms(
                model, data.x_test[0], self.settings.latency_runs, self.settings.latency_warmup
            ),
            worst_class=worst,
            worst_class_recall=float(result.per_class_recall[worst]),
            silhouette=self._silhouette(model, data),
            trace_csv=str(trace_path.relative_to(self.out_dir)) if trace_path else None,
            confusion_csv=str(confusion_path.relative_to(self.out_dir)),
            checkpoint=str(checkpoint.relative_to(self.out_dir)) if checkpoint else None,
            tau_stats=tau_stats,
        )
        return report, result

    def _silhouette(self, model: Classifier, data: DatasetArrays) -> float | None:
        try:
            projection = pca_project(self._features(model, data.x_test))
        except ValueError as exc:
            logger.warning("Skipping silhouette: %s", exc)
            return None
        return cluster_silhouette(projection.coords, data.y_test)

    @staticmethod
    def _features(model: Classifier, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        model.eval()
        with no_grad():
            chunks = [
                model.features(x[i : i + batch_size]).data for i in range(0, len(x), batch_size)
            ]
        return np.concatenate(chunks)

    def _load_teacher(self) -> Classifier:
        teacher, _ = load_checkpoint(self._require(TEACHER_CHECKPOINT, "train-teacher"))
        return teacher

    def train_teacher(self) -> RunReport:
        with self.tracked("train-teacher", mode="teacher") as ctx:
            data = self._dataset()
            cfg = self._class_config(data)
            init_seed = derive_seed(cfg.seed, "teacher_init")
            teacher = build_teacher(cfg.teacher, data.feature_shape[0], init_seed)
            train_seed = derive_seed(cfg.seed, "teacher_train")
            teacher, trace = train_supervised(
                teacher, data, cfg.teacher_training, train_seed, mode="teacher"
            )
            checkpoint = self.path(TEACHER_CHECKPOINT)
            save_checkpoint(checkpoint, teacher, self.config_hash)
            ctx.artifacts["checkpoint:teacher"] = checkpoint
            model_report, _ = self._model_report(ctx, "teacher", teacher, data, trace, checkpoint)
            report = self._base_report("train-teacher")
            report.models = [model_report]
            report.peak_rss_mb = peak_rss_mb()
            self._write_report(ctx, "train-teacher", report)
        return report

    def _train_student(
        self,
        ctx: RunContext,
        data: DatasetArrays,
        mode: DistillMode,
        tau: float | None,
        teacher: Classifier | None,
    ) -> TrainedModel:
        cfg = self._class_config(data)
        name = mode_name(mode, tau)
        teacher_params = param_count(teacher) if teacher is not None else None
        student = build_student(cfg.student, derive_seed(cfg.seed, "student_init"), teacher_params)
        train_seed = derive_seed(cfg.seed, "student_train")
        if mode == "nkd":
            student, trace = train_supervised(student, data, cfg.distill, train_seed, mode=name)
        elif mode == "fixed":
            update = {"tau": float(tau), "kd_mode": "fixed"}  # type: ignore[arg-type]
            fixed_cfg = cfg.distill.model_copy(update=update)
            student, trace = distill_fixed(
                student, teacher, data, fixed_cfg, train_seed, mode=name  # type: ignore[arg-type]
            )
        else:
            result = dynamic_distill(
                teacher,  # type: ignore[arg-type]
                student,
                data,
                cfg.distill,
                cfg.controller,
                train_seed,
            )
            student, trace = result.student, result.trace
        checkpoint = self.path(f"checkpoints/student_{name}.npz")
        save_checkpoint(checkpoint, student, self.config_hash, extra={"mode": name})
        ctx.artifacts[f"checkpoint:{name}"] = checkpoint
        model_report, test = self._model_report(ctx, name, student, data, trace, checkpoint)
        return TrainedModel(mode=name, model=student, trace=trace, test=test, report=model_report)

    def distill(self, mode: DistillMode, tau: float | None = None) -> RunReport:
        if mode not in ("nkd", "fixed", "dynamic"):
            raise ConfigError(f"unknown distillation mode {mode!r}", field_path="--mode")
        if mode == "fixed" and tau is None:
            tau = self.config.distill.tau
        if mode == "fixed":
            self._check_fixed_taus([tau], "--tau")  # type: ignore[list-item]
        with self.tracked("distill", mode=mode_name(mode, tau)) as ctx:
            data = self._dataset()
            teacher = self._load_teacher() if mode != "nkd" else self._optional_teacher()
            trained = self._train_student(ctx, data, mode, tau, teacher)
            report = self._base_report("distill")
            report.models = [trained.report]
            report.peak_rss_mb = peak_rss_mb()
            self._write_report(ctx, f"distill_{trained.mode}", report)
        return report

    def _check_fixed_taus(self, taus: list[float], field_path: str) -> None:
        floor = self.config.distill.tau_min
        for tau in taus:
            if tau < floor:
                raise ConfigError(f"tau {tau} is below tau_min {floor}", field_path=field_path)

    def _optional_teacher(self) -> Classifier | None:
        if (self.out_dir / TEACHER_CHECKPOINT).exists():
            return self._load_teacher()
        return None

    def compare(self) -> RunReport:
        self._check_fixed_taus(self.config.fixed_taus, "fixed_taus")
        with self.tracked("compare", mode="all") as ctx:
            data = self._dataset()
            teacher = self._load_teacher()
            teacher_report, _ = self._model_report(
                ctx, "teacher", teacher, data, None, self.out_dir / TEACHER_CHECKPOINT
            )
            runs = [self._train_student(ctx, data, "nkd", None, teacher)]
            for tau in self.config.fixed_taus:
                runs.append(self._train_student(ctx, data, "fixed", tau, teacher))
            runs.append(self._train_student(ctx, data, "dynamic", None, teacher))

            report = self._base_report("compare")
            report.models = [teacher_report] + [run.report for run in runs]
            students = sorted(runs, key=lambda run: -run.report.accuracy)
            report.ranking = [run.mode for run in students]
            report.weak_class_gain = weak_class_gain(runs[0].test, runs[-1].test)
            report.peak_rss_mb = peak_rss_mb()

            table_path = self.path("reports/compare.csv")
            rows = [item.model_dump(exclude={"tau_stats"}) for item in report.models]
            pd.DataFrame(rows).to_csv(table_path, index=False, float_format="%.17g")
            ctx.artifacts["table:compare"] = table_path
            self._write_report(ctx, "compare", report)
        return report

    # --- analysis -------------------------------------------------------------

    def _checkpoint(self, checkpoint: str) -> tuple[Classifier, str]:
        target = Path(checkpoint)
        if not target.is_absolute() and not target.exists():
            target = self.out_dir / checkpoint
        if not target.exists():
            raise MissingArtifactError(f"checkpoint {checkpoint} not found")
        model, summary = load_checkpoint(target)
        return model, summary.get("mode", summary["kind"])

    def evaluate(self, checkpoint: str, split: str = "test") -> RunReport:
        with self.tracked("eval", mode=split) as ctx:
            data = self._dataset()
            model, name = self._checkpoint(checkpoint)
            x, y = data.split(split)
            result = evaluate(model, x, y, data.num_classes)
            confusion_path = self.path(f"reports/confusion_{name}_{split}.csv")
            result.write_confusion_csv(confusion_path)
            ctx.artifacts[f"confusion:{name}:{split}"] = confusion_path
            worst = result.weakest_classes(1)[0]
            report = self._base_report("eval")
            report.models = [
                ModelReport(
                    mode=name,
                    accuracy=result.accuracy,
                    param_count=param_count(model),
                    worst_class=worst,
                    worst_class_recall=float(result.per_class_recall[worst]),
                    confusion_csv=str(confusion_path.relative_to(self.out_dir)),
                    checkpoint=checkpoint,
                )
            ]
            self._write_report(ctx, f"eval_{name}_{split}", report)
        return report

    def export_features(self, checkpoint: str, split: str = "test") -> Path:
        with self.tracked("export-features", mode=split) as ctx:
            data = self._dataset()
            model, name = self._checkpoint(checkpoint)
            x, y = data.split(split)
            projection = pca_project(self._features(model, x))
            coords = projection.coords
            frame = pd.DataFrame({"label": y, "pc1": coords[:, 0], "pc2": coords[:, 1]})
            target = self.path(f"reports/features_{name}_{split}.csv")
            frame.to_csv(target, index=False, float_format="%.17g")
            ctx.artifacts[f"features:{name}:{split}"] = target
            ctx.report = {
                "explained_variance_ratio": projection.explained_variance_ratio.tolist(),
                "silhouette": cluster_silhouette(projection.coords, y),
                "rows": int(len(y)),
            }
        return target

    def history(
        self, limit: int = 25, command: str | None = None, status: str | None = None
    ) -> list[dict[str, Any]]:
        with UnitOfWork(self.ledger_path) as uow:
            runs = uow.runs.list_history(command=command, status=status, limit=limit)
            return [
                {
                    "id": run.id,
                    "command": run.command,
                    "mode": run.mode,
                    "status": run.status,
                    "exit_code": run.exit_code,
                    "config_hash": run.config_hash[:12],
                    "started_at": run.started_at.isoformat() if run.started_at else None,
                    "artifacts": len(uow.artifacts.list_for_run(run.id)),
                }
                for run in runs
            ]

    def status_counts(self) -> dict[str, int]:
        with UnitOfWork(self.ledger_path) as uow:
            return uow.runs.status_counts()


def weak_class_gain(
    baseline: EvaluationResult, candidate: EvaluationResult, n: int = 3
) -> dict[str, Any]:
    """Relative recall change of ``candidate`` on the classes ``baseline`` handles worst."""
    classes = baseline.weakest_classes(n)
    before = float(np.mean(baseline.per_class_recall[classes]))
    after = float(np.mean(candidate.per_class_recall[classes]))
    relative = (after - before) / before if before > 0 else None
    return {
        "classes": classes,
        "baseline_recall": before,
        "candidate_recall": after,
        "relative_gain": relative,
    }
