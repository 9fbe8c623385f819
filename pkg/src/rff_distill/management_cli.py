import json
import logging
from pathlib import Path
from typing import Any, Callable, Optional

import typer

from .api_schemas import RunReport, load_experiment_config
from .core.config import get_settings
from .core.errors import ConfigError, exit_code_for
from .core.logging_config import configure_logging
from .features.ingest import IngestLayout
from .services.experiments import ExperimentRunner

configure_logging(get_settings())

logger = logging.getLogger(__name__)

app = typer.Typer(help="RF fingerprint identification with temperature-controlled distillation")


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", help="Experiment config JSON"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed (unsigned 64-bit)"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory for every artifact"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Override RFF_LOG_LEVEL"),
):
    if log_level:
        configure_logging(get_settings(), level_override=log_level)
    ctx.obj = {"config": config, "seed": seed, "out": out}


def _runner(ctx: typer.Context) -> ExperimentRunner:
    options = ctx.obj or {}
    overrides = {"seed": options.get("seed")}
    if options.get("out") is not None:
        overrides["out_dir"] = str(options["out"])
    config = load_experiment_config(options.get("config"), overrides)
    return ExperimentRunner(config)


def _execute(ctx: typer.Context, action: Callable[[ExperimentRunner], Any]) -> Any:
    try:
        return action(_runner(ctx))
    except Exception as exc:
        code = exit_code_for(exc)
        logger.error("Command failed with exit code %s: %s", code, exc, exc_info=True)
        detail = f" [{exc.field_path}]" if isinstance(exc, ConfigError) and exc.field_path else ""
        typer.echo(f"error{detail}: {exc}", err=True)
        raise typer.Exit(code=code) from exc


def _echo_report(report: RunReport) -> None:
    for model in report.models:
        latency = "-"
        if model.latency_ms_median is not None:
            latency = f"{model.latency_ms_median:.3f} ms"
        typer.echo(
            f"{model.mode:<14} acc={model.accuracy:.4f} params={model.param_count} "
            f"latency={latency}"
        )
    if report.ranking:
        typer.echo("ranking: " + " > ".join(report.ranking))
    for key, value in report.artifacts.items():
        typer.echo(f"{key}: {value}")


@app.command()
def synth(ctx: typer.Context):
    """Draw a device fleet and write the frame archive."""
    _echo_report(_execute(ctx, lambda runner: runner.synth()))


@app.command()
def ingest(
    ctx: typer.Context,
    path: Optional[Path] = typer.Argument(None, help="Raw capture file"),
    encoding: str = typer.Option("cf32", help="cf32 or ci16 interleaved I/Q"),
    frame_length: int = typer.Option(512, help="Samples per frame"),
    label: Optional[int] = typer.Option(None, help="Label for every frame"),
    manifest: Optional[Path] = typer.Option(None, help="JSON mapping frame index to label"),
):
    """Slice a raw I/Q capture into labeled frames."""
    def action(runner: ExperimentRunner) -> RunReport:
        layout = None
        if path is not None:
            layout = IngestLayout(
                encoding=encoding,
                frame_length=frame_length,
                label=label,
                manifest=str(manifest) if manifest else None,
            )
        return runner.ingest(path, layout)

    _echo_report(_execute(ctx, action))


@app.command()
def featurize(ctx: typer.Context):
    """Split the archive and compute spectrograms."""
    _echo_report(_execute(ctx, lambda runner: runner.featurize()))


@app.command("train-teacher")
def train_teacher(ctx: typer.Context):
    """Train the BiLSTM/attention teacher."""
    _echo_report(_execute(ctx, lambda runner: runner.train_teacher()))


@app.command()
def distill(
    ctx: typer.Context,
    mode: str = typer.Option("dynamic", help="nkd, fixed or dynamic"),
    tau: Optional[float] = typer.Option(None, help="Temperature for --mode fixed"),
):
    """Train one student."""
    _echo_report(_execute(ctx, lambda runner: runner.distill(mode, tau)))  # type: ignore[arg-type]


@app.command()
def compare(ctx: typer.Context):
    """Run NKD, every fixed temperature and dynamic distillation, then rank them."""
    report = _execute(ctx, lambda runner: runner.compare())
    _echo_report(report)
    if report.weak_class_gain:
        typer.echo("weak classes: " + json.dumps(report.weak_class_gain, sort_keys=True))


@app.command("eval")
def eval_checkpoint(
    ctx: typer.Context,
    checkpoint: str = typer.Argument(..., help="Checkpoint path (absolute or inside --out)"),
    split: str = typer.Option("test", help="train, val or test"),
):
    """Accuracy and confusion matrix of a checkpoint."""
    _echo_report(_execute(ctx, lambda runner: runner.evaluate(checkpoint, split)))


@app.command("export-features")
def export_features(
    ctx: typer.Context,
    checkpoint: str = typer.Argument(..., help="Checkpoint path (absolute or inside --out)"),
    split: str = typer.Option("test", help="train, val or test"),
):
    """Write a (label, pc1, pc2) CSV of penultimate features."""
    target = _execute(ctx, lambda runner: runner.export_features(checkpoint, split))
    typer.echo(f"features: {target}")


@app.command()
def runs(
    ctx: typer.Context,
    limit: int = typer.Option(25, help="Number of ledger entries"),
    command: Optional[str] = typer.Option(None, help="Only this command"),
    status: Optional[str] = typer.Option(None, help="running, completed or failed"),
):
    """List recorded runs from the ledger."""
    def action(runner: ExperimentRunner) -> tuple[list[dict], dict[str, int]]:
        return runner.history(limit=limit, command=command, status=status), runner.status_counts()

    rows, counts = _execute(ctx, action)
    for row in rows:
        typer.echo(
            f"{row['id']:>4} {row['command']:<16} {row['mode'] or '-':<14} {row['status']:<10} "
            f"exit={row['exit_code']} artifacts={row['artifacts']} "
            f"config={row['config_hash']} {row['started_at']}"
        )
    typer.echo("totals: " + " ".join(f"{name}={total}" for name, total in sorted(counts.items())))


if __name__ == "__main__":
    app()
