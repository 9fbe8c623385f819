from __future__ import annotations

from datetime import datetime

from sqlalchemy import func, select
from sqlalchemy.orm import Session

from ..core.models import ExperimentRun, RunStatus


class ExperimentRunRepository:
    def __init__(self, session: Session) -> None:
        self.session = session

    def get(self, run_id: int) -> ExperimentRun | None:
        return self.session.get(ExperimentRun, run_id)

    def add(self, run: ExperimentRun) -> None:
        self.session.add(run)

    def create_run(
        self,
        *,
        command: str,
        config_hash: str,
        seed: int,
        mode: str | None = None,
    ) -> ExperimentRun:
        run = ExperimentRun(
            command=command,
            config_hash=config_hash,
            seed=str(seed),
            mode=mode,
            status=RunStatus.RUNNING.value,
            started_at=datetime.utcnow(),
        )
        self.session.add(run)
        self.session.flush()
        return run

    def list_history(
        self,
        *,
        command: str | None = None,
        status: str | None = None,
        limit: int = 25,
    ) -> list[ExperimentRun]:
        filters = []
        if command:
            filters.append(ExperimentRun.command == command)
        if status:
            filters.append(ExperimentRun.status == status)
        stmt = select(ExperimentRun)
        if filters:
            stmt = stmt.where(*filters)
        stmt = stmt.order_by(ExperimentRun.id.desc()).limit(limit)
        return list(self.session.execute(stmt).scalars().all())

    def status_counts(self) -> dict[str, int]:
        counts = self.session.execute(
            select(ExperimentRun.status, func.count()).group_by(ExperimentRun.status)
        ).all()
        return {status: total for status, total in counts}
