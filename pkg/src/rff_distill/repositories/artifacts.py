from __future__ import annotations

from sqlalchemy import select
from sqlalchemy.orm import Session

from ..core.models import RunArtifact


class RunArtifactRepository:
    def __init__(self, session: Session) -> None:
        self.session = session

    def record(
        self, *, run_id: int, kind: str, path: str, sha256: str, size_bytes: int
    ) -> RunArtifact:
        artifact = RunArtifact(
            run_id=run_id, kind=kind, path=path, sha256=sha256, size_bytes=size_bytes
        )
        self.session.add(artifact)
        self.session.flush()
        return artifact

    def list_for_run(self, run_id: int) -> list[RunArtifact]:
        stmt = select(RunArtifact).where(RunArtifact.run_id == run_id).order_by(RunArtifact.id)
        return list(self.session.execute(stmt).scalars().all())
