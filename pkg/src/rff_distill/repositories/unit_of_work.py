from __future__ import annotations

from ..core.database import db_session
from .artifacts import RunArtifactRepository
from .runs import ExperimentRunRepository


class UnitOfWork:
    def __init__(self, ledger_path: str) -> None:
        self.ledger_path = ledger_path
        self._context = None
        self.session = None
        self.runs: ExperimentRunRepository | None = None
        self.artifacts: RunArtifactRepository | None = None

    def __enter__(self) -> "UnitOfWork":
        self._context = db_session(self.ledger_path)
        self.session = self._context.__enter__()
        self.runs = ExperimentRunRepository(self.session)
        self.artifacts = RunArtifactRepository(self.session)
        return self

    def __exit__(self, exc_type, exc, traceback) -> None:
        if self._context is not None:
            self._context.__exit__(exc_type, exc, traceback)
