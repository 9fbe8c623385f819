from contextlib import contextmanager
from functools import lru_cache
from typing import Iterator

from sqlalchemy import Engine, create_engine
from sqlalchemy.orm import DeclarativeBase, Session, sessionmaker


class Base(DeclarativeBase):
    """Base declarative model."""


def _build_connection_string(path: str) -> str:
    if path.startswith("sqlite://"):
        return path
    if path == ":memory:":
        return "sqlite://"
    return f"sqlite:///{path}"


@lru_cache(maxsize=None)
def get_engine(path: str) -> Engine:
    """One engine per ledger file; tables are created on first use."""
    url = _build_connection_string(path)
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, echo=False, future=True, connect_args=connect_args)
    Base.metadata.create_all(bind=engine)
    return engine


@lru_cache(maxsize=None)
def _session_factory(path: str) -> sessionmaker:
    return sessionmaker(
        bind=get_engine(path), autoflush=False, autocommit=False, expire_on_commit=False
    )


@contextmanager
def db_session(path: str) -> Iterator[Session]:
    session = _session_factory(path)()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
