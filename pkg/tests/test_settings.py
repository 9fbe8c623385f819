import logging
from pathlib import Path

from rff_distill.core.config import Settings, get_settings
from rff_distill.core.logging_config import configure_logging, resolve_level


def test_settings_read_prefixed_environment(monkeypatch):
    monkeypatch.setenv("RFF_LATENCY_RUNS", "7")
    monkeypatch.setenv("RFF_LEDGER_FILENAME", "runs.sqlite")
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.latency_runs == 7
    assert settings.ledger_path(Path("out")) == str(Path("out") / "runs.sqlite")


def test_in_memory_ledger_is_not_joined_to_out_dir():
    assert Settings(ledger_filename=":memory:").ledger_path(Path("out")) == ":memory:"


def test_resolve_level_falls_back_to_info():
    assert resolve_level("debug") == logging.DEBUG
    assert resolve_level("verbose") == logging.INFO
    assert resolve_level(None) == logging.INFO


def test_level_override_wins_and_ledger_sql_stays_quiet():
    root = logging.getLogger()
    previous = root.level
    handler_levels = [(handler, handler.level) for handler in root.handlers]
    try:
        level = configure_logging(Settings(log_level="ERROR"), level_override="debug")
        assert level == logging.DEBUG
        assert root.level == logging.DEBUG
        configure_logging(Settings(log_level="INFO"))
        assert root.level == logging.INFO
        assert logging.getLogger("sqlalchemy.engine").level == logging.WARNING
    finally:
        root.setLevel(previous)
        for handler, level in handler_levels:
            handler.setLevel(level)
