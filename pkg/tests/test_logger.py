"""
FTS Engine - Logger Tests
=========================
Saída do logger estruturado para o arquivo de log.
"""

import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import pytest

from utils.logger import LOGGER_NAME, bind_run_context, log_component_action, setup_logger


@pytest.fixture
def log_file(tmp_path):
    setup_logger(level="INFO", log_dir=tmp_path, log_to_file=True)
    yield tmp_path / "fts_engine.log"
    setup_logger()


def read_log(path: Path) -> str:
    for handler in logging.getLogger(LOGGER_NAME).handlers:
        handler.flush()
    return path.read_text(encoding="utf-8")


class TestFileLogging:
    def test_component_action_reaches_file(self, log_file):
        log_component_action("@Trainer", "Epoch finished", {"epoch": 3, "mean_loss": 0.5})
        text = read_log(log_file)
        assert "@Trainer - Epoch finished" in text
        assert "epoch=3" in text
        assert "mean_loss=0.5" in text

    def test_warning_level_rendered(self, log_file):
        log_component_action("@Loader", "Record rejected", {"line": 7}, level="warning")
        text = read_log(log_file)
        assert "warning" in text
        assert "line=7" in text

    def test_run_context_is_attached(self, log_file):
        bind_run_context(command="train", seed=11)
        try:
            log_component_action("@Trainer", "Training started")
        finally:
            bind_run_context()
        text = read_log(log_file)
        assert "command=train" in text
        assert "seed=11" in text

    def test_reconfigure_replaces_handlers(self, tmp_path):
        setup_logger(level="INFO", log_dir=tmp_path / "a", log_to_file=True)
        setup_logger(level="INFO", log_dir=tmp_path / "b", log_to_file=True)
        try:
            file_handlers = [
                h for h in logging.getLogger(LOGGER_NAME).handlers if isinstance(h, logging.FileHandler)
            ]
            assert len(file_handlers) == 1
            assert Path(file_handlers[0].baseFilename).parent == tmp_path / "b"
        finally:
            setup_logger()
