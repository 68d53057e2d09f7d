"""
FTS Engine - Structured Logger
==============================
Sistema de logging estruturado usando structlog.
Logs são salvos em arquivo e exibidos no console.
"""

import logging
from pathlib import Path

import structlog
from rich.console import Console
from rich.logging import RichHandler

from core.config import settings


LOGGER_NAME = "fts_engine"


def setup_logger(
    level: str | None = None,
    log_dir: Path | str | None = None,
    log_to_file: bool | None = None
) -> structlog.BoundLogger:
    """
    Configura e retorna o logger estruturado do sistema.

    structlog renderiza o evento e entrega a linha ao logger stdlib
    `fts_engine`, que a repassa ao console (rich) e ao arquivo de log.
    Pode ser chamado de novo: os handlers anteriores são fechados.

    Args:
        level: Nível mínimo (default: settings.log_level)
        log_dir: Diretório do arquivo de log (default: settings.log_dir)
        log_to_file: Liga o arquivo de log (default: settings.log_to_file)

    Returns:
        Logger configurado com output para console e (opcionalmente) arquivo
    """
    level_no = getattr(logging, level or settings.log_level)
    handlers: list[logging.Handler] = [
        RichHandler(
            console=Console(stderr=True),
            show_time=True,
            show_path=False,
            rich_tracebacks=True
        )
    ]

    if settings.log_to_file if log_to_file is None else log_to_file:
        directory = Path(log_dir if log_dir is not None else settings.log_dir)
        directory.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(directory / "fts_engine.log", encoding="utf-8"))

    std_logger = logging.getLogger(LOGGER_NAME)
    for old in list(std_logger.handlers):
        std_logger.removeHandler(old)
        old.close()
    for handler in handlers:
        handler.setFormatter(logging.Formatter("%(message)s"))
        std_logger.addHandler(handler)
    std_logger.setLevel(level_no)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False)
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level_no),
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        # o filtro de nível muda quando setup_logger é chamado de novo
        cache_logger_on_first_use=False
    )

    return structlog.get_logger(LOGGER_NAME)


# Logger singleton
logger = setup_logger()


def log_component_action(
    component: str,
    action: str,
    data: dict | None = None,
    level: str = "info"
) -> None:
    """
    Log especializado para ações dos componentes.

    Args:
        component: Nome do componente (ex: @Trainer)
        action: Ação sendo executada
        data: Dados adicionais (opcional)
        level: Nível do log (debug, info, warning, error)
    """
    log_func = getattr(logger, level, logger.info)
    log_func(
        f"{component} - {action}",
        component=component,
        action=action,
        **(data or {})
    )


def bind_run_context(**values) -> None:
    """Anexa campos (ex: command, seed) a todos os logs seguintes da execução."""
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(**values)
