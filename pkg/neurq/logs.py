"""Structured logging setup.

structlog is routed through stdlib logging so the host application (or the
CLI's ``--verbose`` flag) controls the level. The chain is configured once
on import; ``configure_logging`` only adjusts level and renderer.
"""

import logging
import sys

import structlog


def _processors(json: bool) -> list:
    return [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.format_exc_info,
        structlog.processors.JSONRenderer() if json or not sys.stderr.isatty()
        else structlog.dev.ConsoleRenderer(),
    ]


structlog.configure(
    processors=_processors(json=False),
    wrapper_class=structlog.stdlib.BoundLogger,
    logger_factory=structlog.stdlib.LoggerFactory(),
)


def configure_logging(level: str = "WARNING", json: bool = False) -> None:
    """Set the log level and renderer.

    Args:
        level: Stdlib level name (DEBUG, INFO, WARNING, ...)
        json: Force JSON lines even on a TTY
    """
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level.upper(), force=True)
    structlog.configure(processors=_processors(json))
