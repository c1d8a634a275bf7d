"""neurq - embeddable AI x DB query engine."""

from neurq import logs as _logs  # noqa: F401  configures structlog

__version__ = "0.1.0"
