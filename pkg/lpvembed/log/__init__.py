"""Diagnostics for lpvembed, built on structlog and rich.

Three verbosity levels:
- Level 0 (default): essential results, transient status for long stages
- Level 1 (-v): ``_verbose_`` context, stage headers stay visible
- Level 2 (-vv): ``_debug_`` context and debug messages

Everything is rendered to stderr; stdout carries command tables only.

Usage:
    from lpvembed.log import configure_logging, get_logger, resolve_verbosity

    configure_logging(verbosity=resolve_verbosity(verbose))
    log = get_logger(__name__)
    log.info('region fitted', method='box2d', _verbose_volume=23.2186)
"""

import logging
from collections.abc import Callable

import structlog
from structlog.types import FilteringBoundLogger

from lpvembed.log.live import pipeline_stage
from lpvembed.log.matchers import LogMatcher, StageMatch
from lpvembed.log.rendering import cli_renderer
from lpvembed.log.state import get_state
from lpvembed.log.verbosity import get_verbosity_from_env, resolve_verbosity, verbosity_option


def configure_logging(
    verbosity: int = 0,
    renderer: Callable | None = None,
    matchers: list[LogMatcher] | None = None,
) -> None:
    """Install the structlog pipeline for lpvembed.

    Args:
        verbosity: 0=default, 1=verbose, 2=debug
        renderer: Replacement for the final rendering processor
        matchers: Matchers tried before default formatting, e.g.
            ``[StageMatch(command='embed')]``
    """
    state = get_state()
    state.verbosity_level = verbosity
    state.matchers = matchers or []

    structlog.reset_defaults()
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.processors.TimeStamper(fmt='ISO', utc=False),
            structlog.stdlib.add_log_level,
            renderer or cli_renderer,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        context_class=dict,
        cache_logger_on_first_use=True,
    )

    root_logger = logging.getLogger()
    root_logger.handlers = []
    root_logger.setLevel(logging.DEBUG if verbosity >= 2 else logging.INFO)


def get_logger(name: str) -> FilteringBoundLogger:
    """Return a structlog logger bound to ``name`` (usually ``__name__``)."""
    return structlog.get_logger(name)


__all__ = [
    'LogMatcher',
    'StageMatch',
    'configure_logging',
    'get_logger',
    'get_verbosity_from_env',
    'pipeline_stage',
    'resolve_verbosity',
    'verbosity_option',
]
