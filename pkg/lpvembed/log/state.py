"""Runtime state for lpvembed diagnostics."""

import os
import sys
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from rich.console import Console
from rich.live import Live

from lpvembed.log.verbosity import is_env_var_true

if TYPE_CHECKING:
    from lpvembed.log.matchers import LogMatcher


# Context key prefixes understood by the renderer
DEFAULT_PREFIXES = ['_verbose_', '_debug_']


@dataclass
class LogState:
    """Verbosity, matchers and live-status state shared by the renderer.

    One instance lives for the whole process; `configure_logging` resets it.
    """

    verbosity_level: int = 0
    """Verbosity level (0=default, 1=verbose, 2=debug)"""

    matchers: list['LogMatcher'] = field(default_factory=list)
    """Matchers tried in order before the default message style"""

    live_context: Live | None = None
    """Active live status while a long pipeline stage runs at level 0"""

    live_messages: list[tuple[str, str]] = field(default_factory=list)
    """Buffered (message, context_yaml) pairs shown inside the live status"""

    current_stage: str | None = None
    """Name of the pipeline stage currently running, if any"""

    def clear_live_messages(self) -> None:
        """Drop buffered live messages."""
        self.live_messages.clear()

    def append_live_message(self, message: str, context_yaml: str) -> None:
        """Buffer a message for the live status area.

        Args:
            message: Formatted log message
            context_yaml: Formatted context YAML
        """
        self.live_messages.append((message, context_yaml))
        # progress messages repeat; only the latest few matter
        del self.live_messages[:-4]


_state = LogState()


def get_state() -> LogState:
    """Return the process-wide logging state."""
    return _state


def get_console() -> Console:
    """Return a Console writing to the current ``sys.stderr``.

    Diagnostics never go to stdout: commands print their tables there.
    The console is rebuilt on each call so pytest's capture (which swaps
    ``sys.stderr``) is honoured. Terminal mode is forced outside tests so CI
    logs keep their colours; ``LPVEMBED_FORCE_TERMINAL`` overrides the guess.
    """
    if 'LPVEMBED_FORCE_TERMINAL' in os.environ:
        force_terminal = is_env_var_true('LPVEMBED_FORCE_TERMINAL')
    else:
        force_terminal = not ('pytest' in sys.modules or any(key.startswith('PYTEST_') for key in os.environ))

    return Console(
        file=sys.stderr,
        force_jupyter=False,
        force_terminal=force_terminal,
        width=200 if not force_terminal else None,
    )
