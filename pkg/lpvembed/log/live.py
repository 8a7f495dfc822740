"""Transient status display for long-running pipeline stages."""

from collections.abc import Generator
from contextlib import contextmanager

import numpy as np
from rich.live import Live

from lpvembed.errors import LpvEmbedError, NumericalError
from lpvembed.log.state import get_console, get_state


@contextmanager
def pipeline_stage(command: str, stage: str) -> Generator[None, None, None]:
    """Run one pipeline stage under a status line and tag its failures.

    At verbosity 0 a transient rich ``Live`` area shows
    ``command: stage...`` plus any ``_live_`` progress messages logged while
    the stage runs; the area disappears when the stage ends. At higher
    verbosity the status line is printed once and progress stays visible.

    Exceptions leaving the stage get ``stage`` set so the CLI can name the
    failing stage. ``numpy.linalg.LinAlgError`` is converted into a
    ``NumericalError``.

    Args:
        command: Subcommand name shown in the status line
        stage: Pipeline stage name (``decompose``, ``region``, ...)

    Example:
        >>> with pipeline_stage('embed', 'decompose'):
        ...     dec = decompose(normalized)
    """
    state = get_state()
    previous = state.current_stage
    state.current_stage = stage
    status = f'[bold blue]{command}: {stage}...[/bold blue]'
    try:
        if state.verbosity_level == 0:
            state.clear_live_messages()
            with Live(status, console=get_console(), refresh_per_second=10, transient=True) as live:
                state.live_context = live
                try:
                    yield
                finally:
                    state.live_context = None
                    state.clear_live_messages()
        else:
            get_console().print(status)
            yield
    except LpvEmbedError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f'linear algebra failure: {exc}', stage=stage) from exc
    finally:
        state.current_stage = previous
