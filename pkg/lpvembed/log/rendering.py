"""CLI renderer: verbosity filtering, numpy-aware YAML context, live buffering."""

from typing import cast

import numpy as np
import yaml
from rich.syntax import Syntax
from structlog.types import FilteringBoundLogger
from structlog.typing import EventDict

from lpvembed.log.state import DEFAULT_PREFIXES, get_console, get_state

# Arrays longer than this are summarised instead of dumped
MAX_ARRAY_ITEMS = 12

_LEVEL_STYLES = {
    'INFO': 'blue',
    'WARNING': 'yellow',
    'ERROR': 'red',
    'DEBUG': 'magenta',
    'CRITICAL': 'white on red',
    'EXCEPTION': 'red',
}


def to_plain(value: object) -> object:
    """Convert numpy values nested in log context to YAML-safe builtins.

    Floats are rounded to 6 significant digits for display. Arrays with more
    than ``MAX_ARRAY_ITEMS`` entries collapse to a shape/range summary.

    Example:
        >>> to_plain({'sigma': np.array([39.55331, 2.35262])})
        {'sigma': [39.5533, 2.35262]}
    """
    if isinstance(value, dict):
        return {str(key): to_plain(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        if value.size > MAX_ARRAY_ITEMS:
            finite = value[np.isfinite(value)] if value.dtype.kind == 'f' else value
            summary: dict[str, object] = {'shape': list(value.shape)}
            if finite.size:
                summary['min'] = to_plain(finite.min())
                summary['max'] = to_plain(finite.max())
            return summary
        return to_plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(f'{float(value):.6g}')
    return value


def _should_filter_key(key: str, verbosity_level: int) -> bool:
    if verbosity_level == 0:
        return key.startswith(('_verbose_', '_debug_'))
    return key.startswith('_debug_')


def filter_context_by_prefix(event_dict: EventDict) -> EventDict:
    """Drop ``_verbose_``/``_debug_`` keys the current verbosity hides."""
    level = get_state().verbosity_level
    if level >= 2:
        return event_dict
    return {key: value for key, value in event_dict.items() if not _should_filter_key(key, level)}


def _strip_prefix_from_key(raw_key: str) -> str:
    for prefix in DEFAULT_PREFIXES:
        if raw_key.startswith(prefix):
            return raw_key.removeprefix(prefix) or raw_key
    return raw_key


def strip_prefixes_from_keys(event_dict: EventDict) -> EventDict:
    """Remove display prefixes from (nested) context keys."""

    def _strip(value: object) -> object:
        if isinstance(value, dict):
            return {_strip_prefix_from_key(str(key)): _strip(val) for key, val in value.items()}
        if isinstance(value, list):
            return [_strip(item) for item in value]
        return value

    return cast('EventDict', _strip(event_dict))


def format_context_yaml(event_dict: EventDict, indent: int = 2) -> str:
    """Format the context as indented YAML, or '' when empty."""
    if not event_dict:
        return ''
    context_yaml = yaml.safe_dump(
        to_plain(dict(event_dict)),
        sort_keys=True,
        default_flow_style=None,
        width=float('inf'),
    )
    pad = ' ' * indent
    return '\n'.join(f'{pad}{line}' for line in context_yaml.splitlines())


def format_log_message(level: str, event_msg: str) -> str:
    """Style a message by level; warnings and errors carry a level prefix."""
    style = _LEVEL_STYLES.get(level, 'bold cyan')
    if level == 'DEBUG':
        return f'[{style}]DEBUG[/{style}] [{style}]{event_msg}[/{style}]'
    if level in ('WARNING', 'ERROR', 'CRITICAL', 'EXCEPTION'):
        return f'[bold {style}]{level}:[/bold {style}] [{style}]{event_msg}[/{style}]'
    return f'[{style}]{event_msg}[/{style}]'


def apply_matchers(level: str, event_msg: str, event_dict: EventDict) -> str | None:
    """Return the first matcher's formatting, or None."""
    for matcher in get_state().matchers:
        if matcher.matches(level, event_msg, event_dict):
            formatted = matcher.format(level, event_msg, event_dict)
            if formatted is not None:
                return formatted
    return None


def handle_live_buffering(log_msg: str, context_yaml: str, *, is_live_message: bool) -> bool:
    """Buffer ``_live_`` messages into the active live status at level 0.

    Returns:
        True if the message was buffered and must not be printed
    """
    state = get_state()
    if not (is_live_message and state.live_context is not None and state.verbosity_level == 0):
        return False

    state.append_live_message(log_msg, context_yaml)
    lines: list[str] = []
    for msg, ctx in state.live_messages:
        lines.append(msg)
        if ctx:
            lines.extend(f'  {line}' for line in ctx.split('\n'))
    state.live_context.update('\n'.join(lines))
    return True


def render_output(log_msg: str, context_yaml: str) -> None:
    """Print the message and its YAML context to stderr."""
    console = get_console()
    console.print(log_msg, soft_wrap=True)
    if context_yaml:
        syntax = Syntax(
            context_yaml,
            'yaml',
            theme='github-dark',
            background_color='default',
            line_numbers=False,
        )
        console.print(syntax, soft_wrap=True)


def cli_renderer(
    _logger: FilteringBoundLogger,
    method_name: str,
    event_dict: EventDict,
) -> str:
    """Final structlog processor: filter, format and print one event.

    Returns:
        An empty string; output is printed directly.
    """
    state = get_state()
    level = method_name.upper()
    event_msg = event_dict.pop('event', '')

    display_raw = event_dict.pop('_display_level', None)
    if display_raw is not None:
        try:
            required = max(0, min(2, int(display_raw)))
        except (TypeError, ValueError):
            required = 0
        if state.verbosity_level < required:
            return ''

    is_live_message = bool(event_dict.pop('_live_', False))
    for key in ('timestamp', 'level', 'log_level', 'event'):
        event_dict.pop(key, None)
    if state.current_stage is not None and level in ('WARNING', 'ERROR'):
        event_dict.setdefault('_verbose_stage', state.current_stage)

    log_msg = apply_matchers(level, event_msg, event_dict)
    event_dict = strip_prefixes_from_keys(filter_context_by_prefix(event_dict))
    if log_msg is None:
        log_msg = format_log_message(level, event_msg)

    context_yaml = format_context_yaml(event_dict)
    if handle_live_buffering(log_msg, context_yaml, is_live_message=is_live_message):
        return ''

    render_output(log_msg, context_yaml)
    return ''
