"""Log matchers for pipeline-specific message formatting."""

from dataclasses import dataclass

from structlog.typing import EventDict


@dataclass
class LogMatcher:
    """Base class for matchers that take over formatting of some events."""

    def matches(self, level: str, event: str, event_dict: EventDict) -> bool:
        """Return True if this matcher should format the event."""
        raise NotImplementedError

    def format(
        self,
        level: str,
        event: str,
        event_dict: EventDict,
    ) -> str | None:
        """Format the event, popping consumed keys from ``event_dict``.

        Returns:
            Formatted message, or None to fall back to the default style
        """
        raise NotImplementedError


@dataclass
class StageMatch(LogMatcher):
    """Render pipeline stage events as ``command[stage] => detail``.

    Matches ``log.info('stage', stage='decompose', detail='5 singular values')``
    and prints ``embed[decompose] => 5 singular values``.

    Args:
        command: Prefix shown before the bracket, usually the subcommand
        event: Event name to match
        stage_key: Context key holding the stage name
        detail_key: Context key holding the free-text detail
    """

    command: str = 'lpvembed'
    event: str = 'stage'
    stage_key: str = 'stage'
    detail_key: str = 'detail'

    def matches(self, level: str, event: str, event_dict: EventDict) -> bool:
        """Match INFO/DEBUG events carrying a stage name."""
        return level in ('INFO', 'DEBUG') and event == self.event and self.stage_key in event_dict

    def format(
        self,
        level: str,
        event: str,
        event_dict: EventDict,
    ) -> str | None:
        """Format as ``command[stage] => detail``."""
        del level, event
        stage = event_dict.pop(self.stage_key)
        detail = event_dict.pop(self.detail_key, '')
        head = f'[bold #888888]{self.command}\\[{stage}][/bold #888888]'
        if detail:
            return f'{head} [bold #888888]=>[/bold #888888] [blue]{detail}[/blue]'
        return head
