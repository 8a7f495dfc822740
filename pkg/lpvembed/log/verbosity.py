"""Verbosity resolution from CLI flags and CI environments."""

import os

import typer

# Shared Typer option for every subcommand
verbosity_option = typer.Option(
    0,
    '-v',
    '--verbose',
    count=True,
    help='Increase verbosity (-v for verbose, -vv for debug)',
)

_CI_VARS = (
    'CI',
    'GITHUB_ACTIONS',
    'GITLAB_CI',
    'CIRCLECI',
    'TRAVIS',
    'JENKINS_HOME',
    'BUILDKITE',
)


def is_env_var_true(name: str) -> bool:
    """Return True if the environment variable ``name`` holds a truthy string.

    Accepted (case-insensitive): '1', 'true', 'yes', 'on', 'y', 't'. Missing
    or empty values are false.
    """
    if not name:
        return False
    val = os.environ.get(name)
    if not val:
        return False
    return val.strip().lower() in ('1', 'true', 'yes', 'on', 'y', 't')


def get_verbosity_from_env() -> int:
    """Detect verbosity from the environment.

    Checked in order:
    1. LPVEMBED_VERBOSITY: explicit override, clamped to 0..2
    2. RUNNER_DEBUG / ACTIONS_RUNNER_DEBUG: level 2
    3. Common CI variables: level 1
    4. Otherwise level 0

    Returns:
        Detected verbosity level (0, 1, or 2)
    """
    if explicit := os.environ.get('LPVEMBED_VERBOSITY'):
        try:
            return max(0, min(2, int(explicit)))
        except ValueError:
            pass

    if is_env_var_true('RUNNER_DEBUG') or is_env_var_true('ACTIONS_RUNNER_DEBUG'):
        return 2

    def _ci_var_is_true(var: str) -> bool:
        # JENKINS_HOME holds a path, any value counts
        if var == 'JENKINS_HOME':
            return bool(os.environ.get(var))
        return is_env_var_true(var)

    if any(_ci_var_is_true(var) for var in _CI_VARS):
        return 1
    return 0


def resolve_verbosity(verbose: int | None = None) -> int:
    """Combine the ``-v`` count with the environment.

    A non-zero flag count wins outright (capped at 2). With no flags the
    environment decides, so CI runs get level 1 without extra arguments.

    Example:
        >>> resolve_verbosity(verbose=2)
        2
    """
    if verbose:
        return min(verbose, 2)
    return get_verbosity_from_env()
