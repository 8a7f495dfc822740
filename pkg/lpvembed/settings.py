"""Run configuration shared by every CLI command.

A run is described by a ``RunConfig``, read from an optional ``key = value``
file and overridden by command-line flags::

    # example1 with a coarser recipe
    fixture = example1
    order = 2
    region = box
    samples = 1500
    generate.a1 = 2*sin(10*t)^2
"""

from collections.abc import Callable, Mapping
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from lpvembed.dataset import (
    DEFAULT_EPS_SIGMA,
    TrajectoryDataset,
    generate_trajectories,
    load_trajectories,
    parse_generator,
)
from lpvembed.errors import ConfigError
from lpvembed.fixtures import FIXTURE_NAMES, fixture
from lpvembed.geometry import DEFAULT_BOX_EPS, DEFAULT_MVEE_TOL, STRATEGIES
from lpvembed.log import get_logger
from lpvembed.sysdsl import SystemDescription, parse_system

log = get_logger(__name__)

DEFAULT_ENERGY = 0.99


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run needs.

    ``order`` None means "pick from ``energy``". ``ddof`` None means the
    fixture's own deviation, or the population form without a fixture.
    ``generators`` holds raw ``name=kind:args`` strings until the data set is
    built.
    """

    fixture: str | None = None
    system: Path | None = None
    data: Path | None = None
    generators: tuple[str, ...] = ()
    period: float | None = None
    samples: int | None = None
    order: int | None = None
    energy: float = DEFAULT_ENERGY
    region: str = 'auto'
    eps_sigma: float = DEFAULT_EPS_SIGMA
    ddof: int | None = None
    tol_mvee: float = DEFAULT_MVEE_TOL
    box_eps: float = DEFAULT_BOX_EPS
    seed: int = 0
    out: Path | None = None

    def merged(self, overrides: Mapping[str, Any]) -> 'RunConfig':
        """Copy with every non-None (and non-empty) override applied."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f'unknown configuration keys: {", ".join(sorted(unknown))}')
        applied = {key: value for key, value in overrides.items() if value is not None and value != ()}
        if 'generators' in applied:
            applied['generators'] = tuple(applied['generators'])
        return replace(self, **applied)

    def validate(self, *, require_data: bool = True) -> 'RunConfig':
        """Check source exclusivity and value ranges; returns self for chaining.

        Commands that never read trajectories pass ``require_data=False``.
        """
        if (self.fixture is None) == (self.system is None):
            raise ConfigError('give exactly one system source: a fixture or a system description file')
        if self.fixture is not None and self.fixture not in FIXTURE_NAMES:
            raise ConfigError(f'unknown fixture {self.fixture!r}; choose from {", ".join(FIXTURE_NAMES)}')
        if self.data is not None and self.generators:
            raise ConfigError('give exactly one data source: a trajectory file or generators')
        if require_data and self.data is None and not self.generators and self.fixture is None:
            raise ConfigError('no data source: give a trajectory file or generators')
        if self.data is not None and (self.period is not None or self.samples is not None):
            raise ConfigError('period and samples apply to generated data only')
        if self.generators and self.period is None:
            raise ConfigError('generated data needs a sample period')
        if self.order is not None and self.order < 1:
            raise ConfigError(f'order must be at least 1, got {self.order}')
        if not 0 < self.energy <= 1:
            raise ConfigError(f'energy threshold must lie in (0, 1], got {self.energy}')
        if self.region not in STRATEGIES:
            raise ConfigError(f'unknown region strategy {self.region!r}; choose from {", ".join(STRATEGIES)}')
        if self.ddof is not None and self.ddof not in (0, 1):
            raise ConfigError(f'ddof must be 0 or 1, got {self.ddof}')
        if not self.eps_sigma > 0 or not self.tol_mvee > 0 or not self.box_eps > 0:
            raise ConfigError('tolerances must be positive')
        return self

    @property
    def normalizer_ddof(self) -> int:
        if self.ddof is not None:
            return self.ddof
        return fixture(self.fixture).ddof if self.fixture is not None else 0

    def system_description(self) -> SystemDescription:
        if self.fixture is not None:
            return fixture(self.fixture).system
        assert self.system is not None
        return parse_system(_read(self.system, 'system description'))

    def dataset(self) -> TrajectoryDataset:
        """Trajectory data from the file, the generators, or the fixture recipe."""
        if self.data is not None:
            return load_trajectories(self.data)
        if self.generators:
            assert self.period is not None
            return generate_trajectories([parse_generator(text) for text in self.generators], self.period, self.samples)
        assert self.fixture is not None
        recipe = fixture(self.fixture)
        if self.period is None and self.samples is None:
            return recipe.trajectories()
        return generate_trajectories(
            recipe.generators,
            self.period if self.period is not None else recipe.period,
            self.samples if self.samples is not None else recipe.samples,
        )


def _read(path: Path, what: str) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise ConfigError(f'cannot read {what} {path}: {exc.strerror}') from exc


_CONVERTERS: dict[str, Callable[[str], Any]] = {
    'fixture': str,
    'system': Path,
    'data': Path,
    'period': float,
    'samples': int,
    'order': int,
    'energy': float,
    'region': str,
    'eps_sigma': float,
    'ddof': int,
    'tol_mvee': float,
    'box_eps': float,
    'seed': int,
    'out': Path,
}
_PATH_KEYS = {'system', 'data', 'out'}


def parse_config(text: str, *, base_dir: Path | None = None, source: str = '<config>') -> dict[str, Any]:
    """Overrides dict from ``key = value`` text.

    Keys may use ``-`` or ``_``. ``generate.<name> = <generator>`` lines add
    generators in file order. Relative paths resolve against ``base_dir``.
    """
    values: dict[str, Any] = {}
    generators: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key, value = key.strip().replace('-', '_'), value.strip()
        if not sep or not key:
            raise ConfigError(f'{source}:{lineno}: expected key = value')
        if key.startswith('generate.'):
            generators.append(f'{key.removeprefix("generate.")}={value}')
            continue
        if key not in _CONVERTERS:
            raise ConfigError(f'{source}:{lineno}: unknown key {key!r}')
        try:
            converted = _CONVERTERS[key](value)
        except ValueError:
            raise ConfigError(f'{source}:{lineno}: invalid value {value!r} for {key}') from None
        if key in _PATH_KEYS and base_dir is not None and not converted.is_absolute():
            converted = base_dir / converted
        values[key] = converted
    if generators:
        values['generators'] = tuple(generators)
    return values


def load_config_file(path: Path | str) -> RunConfig:
    """RunConfig from a ``key = value`` file (not yet validated)."""
    path = Path(path)
    overrides = parse_config(_read(path, 'config file'), base_dir=path.parent, source=str(path))
    log.debug('config loaded', path=str(path), keys=sorted(overrides))
    return RunConfig().merged(overrides)
