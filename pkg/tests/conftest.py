"""Pytest configuration and shared fixtures for lpvembed tests.

Provides a runner that calls the real CLI entry point with captured output,
plus pipelines for the built-in fixtures shared across test modules.
"""

import re
import sys
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from pathlib import Path

import pytest
from pydantic import BaseModel

from lpvembed.cli import main as main_cli
from lpvembed.dataset import CoefficientSeries, Normalizer, TrajectoryDataset, build_series, fit_normalizer, normalize
from lpvembed.fixtures import fixture
from lpvembed.geometry import RegionStrategy, region_from_points
from lpvembed.model import AffineLpvModel, Provenance, assemble, source_digest
from lpvembed.reduction import Decomposition, accuracy, decompose, reduced_coordinates, truncate
from lpvembed.sysdsl import SystemDescription


def strip_ansi(text: str) -> str:
    """Remove ANSI color codes from text."""
    return re.sub(r'\x1b\[[0-9;]*m', '', text)


class Result(BaseModel):
    """Result of one CLI invocation."""

    returncode: int
    stdout: str
    stderr: str

    @property
    def output(self) -> str:
        return (self.stdout or '') + (self.stderr or '')

    @property
    def clean_stderr(self) -> str:
        return strip_ansi(self.stderr)

    def table(self) -> list[dict[str, str]]:
        """Parse a CSV table printed on stdout."""
        lines = [line for line in self.stdout.splitlines() if line.strip()]
        header = lines[0].split(',')
        return [dict(zip(header, line.split(','))) for line in lines[1:]]

    def report(self) -> dict[str, str]:
        """Parse a ``key: value`` report printed on stdout."""
        out = {}
        for line in self.stdout.splitlines():
            key, sep, value = line.partition(': ')
            if sep and ' = ' not in line:
                out[key] = value
        return out


# Env vars that could interfere with verbosity and rendering
_ENV_VARS = [
    'LPVEMBED_VERBOSITY',
    'LPVEMBED_FORCE_TERMINAL',
    'CI',
    'GITHUB_ACTIONS',
    'GITLAB_CI',
    'CIRCLECI',
    'TRAVIS',
    'JENKINS_HOME',
    'BUILDKITE',
    'RUNNER_DEBUG',
    'ACTIONS_RUNNER_DEBUG',
]


@pytest.fixture
def clean_env(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    for var in _ENV_VARS:
        monkeypatch.delenv(var, raising=False)
    yield


CliRunner = Callable[[list[str]], Result]


@pytest.fixture
def run_cli(
    capsys: pytest.CaptureFixture,
    monkeypatch: pytest.MonkeyPatch,
    tmp_path: Path,
    clean_env: None,
) -> CliRunner:
    """Run ``lpvembed`` with captured output inside ``tmp_path``.

    Usage:
        result = run_cli(['embed', '--fixture', 'example2', '--order', '2'])
        assert result.returncode == 0
    """
    del clean_env

    def _run(args: list[str]) -> Result:
        monkeypatch.chdir(tmp_path)
        monkeypatch.setattr(sys, 'argv', ['lpvembed', *args])
        capsys.readouterr()
        try:
            exit_code = main_cli()
        except SystemExit as exc:
            exit_code = exc.code if isinstance(exc.code, int) else (0 if exc.code is None else 1)
        else:
            exit_code = 0 if exit_code is None else exit_code
        captured = capsys.readouterr()
        return Result(returncode=exit_code, stdout=captured.out, stderr=captured.err)

    return _run


@dataclass(frozen=True, eq=False)
class Pipeline:
    """A built-in fixture carried through normalization and decomposition."""

    system: SystemDescription
    data: TrajectoryDataset
    series: CoefficientSeries
    normalizer: Normalizer
    decomposition: Decomposition


def build_pipeline(name: str, *, ddof: int = 0) -> Pipeline:
    recipe = fixture(name)
    data = recipe.trajectories()
    series = build_series(recipe.system, data)
    nrm = fit_normalizer(series, ddof=ddof)
    return Pipeline(
        system=recipe.system,
        data=data,
        series=series,
        normalizer=nrm,
        decomposition=decompose(normalize(nrm, series)),
    )


@pytest.fixture(scope='session')
def example1() -> Pipeline:
    return build_pipeline('example1')


@pytest.fixture(scope='session')
def example2() -> Pipeline:
    # the published numbers use the sample (N-1) deviation
    return build_pipeline('example2', ddof=1)


@pytest.fixture
def write_file(tmp_path: Path) -> Callable[[str, str], Path]:
    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


def build_model(pipeline: Pipeline, order: int, strategy: RegionStrategy = 'auto') -> AffineLpvModel:
    """Truncate, fit the region and assemble, as ``embed`` does."""
    basis = truncate(pipeline.decomposition, order)
    rho = reduced_coordinates(basis, pipeline.normalizer, pipeline.series)
    report = accuracy(basis, pipeline.normalizer, pipeline.series)
    provenance = Provenance.from_report(report, source_digest(pipeline.system))
    return assemble(basis, pipeline.normalizer, region_from_points(rho, strategy), provenance=provenance)
