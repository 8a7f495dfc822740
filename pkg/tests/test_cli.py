"""End-to-end tests of the lpvembed command line."""

import json
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest
from pytest_mock import MockerFixture

from lpvembed.dataset import save_trajectories
from lpvembed.errors import NumericalError
from lpvembed.fixtures import EXAMPLE2_SYSTEM, fixture
from lpvembed.version import __version__

from .conftest import CliRunner
from .test_helpers import CommandTest

EXAMPLE2 = ['--fixture', 'example2', '--ddof', '1']


@pytest.mark.parametrize(
    'test_case',
    [
        CommandTest(
            command=['--version'],
            stdout_contains=[f'lpvembed {__version__}'],
            description='version',
        ),
        CommandTest(
            command=['embed', *EXAMPLE2, '--order', '2', '--region', 'axis-aligned'],
            stdout_contains=['n_rho: 2', 'region_method: axis-aligned', 'rate_lower: '],
            stderr_contains=['embed[decompose] => 5 singular values', 'WARNING: no --out given'],
            description='embed_without_out_warns',
        ),
        CommandTest(
            command=['embed', *EXAMPLE2, '--order', '2', '--describe'],
            stdout_contains=['theta1 = ', 'L[2,3] = 1'],
            description='embed_describe',
        ),
        CommandTest(
            command=['embed', '--fixture', 'example2', '--order', '2', '--region', 'axis-aligned', '--describe'],
            stdout_contains=['L[1,1] = 0.6337*theta1+0.7773*theta2', 'L[1,2] = 1.223*theta1-0.9968*theta2'],
            description='fixture_supplies_its_deviation',
        ),
        CommandTest(
            command='embed --fixture example2 --ddof 0 --order 2 --region axis-aligned --describe'.split(),
            stdout_contains=['L[1,1] = 0.6327*theta1'],
            description='ddof_flag_overrides_the_fixture',
        ),
        CommandTest(
            command=['embed', *EXAMPLE2, '--energy', '0.99', '--out', 'model.json'],
            stdout_contains=['n_rho: 1', 'region_method: axis-aligned'],
            stderr_contains=['order chosen from captured energy'],
            description='embed_order_from_energy',
        ),
        CommandTest(
            command=['embed', *EXAMPLE2, '--order', '2', '--out', 'model.json'],
            verbosity=1,
            stderr_contains=['embed: decompose...', 'embed[region] => box2d'],
            description='embed_verbose_shows_stage_headers',
        ),
        CommandTest(
            command=['accuracy', *EXAMPLE2, '--max-order', '3'],
            stdout_contains=['order,eta_frobenius,eta_sum,eta_sqsum,captured_energy_ratio', '\n3,'],
            description='accuracy_sweep',
        ),
        CommandTest(
            command=['region-debug', '--fixture', 'example1', '--order', '2', '--region', 'box'],
            stdout_contains=['dimension: 2', 'affine_dimension: 2', 'samples_inside: 3000/3000', 'hull_vertices: '],
            description='region_debug',
        ),
        CommandTest(
            command=['embed', *EXAMPLE2, '--order', '0'],
            stderr_contains=['embed failed', 'order must be at least 1'],
            exit_code=2,
            description='order_zero_is_a_config_error',
        ),
        CommandTest(
            command=['embed', '--fixture', 'example1', '--system', 'sys.txt'],
            stderr_contains=['embed failed', 'exactly one system source'],
            exit_code=2,
            description='two_system_sources',
        ),
        CommandTest(
            command=['embed', '--fixture', 'example3'],
            stderr_contains=['unknown fixture'],
            exit_code=2,
            description='unknown_fixture',
        ),
        CommandTest(
            command=['embed', *EXAMPLE2, '--order', '6'],
            stderr_contains=['embed failed', 'stage: truncate'],
            exit_code=2,
            description='order_beyond_the_components',
        ),
        CommandTest(
            command=['accuracy', *EXAMPLE2, '--min-order', '4', '--max-order', '3'],
            stderr_contains=['accuracy failed', 'empty order range 4..3'],
            exit_code=2,
            description='empty_sweep',
        ),
        CommandTest(
            command=['simulate', '--model', 'absent.json', '--fixture', 'example2', '--x0', '1,0'],
            stderr_contains=['simulate failed', 'cannot read model absent.json'],
            exit_code=2,
            description='missing_model',
        ),
        CommandTest(
            command=['freqresp', '--model', 'absent.json', '--omega-min', '10', '--omega-max', '1'],
            stderr_contains=['freqresp failed', 'frequency grid'],
            exit_code=2,
            description='bad_frequency_grid',
        ),
        CommandTest(
            command=['embed', *EXAMPLE2, '--order', 'two'],
            exit_code=2,
            description='typer_usage_error',
        ),
    ],
    ids=lambda t: t.description,
)
def test_cli_command(run_cli: CliRunner, test_case: CommandTest) -> None:
    test_case.check(run_cli(test_case.args))


def test_embed_writes_the_model(run_cli: CliRunner, tmp_path: Path) -> None:
    result = run_cli(['embed', '--fixture', 'example1', '--order', '2', '--region', 'box', '--out', 'out/model.json'])
    assert result.returncode == 0, result.stderr
    report = result.report()
    assert report['region_method'] == 'box2d'
    assert float(report['region_volume']) == pytest.approx(23.2186, rel=0.02)
    assert float(report['region_reference_volume']) == pytest.approx(31.2870, rel=0.02)
    doc = json.loads((tmp_path / 'out' / 'model.json').read_text())
    assert doc['dims']['ntheta'] == 2
    assert doc['region']['method'] == 'box2d'


def test_embed_from_files(run_cli: CliRunner, write_file: Callable[[str, str], Path], tmp_path: Path) -> None:
    write_file('sys.txt', EXAMPLE2_SYSTEM)
    save_trajectories(fixture('example2').trajectories(), tmp_path / 'traj.csv')
    result = run_cli(['embed', '--system', 'sys.txt', '--data', 'traj.csv', '--order', '2', '--ddof', '1'])
    assert result.returncode == 0, result.stderr
    from_fixture = run_cli(['embed', *EXAMPLE2, '--order', '2'])
    assert result.report()['singular_values'] == from_fixture.report()['singular_values']


def test_embed_from_config_file(run_cli: CliRunner, write_file: Callable[[str, str], Path], tmp_path: Path) -> None:
    write_file('run.cfg', 'fixture = example2\nddof = 1\norder = 1\nout = models/m.json\n')
    # flags override the file
    result = run_cli(['embed', '--config', 'run.cfg', '--order', '2'])
    assert result.returncode == 0, result.stderr
    assert result.report()['n_rho'] == '2'
    assert (tmp_path / 'models' / 'm.json').exists()


def test_embed_from_generators(run_cli: CliRunner, write_file: Callable[[str, str], Path]) -> None:
    write_file('sys.txt', 'dims: 1 1 1\nvars: a1 a2\nL[1,1] = -1-a1\nL[1,2] = a2\nL[2,1] = 1\n')
    args = 'embed --system sys.txt -g a1=sin:1,5 -g a2=sin:2,3,0.5 --period 0.01 --samples 400 --order 2'
    result = run_cli(args.split())
    assert result.returncode == 0, result.stderr
    assert float(result.report()['eta_frobenius']) < 1e-6


def test_degenerate_cloud_exits_3(run_cli: CliRunner, write_file: Callable[[str, str], Path]) -> None:
    write_file('sys.txt', 'dims: 1 0 1\nvars: a1\nL[1,1] = a1\nL[2,1] = 2*a1+1\n')
    args = 'embed --system sys.txt -g a1=sin:1,5 --period 0.01 --samples 200 --order 2 --region box'
    result = run_cli(args.split())
    assert result.returncode == 3
    assert 'stage: region' in result.clean_stderr


def test_numerical_failure_exits_4(run_cli: CliRunner, mocker: MockerFixture) -> None:
    mocker.patch('lpvembed.cli.decompose', side_effect=NumericalError('decomposition did not converge'))
    result = run_cli(['embed', *EXAMPLE2, '--order', '2'])
    assert result.returncode == 4
    assert 'embed failed' in result.clean_stderr
    assert 'stage: decompose' in result.clean_stderr
    assert 'decomposition did not converge' in result.clean_stderr
    assert result.stdout == ''


def test_accuracy_table(run_cli: CliRunner) -> None:
    result = run_cli(['accuracy', *EXAMPLE2])
    assert result.returncode == 0, result.stderr
    rows = result.table()
    assert [row['order'] for row in rows] == ['1', '2', '3', '4', '5']
    assert float(rows[1]['eta_frobenius']) < 1e-6
    assert float(rows[-1]['captured_energy_ratio']) == pytest.approx(1.0)


def test_compare_table(run_cli: CliRunner, tmp_path: Path) -> None:
    result = run_cli(['compare', '--fixture', 'example1', '--order', '2', '--trajectories-out', 'traj.csv'])
    assert result.returncode == 0, result.stderr
    rows = {row['method']: row for row in result.table()}
    assert set(rows) == {'proposed', 'baseline'}
    assert float(rows['proposed']['eta_frobenius']) < float(rows['baseline']['eta_frobenius'])
    header = (tmp_path / 'traj.csv').read_text().splitlines()[0].split(',')
    assert header[:3] == ['t', 'L1_1', 'L1_1_hat']
    # six entries of Example 1 vary
    assert len(header) == 13


def test_simulate_against_the_model(run_cli: CliRunner, tmp_path: Path) -> None:
    assert run_cli(['embed', *EXAMPLE2, '--order', '2', '--region', 'axis-aligned', '--out', 'm.json']).returncode == 0
    args = 'simulate --model m.json --fixture example2 --x0 1,0 -u u1=sin:0.5,3 --out-dir runs'
    result = run_cli(args.split())
    assert result.returncode == 0, result.stderr
    rows = {row['channel']: float(row['rmse']) for row in result.table()}
    assert set(rows) == {'x1', 'x2', 'y1'}
    assert max(rows.values()) <= 1e-6
    lpv = (tmp_path / 'runs' / 'lpv.csv').read_text().splitlines()
    assert lpv[0] == 't,x1,x2,y1,u1,theta1,theta2'
    assert len(lpv) == 101
    assert (tmp_path / 'runs' / 'nl.csv').exists()


def test_simulate_rejects_bad_initial_state(run_cli: CliRunner) -> None:
    assert run_cli(['embed', *EXAMPLE2, '--order', '2', '--out', 'm.json']).returncode == 0
    result = run_cli(['simulate', '--model', 'm.json', '--fixture', 'example2', '--x0', '1,0,0'])
    assert result.returncode == 2
    assert 'x0 must have 2 values' in result.clean_stderr


def test_simulate_divergence_exits_4(run_cli: CliRunner) -> None:
    assert run_cli(['embed', *EXAMPLE2, '--order', '2', '--out', 'm.json']).returncode == 0
    result = run_cli(['simulate', '--model', 'm.json', '--fixture', 'example2', '--x0', '1e5,1e5', '--steps', '50'])
    assert result.returncode == 4
    assert 'stage: integrate' in result.clean_stderr


def test_freqresp_table(run_cli: CliRunner, tmp_path: Path) -> None:
    embedded = run_cli(['embed', *EXAMPLE2, '--order', '2', '--region', 'axis-aligned', '--out', 'm.json'])
    assert embedded.returncode == 0
    result = run_cli(['freqresp', '--model', 'm.json', '--points', '5', '--theta', '0,0', '--theta', '100,100'])
    assert result.returncode == 0, result.stderr
    rows = result.table()
    assert list(rows[0]) == ['theta1', 'theta2', 'inside_region', 'omega', 'y1_u1']
    assert len(rows) == 10
    assert {row['inside_region'] for row in rows[:5]} == {'1'}
    assert {row['inside_region'] for row in rows[5:]} == {'0'}
    omegas = [float(row['omega']) for row in rows[:5]]
    np.testing.assert_allclose(omegas, np.logspace(-2, 3, 5), rtol=1e-9)

    written = run_cli(['freqresp', '--model', 'm.json', '--points', '3', '--out', 'resp.csv'])
    assert written.returncode == 0
    assert written.stdout == ''
    assert len((tmp_path / 'resp.csv').read_text().splitlines()) == 4


def test_region_debug_points(run_cli: CliRunner, tmp_path: Path) -> None:
    outputs = ['--points-out', 'points.csv', '--vertices-out', 'out/vertices.csv']
    result = run_cli(['region-debug', *EXAMPLE2, '--order', '2', *outputs])
    assert result.returncode == 0, result.stderr
    report = result.report()
    assert report['region_method'] == 'box2d'
    assert float(report['region_volume']) <= float(report['reference_volume'])
    lines = (tmp_path / 'points.csv').read_text().splitlines()
    assert lines[0] == 't,rho1,rho2,theta1,theta2'
    assert len(lines) == 316

    lines = (tmp_path / 'out' / 'vertices.csv').read_text().splitlines()
    assert lines[0] == 'kind,index,coord1,coord2'
    shapes: dict[str, list[list[float]]] = {}
    for line in lines[1:]:
        kind, index, *coords = line.split(',')
        assert int(index) == len(shapes.setdefault(kind, []))
        shapes[kind].append([float(v) for v in coords])
    assert list(shapes) == ['hull', 'box', 'ellipsoid']
    assert len(shapes['hull']) == int(report['hull_vertices'])

    # corners 0, 1, 2 differ from corner 0 along one aligned axis each
    box = np.array(shapes['box'])
    assert box.shape == (4, 2)
    sides = np.linalg.norm(box[1:3] - box[0], axis=1)
    assert np.prod(sides) == pytest.approx(float(report['region_volume']), rel=1e-9)
    assert float(report['hull_volume']) <= float(report['region_volume']) * (1 + 1e-9)

    ends = np.array(shapes['ellipsoid'])
    assert ends.shape == (4, 2)
    np.testing.assert_allclose(ends[0] + ends[1], ends[2] + ends[3], atol=1e-9 * np.abs(ends).max())
    assert np.dot(ends[1] - ends[0], ends[3] - ends[2]) == pytest.approx(0.0, abs=1e-9 * np.abs(ends).max() ** 2)
