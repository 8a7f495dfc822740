"""Tests for the nonlinear and LPV simulators."""

import math
from pathlib import Path

import numpy as np
import pytest

from lpvembed.errors import ConfigError, DimensionMismatchError, SimulationDivergedError
from lpvembed.geometry import axis_aligned_bounds
from lpvembed.simulate import (
    RunComparison,
    SimulationRun,
    StateFeedback,
    compare_runs,
    simulate_lpv,
    simulate_nl,
    state_input_roles,
    write_run_csv,
)
from lpvembed.sysdsl import parse_system

from .conftest import Pipeline, build_model

DECAY = 'dims: 1 0 0\nL[1,1] = -1\n'
LAG = 'dims: 1 1 1\nL[1,1] = -1\nL[1,2] = 1\nL[2,1] = 1\n'


def _decay_error(h: float) -> float:
    run = simulate_nl(parse_system(DECAY), [1.0], None, h, round(1 / h))
    return abs(run.states[-1, 0] - math.exp(-1))


def test_rk4_is_fourth_order() -> None:
    ratio = _decay_error(0.1) / _decay_error(0.05)
    assert ratio == pytest.approx(16, rel=0.2)


def test_run_shapes() -> None:
    run = simulate_nl(parse_system(LAG), [0.0], np.ones(25), 0.01, 25)
    assert run.horizon == 25
    assert run.states.shape == (26, 1)
    assert run.outputs.shape == (25, 1)
    assert run.inputs.shape == (25, 1)
    assert run.scheduling is None
    assert run.times[-1] == pytest.approx(0.25)
    # y is sampled at the start of the step
    np.testing.assert_array_equal(run.outputs[:, 0], run.states[:-1, 0])


def test_callable_input() -> None:
    run = simulate_nl(parse_system(LAG), [0.0], lambda t: [math.sin(t)], 0.1, 10)
    np.testing.assert_allclose(run.inputs[:, 0], np.sin(np.arange(10) * 0.1))


@pytest.mark.parametrize(('h', 'steps'), [(0.0, 10), (-0.1, 10), (0.1, 0)])
def test_rejects_run_arguments(h: float, steps: int) -> None:
    with pytest.raises(ConfigError):
        simulate_nl(parse_system(DECAY), [1.0], None, h, steps)


def test_rejects_wrong_shapes() -> None:
    sys = parse_system(LAG)
    with pytest.raises(DimensionMismatchError):
        simulate_nl(sys, [0.0, 1.0], None, 0.1, 5)
    with pytest.raises(DimensionMismatchError):
        simulate_nl(sys, [0.0], np.ones((4, 1)), 0.1, 5)


class TestDivergence:
    """x' = 50 x with h = 0.1 grows by 65.375 per step and passes 1e6 at step 4."""

    sys = parse_system('dims: 1 0 0\nL[1,1] = 50\n')

    def test_marks_the_run(self) -> None:
        run = simulate_nl(self.sys, [1.0], None, 0.1, 10)
        assert run.diverged_at == 4
        assert run.horizon == 3
        assert run.states.shape == (4, 1)
        assert run.diverged_magnitude == pytest.approx(65.375**4)
        assert run.warnings == ('diverged at step 4',)

    def test_raises_on_request(self) -> None:
        with pytest.raises(SimulationDivergedError) as excinfo:
            simulate_nl(self.sys, [1.0], None, 0.1, 10, raise_on_divergence=True)
        assert excinfo.value.step == 4
        assert excinfo.value.magnitude > 1e6
        assert excinfo.value.exit_code == 4

    def test_cap_is_configurable(self) -> None:
        run = simulate_nl(self.sys, [1.0], None, 0.1, 10, state_cap=1e3)
        assert run.diverged_at == 2


def test_constant_feedback() -> None:
    """u = -x held over each step gives x(k+1) = (2 exp(-h) - 1) x(k) for x' = -x + u."""
    feedback = StateFeedback(gains=np.array([[-1.0]]))
    run = simulate_nl(parse_system(LAG), [1.0], None, 0.01, 100, feedback=feedback)
    assert run.states[-1, 0] == pytest.approx((2 * math.exp(-0.01) - 1) ** 100, rel=1e-8)
    np.testing.assert_array_equal(run.inputs[:, 0], -run.states[:-1, 0])


def test_vertex_feedback_interpolates() -> None:
    region = axis_aligned_bounds(np.array([[-1.0], [3.0]]))
    feedback = StateFeedback(gains=np.array([[[2.0]], [[6.0]]]), region=region)
    assert feedback.scheduled
    assert feedback.gain(np.array([-1.0]))[0, 0] == pytest.approx(2.0)
    assert feedback.gain(np.array([1.0]))[0, 0] == pytest.approx(4.0)
    assert feedback.gain(np.array([3.0]))[0, 0] == pytest.approx(6.0)
    # clipped to the region
    assert feedback.gain(np.array([10.0]))[0, 0] == pytest.approx(6.0)


def test_vertex_feedback_two_dimensional() -> None:
    region = axis_aligned_bounds(np.array([[0.0, 0.0], [1.0, 1.0]]))
    gains = np.arange(4.0).reshape(4, 1, 1)
    feedback = StateFeedback(gains=gains, region=region)
    corners = region.vertices
    for k, corner in enumerate(corners):
        assert feedback.gain(corner)[0, 0] == pytest.approx(k)
    assert feedback.gain(np.array([0.5, 0.5]))[0, 0] == pytest.approx(1.5)


def test_vertex_feedback_validation() -> None:
    region = axis_aligned_bounds(np.array([[0.0], [1.0]]))
    with pytest.raises(ConfigError):
        StateFeedback(gains=np.zeros((2, 1, 1)))
    with pytest.raises(DimensionMismatchError):
        StateFeedback(gains=np.zeros((3, 1, 1)), region=region)
    with pytest.raises(DimensionMismatchError):
        StateFeedback(gains=np.zeros(3))


def test_nonlinear_run_rejects_scheduled_feedback() -> None:
    region = axis_aligned_bounds(np.array([[0.0], [1.0]]))
    feedback = StateFeedback(gains=np.zeros((2, 1, 1)), region=region)
    with pytest.raises(ConfigError, match='LPV'):
        simulate_nl(parse_system(LAG), [1.0], None, 0.1, 5, feedback=feedback)


def test_state_input_roles() -> None:
    sys = parse_system('dims: 2 1 0\nvars: u1 x2\nL[1,1] = x2*u1\n')
    np.testing.assert_array_equal(state_input_roles(sys), [2, 1])


@pytest.mark.parametrize('name', ['a1', 'x3', 'u2', 'x0'])
def test_state_input_roles_rejects(name: str) -> None:
    sys = parse_system(f'dims: 2 1 0\nvars: {name}\n')
    with pytest.raises(ConfigError, match=name):
        state_input_roles(sys)


def test_lpv_run_matches_nonlinear_run(example2: Pipeline) -> None:
    model = build_model(example2, 2, 'axis-aligned')
    nl = simulate_nl(example2.system, [1.0, 0.0], None, 1e-3, 100)
    lpv = simulate_lpv(model, example2.system, [1.0, 0.0], None, 1e-3, 100)
    diff = compare_runs(nl, lpv)
    assert np.all(diff.state_rmse <= 1e-6)
    assert np.all(diff.output_rmse <= 1e-6)
    assert lpv.scheduling is not None
    assert lpv.scheduling.shape == (100, 2)
    assert lpv.warnings == ()


def test_lpv_run_warns_outside_region(example2: Pipeline) -> None:
    model = build_model(example2, 2, 'box')
    run = simulate_lpv(model, example2.system, [3.0, 0.0], None, 1e-3, 10)
    assert any('left the scheduling region' in warning for warning in run.warnings)


def test_lpv_run_rejects_other_system(example2: Pipeline) -> None:
    model = build_model(example2, 2)
    with pytest.raises(DimensionMismatchError):
        simulate_lpv(model, parse_system(LAG), [0.0], None, 0.1, 5)


def test_compare_runs_needs_matching_runs() -> None:
    sys = parse_system(LAG)
    with pytest.raises(DimensionMismatchError):
        compare_runs(simulate_nl(sys, [0.0], None, 0.1, 5), simulate_nl(sys, [0.0], None, 0.1, 6))
    with pytest.raises(DimensionMismatchError):
        compare_runs(simulate_nl(sys, [0.0], None, 0.1, 5), simulate_nl(sys, [0.0], None, 0.2, 5))


def test_compare_identical_runs() -> None:
    run = simulate_nl(parse_system(LAG), [1.0], np.ones(5), 0.1, 5)
    diff = compare_runs(run, run)
    np.testing.assert_array_equal(diff.state_rmse, [0.0])
    np.testing.assert_array_equal(diff.output_rmse, [0.0])


def test_compare_runs_per_channel() -> None:
    def run(states: list[list[float]], outputs: list[list[float]]) -> SimulationRun:
        return SimulationRun(
            step=0.1,
            horizon=2,
            states=np.array(states),
            outputs=np.array(outputs),
            inputs=np.zeros((2, 1)),
        )

    base = run([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]], [[0.0], [0.0]])
    other = run([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]], [[1.0], [-1.0]])
    diff = compare_runs(base, other)
    assert isinstance(diff, RunComparison)
    np.testing.assert_allclose(diff.state_rmse, [math.sqrt(3.0), math.sqrt(16 / 3)])
    np.testing.assert_allclose(diff.output_rmse, [1.0])
    np.testing.assert_array_equal(compare_runs(other, base).state_rmse, diff.state_rmse)


def test_write_run_csv(tmp_path: Path) -> None:
    run = SimulationRun(
        step=0.5,
        horizon=2,
        states=np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]),
        outputs=np.array([[7.0], [8.0]]),
        inputs=np.array([[9.0], [10.0]]),
        scheduling=np.array([[0.1], [0.2]]),
    )
    path = tmp_path / 'run.csv'
    write_run_csv(run, path)
    lines = path.read_text().splitlines()
    assert lines[0] == 't,x1,x2,y1,u1,theta1'
    assert [float(v) for v in lines[2].split(',')] == [0.5, 3.0, 4.0, 8.0, 10.0, 0.2]
    assert len(lines) == 3
