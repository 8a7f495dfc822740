"""Fixed-step simulation of the nonlinear model and its self-scheduled LPV embedding.

Both runs integrate ``[x'; y] = L [x; u]`` with the classical fourth-order
Runge-Kutta scheme. The input is held constant within each step and outputs
are taken at the start of every step. System variables must be named by
role: ``x<i>`` for states and ``u<j>`` for inputs.
"""

import math
import re
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt

from lpvembed.errors import ConfigError, DimensionMismatchError, SimulationDivergedError
from lpvembed.geometry import SchedulingRegion, sign_patterns
from lpvembed.log import get_logger
from lpvembed.model import AffineLpvModel, schedule_alpha
from lpvembed.sysdsl import SystemDescription, eval_matrix

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

DEFAULT_STATE_CAP = 1e6
_ROLE_RE = re.compile(r'([xu])(\d+)$')


@dataclass(frozen=True, eq=False)
class SimulationRun:
    """One simulated trajectory.

    ``states`` has ``horizon + 1`` rows; ``outputs``, ``inputs`` and
    ``scheduling`` have ``horizon`` rows. A diverged run stops early with
    ``diverged_at`` set to the first step whose state is unusable.
    """

    step: float
    horizon: int
    states: FloatArray
    outputs: FloatArray
    inputs: FloatArray
    scheduling: FloatArray | None = None
    warnings: tuple[str, ...] = ()
    diverged_at: int | None = None
    diverged_magnitude: float | None = None

    @property
    def times(self) -> FloatArray:
        return np.arange(self.horizon + 1) * self.step


@dataclass(frozen=True, eq=False)
class StateFeedback:
    """``u = u_ext + F x``.

    ``gains`` is one ``(n_u, n_x)`` matrix, or a ``(2^n_theta, n_u, n_x)``
    stack of vertex gains ordered like ``geometry.sign_patterns`` (``-1`` for
    the lower bound, ``+1`` for the upper) and interpolated multilinearly
    over the region box.
    """

    gains: FloatArray
    region: SchedulingRegion | None = None

    def __post_init__(self) -> None:
        if self.gains.ndim == 3:
            if self.region is None:
                raise ConfigError('vertex gains need a scheduling region')
            if self.gains.shape[0] != 2**self.region.dimension:
                raise DimensionMismatchError(f'expected {2**self.region.dimension} vertex gains')
        elif self.gains.ndim != 2:
            raise DimensionMismatchError('feedback gain must be a matrix or a stack of vertex matrices')

    @property
    def scheduled(self) -> bool:
        return self.gains.ndim == 3

    def gain(self, theta: FloatArray | None) -> FloatArray:
        if not self.scheduled:
            return self.gains
        if theta is None or self.region is None:
            raise ConfigError('scheduled feedback needs the scheduling value')
        width = self.region.upper - self.region.lower
        span = np.where(width > 0, width, 1.0)
        lam = np.clip((theta - self.region.lower) / span, 0.0, 1.0)
        patterns = sign_patterns(self.region.dimension)
        weights = np.prod(np.where(patterns > 0, lam, 1.0 - lam), axis=1)
        return np.tensordot(weights, self.gains, axes=1)


def state_input_roles(sys: SystemDescription) -> npt.NDArray[np.intp]:
    """Index of every variable into the stacked vector ``[x; u]``.

    Raises:
        ConfigError: a variable is not named ``x<i>`` or ``u<j>`` in range
    """
    index = []
    for name in sys.variable_names:
        match = _ROLE_RE.match(name)
        limit = {'x': sys.n_x, 'u': sys.n_u}[match.group(1)] if match else 0
        if match is None or not 1 <= int(match.group(2)) <= limit:
            raise ConfigError(
                f'simulation needs variables named x1..x{sys.n_x} or u1..u{sys.n_u}, got {name!r}',
            )
        position = int(match.group(2)) - 1
        index.append(position if match.group(1) == 'x' else sys.n_x + position)
    return np.array(index, dtype=np.intp)


def _input_table(
    inputs: npt.ArrayLike | Callable[[float], npt.ArrayLike] | None,
    steps: int,
    h: float,
    n_u: int,
) -> FloatArray:
    if inputs is None:
        return np.zeros((steps, n_u))
    if callable(inputs):
        table = np.array([np.atleast_1d(inputs(k * h)) for k in range(steps)], dtype=np.float64)
    else:
        table = np.asarray(inputs, dtype=np.float64)
        if table.ndim == 1:
            table = table[:, np.newaxis] if n_u == 1 else np.broadcast_to(table, (steps, n_u))
    if table.shape != (steps, n_u):
        raise DimensionMismatchError(f'input signal must have shape ({steps}, {n_u}), got {table.shape}')
    return table


VectorField = Callable[[FloatArray, FloatArray], tuple[FloatArray, FloatArray]]


def _rk4_step(field_fn: VectorField, x: FloatArray, u: FloatArray, h: float) -> FloatArray:
    k1 = field_fn(x, u)[0]
    k2 = field_fn(x + h / 2 * k1, u)[0]
    k3 = field_fn(x + h / 2 * k2, u)[0]
    k4 = field_fn(x + h * k3, u)[0]
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class _Integrator:
    n_x: int
    n_u: int
    n_y: int
    field_fn: VectorField
    theta_fn: Callable[[FloatArray, FloatArray], FloatArray] | None = None
    feedback: StateFeedback | None = None
    state_cap: float = DEFAULT_STATE_CAP
    warnings: list[str] = field(default_factory=list)

    def run(self, x0: npt.ArrayLike, external: FloatArray, h: float, steps: int) -> SimulationRun:
        x = np.asarray(x0, dtype=np.float64).reshape(-1)
        if x.shape != (self.n_x,):
            raise DimensionMismatchError(f'initial state must have length {self.n_x}, got {x.shape[0]}')
        states = np.empty((steps + 1, self.n_x))
        outputs = np.empty((steps, self.n_y))
        inputs = np.empty((steps, self.n_u))
        scheduling: list[FloatArray] = []
        states[0] = x
        diverged_at = None
        magnitude = 0.0
        for k in range(steps):
            u = external[k]
            theta = None if self.theta_fn is None else self.theta_fn(x, u)
            if self.feedback is not None:
                u = u + self.feedback.gain(theta) @ x
            if theta is not None:
                scheduling.append(theta)
            inputs[k] = u
            outputs[k] = self.field_fn(x, u)[1]
            x = _rk4_step(self.field_fn, x, u, h)
            magnitude = float(np.max(np.abs(x), initial=0.0))
            if not np.all(np.isfinite(x)) or magnitude > self.state_cap:
                diverged_at = k + 1
                log.warning('simulation diverged', step=diverged_at, magnitude=magnitude)
                self.warnings.append(f'diverged at step {diverged_at}')
                break
            states[k + 1] = x
        horizon = steps if diverged_at is None else diverged_at - 1
        return SimulationRun(
            step=h,
            horizon=horizon,
            states=states[: horizon + 1],
            outputs=outputs[:horizon],
            inputs=inputs[:horizon],
            scheduling=None if self.theta_fn is None else _stack(scheduling[:horizon], width=len(scheduling[0])),
            warnings=tuple(self.warnings),
            diverged_at=diverged_at,
            diverged_magnitude=None if diverged_at is None else magnitude,
        )


def _stack(rows: list[FloatArray], width: int) -> FloatArray:
    return np.array(rows) if rows else np.empty((0, width))


def _check_run_args(h: float, steps: int) -> None:
    if not h > 0:
        raise ConfigError(f'step size must be positive, got {h}')
    if steps < 1:
        raise ConfigError(f'step count must be at least 1, got {steps}')


def _finish(run: SimulationRun, *, raise_on_divergence: bool) -> SimulationRun:
    if run.diverged_at is not None and raise_on_divergence:
        raise SimulationDivergedError(run.diverged_at, run.diverged_magnitude or math.inf)
    return run


def simulate_nl(
    sys: SystemDescription,
    x0: npt.ArrayLike,
    inputs: npt.ArrayLike | Callable[[float], npt.ArrayLike] | None,
    h: float,
    steps: int,
    *,
    feedback: StateFeedback | None = None,
    state_cap: float = DEFAULT_STATE_CAP,
    raise_on_divergence: bool = False,
) -> SimulationRun:
    """Integrate the nonlinear model ``[x'; y] = L(x, u) [x; u]``."""
    _check_run_args(h, steps)
    if feedback is not None and feedback.scheduled:
        raise ConfigError('scheduled feedback is only available for LPV runs')
    roles = state_input_roles(sys)
    nx = sys.n_x

    def field_fn(x: FloatArray, u: FloatArray) -> tuple[FloatArray, FloatArray]:
        stacked = np.concatenate([x, u])
        out = eval_matrix(sys, stacked[roles], check_box=False) @ stacked
        return out[:nx], out[nx:]

    integrator = _Integrator(sys.n_x, sys.n_u, sys.n_y, field_fn, feedback=feedback, state_cap=state_cap)
    run = integrator.run(x0, _input_table(inputs, steps, h, sys.n_u), h, steps)
    return _finish(run, raise_on_divergence=raise_on_divergence)


def simulate_lpv(
    model: AffineLpvModel,
    sys: SystemDescription,
    x0: npt.ArrayLike,
    inputs: npt.ArrayLike | Callable[[float], npt.ArrayLike] | None,
    h: float,
    steps: int,
    *,
    feedback: StateFeedback | None = None,
    state_cap: float = DEFAULT_STATE_CAP,
    raise_on_divergence: bool = False,
) -> SimulationRun:
    """Integrate the self-scheduled LPV model.

    At every stage theta is recomputed from the current state and input
    through the model's scheduling map; values outside the region are
    counted and reported as a warning.
    """
    _check_run_args(h, steps)
    if (model.n_x, model.n_u, model.n_y) != (sys.n_x, sys.n_u, sys.n_y):
        raise DimensionMismatchError('model and system dimensions differ')
    roles = state_input_roles(sys)
    nx = sys.n_x
    outside = 0

    def theta_fn(x: FloatArray, u: FloatArray) -> FloatArray:
        nonlocal outside
        theta = schedule_alpha(model, sys, np.concatenate([x, u])[roles])
        if not bool(model.region.contains(theta)):
            outside += 1
        return theta

    def field_fn(x: FloatArray, u: FloatArray) -> tuple[FloatArray, FloatArray]:
        stacked = np.concatenate([x, u])
        theta = theta_fn(x, u)
        out = (model.m0 + np.tensordot(theta, model.coefficients, axes=1)) @ stacked
        return out[:nx], out[nx:]

    integrator = _Integrator(
        sys.n_x,
        sys.n_u,
        sys.n_y,
        field_fn,
        theta_fn=theta_fn,
        feedback=feedback,
        state_cap=state_cap,
    )
    run = integrator.run(x0, _input_table(inputs, steps, h, sys.n_u), h, steps)
    if outside:
        message = f'theta left the scheduling region at {outside} evaluations'
        log.warning('theta outside the scheduling region during simulation', evaluations=outside)
        run = SimulationRun(
            step=run.step,
            horizon=run.horizon,
            states=run.states,
            outputs=run.outputs,
            inputs=run.inputs,
            scheduling=run.scheduling,
            warnings=(*run.warnings, message),
            diverged_at=run.diverged_at,
            diverged_magnitude=run.diverged_magnitude,
        )
    return _finish(run, raise_on_divergence=raise_on_divergence)


@dataclass(frozen=True, eq=False)
class RunComparison:
    state_rmse: FloatArray
    output_rmse: FloatArray


def compare_runs(a: SimulationRun, b: SimulationRun) -> RunComparison:
    """Per-channel root-mean-square differences of states and outputs."""
    if not np.isclose(a.step, b.step, rtol=1e-12, atol=0) or a.horizon != b.horizon:
        raise DimensionMismatchError('runs differ in step size or horizon')
    if a.states.shape != b.states.shape or a.outputs.shape != b.outputs.shape:
        raise DimensionMismatchError('runs differ in channel counts')
    return RunComparison(
        state_rmse=np.sqrt(np.mean((a.states - b.states) ** 2, axis=0)),
        output_rmse=np.sqrt(np.mean((a.outputs - b.outputs) ** 2, axis=0)),
    )


def write_run_csv(run: SimulationRun, path: Path | str) -> None:
    """Write ``t, x.., y.., u..[, theta..]``, one row per step."""
    nx, ny, nu = run.states.shape[1], run.outputs.shape[1], run.inputs.shape[1]
    columns = [run.times[: run.horizon, np.newaxis], run.states[: run.horizon], run.outputs, run.inputs]
    header = ['t', *(f'x{i + 1}' for i in range(nx)), *(f'y{i + 1}' for i in range(ny))]
    header.extend(f'u{i + 1}' for i in range(nu))
    if run.scheduling is not None:
        columns.append(run.scheduling)
        header.extend(f'theta{i + 1}' for i in range(run.scheduling.shape[1]))
    np.savetxt(path, np.hstack(columns), fmt='%.17g', delimiter=',', header=','.join(header), comments='')
