"""Scheduling trajectories, the coefficient data matrix and its normalization."""

import io
import math
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

from lpvembed.errors import ConfigError, DimensionMismatchError, EvaluationError, TrajectoryFormatError
from lpvembed.log import get_logger
from lpvembed.sysdsl import ExpressionTree, SystemDescription, eval_matrices, evaluate_tree, parse_expression

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]

# Relative deviation of one time step from the mean step that is still uniform
SPACING_TOLERANCE = 1e-9
DEFAULT_EPS_SIGMA = 1e-12


def _frozen(array: npt.ArrayLike) -> FloatArray:
    out = np.array(array, dtype=np.float64)
    out.setflags(write=False)
    return out


# Trajectories -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Sampled scheduling trajectory; row ``k`` of ``samples`` is alpha(kT)."""

    period: float
    samples: FloatArray
    variable_names: tuple[str, ...]
    start: float = 0.0

    def __post_init__(self) -> None:
        samples = _frozen(self.samples)
        if samples.ndim != 2:
            raise DimensionMismatchError(f'samples must be a 2-D array, got shape {samples.shape}')
        object.__setattr__(self, 'samples', samples)
        if not (self.period > 0 and math.isfinite(self.period)):
            raise TrajectoryFormatError(f'sample period must be positive, got {self.period}')
        if samples.shape[0] < 2:
            raise TrajectoryFormatError(f'need at least 2 samples, got {samples.shape[0]}')
        if samples.shape[1] != len(self.variable_names):
            raise DimensionMismatchError(
                f'{samples.shape[1]} sample columns for {len(self.variable_names)} variable names',
            )
        if not np.all(np.isfinite(samples)):
            row = int(np.flatnonzero(~np.all(np.isfinite(samples), axis=1))[0])
            raise TrajectoryFormatError(f'non-finite value in sample {row}')

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_alpha(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> FloatArray:
        return self.start + np.arange(self.n_samples) * self.period


def parse_trajectories(text: str, *, source: str = '<text>') -> TrajectoryDataset:
    """Parse trajectory CSV text with a ``t,<var1>,...`` header.

    Raises:
        TrajectoryFormatError: bad header, ragged or non-numeric rows,
            non-increasing or non-uniform time column
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise TrajectoryFormatError(f'{source}: empty trajectory file')
    header = [cell.strip() for cell in lines[0].split(',')]
    if header[0] != 't' or len(header) < 2 or not all(header[1:]):
        raise TrajectoryFormatError(f"{source}: header must be 't,<var1>,...,<varn>', got {lines[0]!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if line.count(',') != len(header) - 1:
            raise TrajectoryFormatError(
                f'{source}: line {lineno} has {line.count(",") + 1} cells, expected {len(header)}',
            )
    try:
        table = np.loadtxt(io.StringIO('\n'.join(lines[1:])), delimiter=',', ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise TrajectoryFormatError(f'{source}: non-numeric cell ({exc})') from exc

    if table.shape[0] < 2:
        raise TrajectoryFormatError(f'{source}: need at least 2 samples, got {table.shape[0]}')
    t = table[:, 0]
    steps = np.diff(t)
    if not np.all(steps > 0):
        raise TrajectoryFormatError(f'{source}: time column must be strictly increasing')
    period = (t[-1] - t[0]) / (len(t) - 1)
    deviation = float(np.max(np.abs(steps - period)) / period)
    if deviation > SPACING_TOLERANCE:
        raise TrajectoryFormatError(
            f'{source}: non-uniform time spacing (max relative deviation {deviation:.3e})',
        )
    log.debug('trajectories loaded', source=source, samples=len(t), period=period)
    return TrajectoryDataset(
        period=float(period),
        samples=table[:, 1:],
        variable_names=tuple(header[1:]),
        start=float(t[0]),
    )


def load_trajectories(path: Path | str) -> TrajectoryDataset:
    """Load a trajectory CSV file; the sample period is read off the time column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f'cannot read trajectory file {path}: {exc.strerror}') from exc
    return parse_trajectories(text, source=str(path))


def save_trajectories(data: TrajectoryDataset, path: Path | str) -> None:
    """Write ``data`` as CSV with 17 significant digits (samples reload bit-exactly)."""
    table = np.column_stack([data.times, data.samples])
    np.savetxt(
        path,
        table,
        fmt='%.17g',
        delimiter=',',
        header=','.join(('t', *data.variable_names)),
        comments='',
    )


# Signal generators ------------------------------------------------------------

GeneratorKind = Literal['expr', 'sin', 'multisine', 'grid']
_GENERATOR_RE = re.compile(r'\s*([A-Za-z_]\w*)\s*=\s*(?:(expr|sin|multisine|grid)\s*:)?(.*)$')


@dataclass(frozen=True)
class SignalGenerator:
    """One scheduling-variable signal.

    Kinds:
        expr: expression of ``t``
        sin: ``amp*sin(freq*t + phase) + offset`` (freq in rad/s)
        multisine: sum of ``a*sin(f*t + p)`` terms
        grid: ``lo, lo+step, ...`` up to ``hi``; independent of ``t``
    """

    name: str
    kind: GeneratorKind
    params: tuple[float, ...] = ()
    expression: ExpressionTree | None = None

    @property
    def grid_count(self) -> int | None:
        if self.kind != 'grid':
            return None
        lo, hi, step = self.params
        return math.floor((hi - lo) / step + 1e-9) + 1

    def values(self, t: FloatArray) -> FloatArray:
        match self.kind:
            case 'expr':
                assert self.expression is not None
                return evaluate_tree(self.expression, t[np.newaxis, :])
            case 'sin':
                amp, freq, phase, offset = self.params
                return amp * np.sin(freq * t + phase) + offset
            case 'multisine':
                terms = np.reshape(self.params, (-1, 3))
                return np.sum([a * np.sin(f * t + p) for a, f, p in terms], axis=0)
            case 'grid':
                lo, _, step = self.params
                return lo + np.arange(t.shape[0]) * step
        raise ConfigError(f'unknown generator kind {self.kind!r}')


def _floats(text: str, name: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise ConfigError(f'generator {name!r}: expected comma-separated numbers, got {text!r}') from None


def parse_generator(text: str) -> SignalGenerator:
    """Parse ``name=kind:args``; without a kind the right side is an expression of t.

    Example:
        >>> parse_generator('a1=sin:2,10,0,0').params
        (2.0, 10.0, 0.0, 0.0)
    """
    match = _GENERATOR_RE.match(text)
    if match is None:
        raise ConfigError(f"generator must look like 'name=kind:args', got {text!r}")
    name, kind, body = match.group(1), match.group(2) or 'expr', match.group(3).strip()
    if kind == 'expr':
        return SignalGenerator(name, 'expr', expression=parse_expression(body, ['t']))
    if kind == 'multisine':
        params = tuple(value for term in body.split(';') if term.strip() for value in _floats(term, name))
        if not params or len(params) % 3:
            raise ConfigError(f"generator {name!r}: multisine expects 'a,f,p;a,f,p;...'")
        return SignalGenerator(name, 'multisine', params)
    params = _floats(body, name)
    if kind == 'sin':
        if not 2 <= len(params) <= 4:
            raise ConfigError(f"generator {name!r}: sin expects 'amp,freq[,phase[,offset]]'")
        return SignalGenerator(name, 'sin', params + (0.0,) * (4 - len(params)))
    if len(params) != 3 or params[2] <= 0 or params[1] < params[0]:
        raise ConfigError(f"generator {name!r}: grid expects 'lo,hi,step' with lo <= hi and step > 0")
    return SignalGenerator(name, 'grid', params)


def generate_trajectories(
    generators: Sequence[SignalGenerator],
    period: float,
    samples: int | None = None,
) -> TrajectoryDataset:
    """Evaluate every generator at ``t = k*period`` for ``k < samples``.

    When ``samples`` is None a grid generator fixes the count.

    Raises:
        ConfigError: no generators, duplicate names, or a count that is
            neither given nor implied by a grid
        EvaluationError: a generator produced a non-finite value
    """
    if not generators:
        raise ConfigError('no trajectory generators given')
    names = tuple(gen.name for gen in generators)
    if len(set(names)) != len(names):
        raise ConfigError(f'duplicate generator names in {names}')
    if not period > 0:
        raise ConfigError(f'sample period must be positive, got {period}')
    grid_counts = {gen.grid_count for gen in generators} - {None}
    if samples is None:
        if not grid_counts:
            raise ConfigError('sample count required when no grid generator is given')
        samples = min(count for count in grid_counts if count is not None)
    if samples < 2:
        raise ConfigError(f'need at least 2 samples, got {samples}')
    if any(count is not None and count < samples for count in grid_counts):
        raise ConfigError(f'grid generator yields fewer than {samples} samples')

    t = np.arange(samples) * period
    columns = []
    for gen in generators:
        try:
            with np.errstate(all='ignore'):
                values = gen.values(t)
        except EvaluationError as exc:
            raise EvaluationError(f'generator {gen.name!r}: {exc.message}') from exc
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise EvaluationError(f'generator {gen.name!r} produced a non-finite value', sample=int(bad[0]))
        columns.append(values)
    log.debug('trajectories generated', variables=list(names), samples=samples, period=period)
    return TrajectoryDataset(period=float(period), samples=np.column_stack(columns), variable_names=names)


# Coefficient series -------------------------------------------------------------


def vectorize(matrix: npt.ArrayLike) -> FloatArray:
    """Row-wise vectorization of an ``m x n`` matrix."""
    return np.asarray(matrix, dtype=np.float64).reshape(-1)


def devectorize(vector: npt.ArrayLike, m: int, n: int) -> FloatArray:
    """Inverse of ``vectorize``."""
    arr = np.asarray(vector, dtype=np.float64)
    if arr.shape[0] != m * n:
        raise DimensionMismatchError(f'vector of length {arr.shape[0]} cannot form a {m}x{n} matrix')
    return arr.reshape(m, n, *arr.shape[1:])


@dataclass(frozen=True, eq=False)
class CoefficientSeries:
    """Column ``k`` of ``data`` is the row-wise vectorized L(alpha(kT))."""

    data: FloatArray
    n_x: int
    n_u: int
    n_y: int

    def __post_init__(self) -> None:
        data = _frozen(self.data)
        object.__setattr__(self, 'data', data)
        if data.ndim != 2 or data.shape[0] != self.n_gamma:
            raise DimensionMismatchError(f'series must have {self.n_gamma} rows, got shape {data.shape}')

    @property
    def m(self) -> int:
        return self.n_x + self.n_y

    @property
    def n(self) -> int:
        return self.n_x + self.n_u

    @property
    def n_gamma(self) -> int:
        return self.m * self.n

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_u, self.n_y)

    @property
    def index_map(self) -> tuple[tuple[int, int], ...]:
        """Zero-based ``(i, j)`` entry of L for every row."""
        return tuple(divmod(row, self.n) for row in range(self.n_gamma))

    def entry_label(self, row: int) -> str:
        i, j = divmod(row, self.n)
        return f'L[{i + 1},{j + 1}]'


def aligned_samples(sys: SystemDescription, data: TrajectoryDataset | npt.ArrayLike) -> FloatArray:
    """Samples as an ``N x n_alpha`` array in the system's variable order."""
    if not isinstance(data, TrajectoryDataset):
        samples = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if samples.shape[1] != sys.n_alpha:
            raise DimensionMismatchError(f'samples have {samples.shape[1]} columns, system has {sys.n_alpha} variables')
        return samples
    if data.n_alpha != sys.n_alpha:
        raise DimensionMismatchError(
            f'trajectories have {data.n_alpha} variables {list(data.variable_names)}, '
            f'system expects {sys.n_alpha} {list(sys.variable_names)}',
        )
    if data.variable_names == sys.variable_names:
        return data.samples
    if set(data.variable_names) == set(sys.variable_names):
        order = [data.variable_names.index(name) for name in sys.variable_names]
        return data.samples[:, order]
    log.debug(
        'trajectory columns matched by position',
        trajectory_names=list(data.variable_names),
        system_names=list(sys.variable_names),
    )
    return data.samples


def build_series(sys: SystemDescription, data: 'TrajectoryDataset | npt.ArrayLike') -> CoefficientSeries:
    """Evaluate L along the trajectory and stack the vectorized samples as columns.

    ``data`` is a dataset (columns matched to the system's variables by
    name when the names agree) or a raw ``N x n_alpha`` sample array.

    Raises:
        DimensionMismatchError: column count differs from the variable count
        EvaluationError: naming the failing entry and sample
    """
    samples = aligned_samples(sys, data)
    matrices = eval_matrices(sys, samples)
    series = matrices.reshape(matrices.shape[0], sys.n_gamma).T
    return CoefficientSeries(data=series, n_x=sys.n_x, n_u=sys.n_u, n_y=sys.n_y)


# Normalization ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-row affine normalization and its weighting.

    Rows whose spread is below ``eps_sigma * max(1, |mean|)`` are inactive:
    they are constant over the data and bypass the reduction.
    """

    means: FloatArray
    stds: FloatArray
    active_mask: BoolArray
    dims: tuple[int, int, int]
    eps_sigma: float = DEFAULT_EPS_SIGMA
    ddof: int = 0
    _active_rows: npt.NDArray[np.intp] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'means', _frozen(self.means))
        object.__setattr__(self, 'stds', _frozen(self.stds))
        mask = np.array(self.active_mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, 'active_mask', mask)
        if not (self.means.shape == self.stds.shape == mask.shape) or self.means.ndim != 1:
            raise DimensionMismatchError('normalizer means, stds and mask must be equal-length vectors')
        nx, nu, ny = self.dims
        if self.means.shape[0] != (nx + ny) * (nx + nu):
            raise DimensionMismatchError(f'normalizer length {self.means.shape[0]} does not match dims {self.dims}')
        object.__setattr__(self, '_active_rows', np.flatnonzero(mask))

    @property
    def n_gamma(self) -> int:
        return self.means.shape[0]

    @property
    def active_rows(self) -> npt.NDArray[np.intp]:
        return self._active_rows

    @property
    def n_active(self) -> int:
        return int(self._active_rows.size)

    @property
    def weights(self) -> FloatArray:
        """Diagonal of W: ``1/std`` on active rows, 0 on constant rows."""
        out = np.zeros(self.n_gamma)
        out[self.active_rows] = 1.0 / self.stds[self.active_rows]
        return out


def _row_stats(row: FloatArray, ddof: int) -> tuple[float, float]:
    # fsum is exactly rounded, so the statistics do not depend on sample order
    n = row.shape[0]
    mean = math.fsum(row) / n
    var = math.fsum((row - mean) ** 2) / (n - ddof)
    return mean, math.sqrt(var)


def fit_normalizer(
    series: CoefficientSeries,
    eps_sigma: float = DEFAULT_EPS_SIGMA,
    *,
    ddof: int = 0,
) -> Normalizer:
    """Per-row mean and standard deviation over the data set.

    ``ddof=0`` gives the population (1/N) deviation; ``ddof=1`` the sample
    (1/(N-1)) one.
    """
    if series.n_samples < 2:
        raise TrajectoryFormatError(f'need at least 2 samples to fit a normalizer, got {series.n_samples}')
    if ddof not in (0, 1):
        raise ConfigError(f'ddof must be 0 or 1, got {ddof}')
    stats = np.array([_row_stats(row, ddof) for row in series.data])
    means, stds = stats[:, 0], stats[:, 1]
    active = stds >= eps_sigma * np.maximum(1.0, np.abs(means))
    log.debug(
        'normalizer fitted',
        active=int(active.sum()),
        inactive=[series.entry_label(row) for row in np.flatnonzero(~active)],
        _debug_stds=stds,
    )
    return Normalizer(means=means, stds=stds, active_mask=active, dims=series.dims, eps_sigma=eps_sigma, ddof=ddof)


def _series_data(nrm: Normalizer, series: CoefficientSeries | npt.ArrayLike) -> FloatArray:
    data = series.data if isinstance(series, CoefficientSeries) else np.asarray(series, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, np.newaxis]
    if data.shape[0] != nrm.n_gamma:
        raise DimensionMismatchError(f'series has {data.shape[0]} rows, normalizer expects {nrm.n_gamma}')
    return data


def normalize(nrm: Normalizer, series: CoefficientSeries | npt.ArrayLike) -> FloatArray:
    """Active rows mapped to ``(row - mean) / std``; shape ``(n_active, N)``.

    A 1-D vector of length ``n_gamma`` is treated as a single column.
    """
    data = _series_data(nrm, series)
    rows = nrm.active_rows
    return (data[rows] - nrm.means[rows, np.newaxis]) / nrm.stds[rows, np.newaxis]


def denormalize(nrm: Normalizer, normalized: npt.ArrayLike) -> CoefficientSeries:
    """Inverse of ``normalize``; constant rows come back at their means."""
    arr = np.asarray(normalized, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.shape[0] != nrm.n_active:
        raise DimensionMismatchError(f'normalized data has {arr.shape[0]} rows, expected {nrm.n_active}')
    rows = nrm.active_rows
    data = np.repeat(nrm.means[:, np.newaxis], arr.shape[1], axis=1)
    data[rows] = arr * nrm.stds[rows, np.newaxis] + nrm.means[rows, np.newaxis]
    nx, nu, ny = nrm.dims
    return CoefficientSeries(data=data, n_x=nx, n_u=nu, n_y=ny)
