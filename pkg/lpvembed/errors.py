"""Exception hierarchy; each family maps to one CLI exit code."""


class LpvEmbedError(Exception):
    """Base class for all lpvembed failures.

    Attributes:
        exit_code: Process exit code used by the CLI
        stage: Pipeline stage that raised, filled in by ``pipeline_stage``
    """

    exit_code = 1

    def __init__(self, message: str, *, stage: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.stage = stage


class ConfigError(LpvEmbedError):
    """Invalid input: configuration, description files, data files, models."""

    exit_code = 2


class SystemSyntaxError(ConfigError):
    """Syntax error in a system description, with 1-based position."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f'line {line}, column {column}: {message}')
        self.line = line
        self.column = column


class UnknownIdentifierError(ConfigError):
    """Expression references a name missing from the variable list."""

    def __init__(self, name: str, line: int | None = None) -> None:
        where = f'line {line}: ' if line is not None else ''
        super().__init__(f'{where}unknown identifier {name!r}')
        self.name = name
        self.line = line


class DimensionMismatchError(ConfigError):
    """Array or grid shapes disagree with the declared dimensions."""


class TrajectoryFormatError(ConfigError):
    """Malformed trajectory CSV (ragged, non-numeric, non-uniform time)."""


class ModelSchemaError(ConfigError):
    """Model JSON does not match the expected schema."""


class OrderOutOfRangeError(ConfigError):
    """Requested truncation order is outside the available range."""


class DegenerateDataError(LpvEmbedError):
    """Data carry too little variation for the requested operation."""

    exit_code = 3


class DegenerateCloudError(DegenerateDataError):
    """Point cloud spans a lower-dimensional affine subspace."""

    def __init__(self, dimension: int, ambient: int) -> None:
        super().__init__(f'point cloud is degenerate: affine dimension {dimension} in R^{ambient}')
        self.dimension = dimension
        self.ambient = ambient


class NoActiveRowsError(DegenerateDataError):
    """Every coefficient entry is constant over the data set."""


class NumericalError(LpvEmbedError):
    """Numerical failure during evaluation, iteration or integration."""

    exit_code = 4


class EvaluationError(NumericalError):
    """Expression evaluation failed (division by zero, non-finite value).

    ``row``/``column`` are 1-based matrix positions and ``sample`` the
    0-based data index, each None when not applicable.
    """

    def __init__(
        self,
        message: str,
        *,
        row: int | None = None,
        column: int | None = None,
        sample: int | None = None,
    ) -> None:
        parts = []
        if row is not None and column is not None:
            parts.append(f'L[{row},{column}]')
        if sample is not None:
            parts.append(f'sample {sample}')
        prefix = f'{", ".join(parts)}: ' if parts else ''
        super().__init__(f'{prefix}{message}')
        self.row = row
        self.column = column
        self.sample = sample


class ConvergenceError(NumericalError):
    """Iterative method hit its iteration cap."""

    def __init__(self, message: str, iterations: int, violation: float) -> None:
        super().__init__(f'{message} (iterations={iterations}, violation={violation:.3e})')
        self.iterations = iterations
        self.violation = violation


class FrequencyResponseError(NumericalError):
    """Frozen A-matrix has an eigenvalue on the imaginary axis at grid points."""

    def __init__(self, frequencies: list[float]) -> None:
        shown = ', '.join(f'{w:.6g}' for w in frequencies[:5])
        super().__init__(f'A(theta) has eigenvalues at j*omega for omega = {shown}')
        self.frequencies = frequencies


class SimulationDivergedError(NumericalError):
    """State left the admissible magnitude or became non-finite."""

    def __init__(self, step: int, magnitude: float) -> None:
        super().__init__(f'simulation diverged at step {step} (|x| = {magnitude:.3e})')
        self.step = step
        self.magnitude = magnitude
