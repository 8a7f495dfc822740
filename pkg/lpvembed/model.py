"""The affine LPV model ``L_hat(theta) = M0 + sum_i theta_i M_i`` and its scheduling map."""

import hashlib
import json
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from lpvembed.dataset import (
    CoefficientSeries,
    Normalizer,
    TrajectoryDataset,
    aligned_samples,
    build_series,
    devectorize,
)
from lpvembed.errors import (
    ConfigError,
    DimensionMismatchError,
    FrequencyResponseError,
    ModelSchemaError,
)
from lpvembed.geometry import RegionMethod, SchedulingRegion
from lpvembed.log import get_logger
from lpvembed.reduction import AccuracyReport, ReducedBasis
from lpvembed.sysdsl import SystemDescription, eval_matrix, format_system

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

MODEL_SCHEMA_VERSION = 1
DEFAULT_OMEGAS = np.logspace(-2, 3, 400)
# Distance of an eigenvalue of A from j*omega that counts as a pole on the grid
POLE_TOLERANCE = 1e-9

MapInput = Literal['gamma', 'alpha']


@dataclass(frozen=True, eq=False)
class Provenance:
    singular_values: FloatArray
    eta_frobenius: float | None = None
    eta_sum: float | None = None
    eta_sqsum: float | None = None
    source_digest: str = ''

    @classmethod
    def from_report(cls, report: AccuracyReport, source_digest: str = '') -> 'Provenance':
        return cls(
            singular_values=report.singular_values,
            eta_frobenius=report.eta_frobenius,
            eta_sum=report.eta_sum,
            eta_sqsum=report.eta_sqsum,
            source_digest=source_digest,
        )


@dataclass(frozen=True, eq=False)
class AffineLpvModel:
    """Affine LPV model with its scheduling map ``theta = gain @ g + offset``.

    ``g`` is the vectorized coefficient matrix Gamma(alpha) when
    ``map_input == 'gamma'``, and alpha itself for ``'alpha'`` (the
    scheduling-trajectory baseline).

    Attributes:
        m0: ``m x n`` base matrix
        coefficients: ``(n_theta, m, n)`` stack of the ``M_i``
    """

    n_x: int
    n_u: int
    n_y: int
    m0: FloatArray
    coefficients: FloatArray
    gain: FloatArray
    offset: FloatArray
    region: SchedulingRegion
    provenance: Provenance
    map_input: MapInput = 'gamma'

    def __post_init__(self) -> None:
        m, n = self.m, self.n
        if self.m0.shape != (m, n):
            raise DimensionMismatchError(f'M0 must be {m}x{n}, got {self.m0.shape}')
        n_theta = self.coefficients.shape[0]
        if self.coefficients.shape != (n_theta, m, n):
            raise DimensionMismatchError(f'coefficient matrices must be {m}x{n}')
        if self.gain.ndim != 2 or self.gain.shape[0] != n_theta or self.offset.shape != (n_theta,):
            raise DimensionMismatchError(f'scheduling map must have {n_theta} rows')
        if self.map_input == 'gamma' and self.gain.shape[1] != m * n:
            raise DimensionMismatchError(f'scheduling map must have {m * n} columns')
        if self.region.dimension != n_theta:
            raise DimensionMismatchError(f'region has dimension {self.region.dimension}, model has {n_theta}')

    @property
    def m(self) -> int:
        return self.n_x + self.n_y

    @property
    def n(self) -> int:
        return self.n_x + self.n_u

    @property
    def n_theta(self) -> int:
        return int(self.coefficients.shape[0])


def source_digest(sys: SystemDescription) -> str:
    """SHA-256 of the canonical system description."""
    return hashlib.sha256(format_system(sys).encode()).hexdigest()


def assemble(
    basis: ReducedBasis,
    nrm: Normalizer,
    region: SchedulingRegion,
    dims: tuple[int, int, int] | None = None,
    *,
    provenance: Provenance | None = None,
) -> AffineLpvModel:
    """Compose normalization, projection and region alignment into one affine model.

    With ``rho = U^T diag(1/s)(g - mu)`` on the active rows and
    ``theta = R (rho - c) + c``, the map is ``K = R U^T diag(1/s)`` and
    ``k0 = -R U^T (mu/s) + (I - R) c``. Inverting the chain gives
    ``g_hat = mu + s * U (R^T theta + c - R^T c)``; its constant part is
    ``M0`` and the columns of ``diag(s) U R^T`` are the ``M_i``. Constant
    entries sit in ``M0`` only.
    """
    nx, nu, ny = dims or nrm.dims
    if (nx, nu, ny) != nrm.dims:
        raise DimensionMismatchError(f'dims {dims} do not match the normalizer dims {nrm.dims}')
    u = basis.u_rho
    if u.shape[0] != nrm.n_active:
        raise DimensionMismatchError(f'basis has {u.shape[0]} rows, normalizer has {nrm.n_active} active rows')
    n_theta = u.shape[1]
    if region.dimension != n_theta:
        raise DimensionMismatchError(f'region has dimension {region.dimension}, basis order is {n_theta}')
    rotation, center = region.rotation, region.center
    if abs(abs(np.linalg.det(rotation)) - 1) > 1e-8:
        raise DimensionMismatchError('region rotation is not orthonormal')

    rows = nrm.active_rows
    mu, sigma = nrm.means[rows], nrm.stds[rows]
    identity = np.eye(n_theta)

    gain = np.zeros((n_theta, nrm.n_gamma))
    gain[:, rows] = rotation @ u.T / sigma
    offset = -rotation @ (u.T @ (mu / sigma)) + (identity - rotation) @ center

    base = nrm.means.copy()
    base[rows] = mu + sigma * (u @ (center - rotation.T @ center))
    directions = np.zeros((nrm.n_gamma, n_theta))
    directions[rows] = (sigma[:, np.newaxis] * u) @ rotation.T

    m, n = nx + ny, nx + nu
    model = AffineLpvModel(
        n_x=nx,
        n_u=nu,
        n_y=ny,
        m0=devectorize(base, m, n),
        coefficients=np.stack([devectorize(directions[:, i], m, n) for i in range(n_theta)]),
        gain=gain,
        offset=offset,
        region=region,
        provenance=provenance or Provenance(singular_values=basis.singular_values),
    )
    log.debug('model assembled', n_theta=n_theta, active_rows=int(rows.size))
    return model


def in_region(model: AffineLpvModel, theta: npt.ArrayLike) -> npt.NDArray[np.bool_]:
    return model.region.contains(theta)


def evaluate(model: AffineLpvModel, theta: npt.ArrayLike) -> FloatArray:
    """``M0 + sum_i theta_i M_i``; theta outside the region is logged, not rejected."""
    point = np.asarray(theta, dtype=np.float64)
    if point.shape != (model.n_theta,):
        raise DimensionMismatchError(f'theta must have length {model.n_theta}, got shape {point.shape}')
    if not bool(in_region(model, point)):
        log.warning('theta outside the scheduling region', _verbose_theta=point)
    return model.m0 + np.tensordot(point, model.coefficients, axes=1)


def schedule(model: AffineLpvModel, gamma: npt.ArrayLike) -> FloatArray:
    """``K g + k0`` for a ``(n_in,)`` vector or ``(n_in, N)`` batch."""
    arr = np.asarray(gamma, dtype=np.float64)
    if arr.shape[0] != model.gain.shape[1]:
        raise DimensionMismatchError(f'scheduling input must have length {model.gain.shape[1]}, got {arr.shape[0]}')
    offset = model.offset if arr.ndim == 1 else model.offset[:, np.newaxis]
    return model.gain @ arr + offset


def schedule_alpha(model: AffineLpvModel, sys: SystemDescription, alpha: npt.ArrayLike) -> FloatArray:
    """Scheduling value at one point alpha, through Gamma(alpha) when the map needs it."""
    if model.map_input == 'alpha':
        return schedule(model, alpha)
    return schedule(model, eval_matrix(sys, alpha, check_box=False).reshape(-1))


def schedule_series(model: AffineLpvModel, sys: SystemDescription, data: TrajectoryDataset) -> FloatArray:
    """Scheduling trajectory ``(n_theta, N)`` over a data set."""
    if model.map_input == 'alpha':
        return schedule(model, aligned_samples(sys, data).T)
    return schedule(model, build_series(sys, data).data)


def approximation_trajectories(model: AffineLpvModel, series: CoefficientSeries) -> CoefficientSeries:
    """Model coefficients ``vec(L_hat(theta(k)))`` along a self-scheduled series."""
    if model.map_input != 'gamma':
        raise ConfigError('approximation trajectories need a coefficient-based scheduling map')
    theta = schedule(model, series.data)
    flat = model.coefficients.reshape(model.n_theta, -1)
    approx = model.m0.reshape(-1)[:, np.newaxis] + flat.T @ theta
    return CoefficientSeries(data=approx, n_x=model.n_x, n_u=model.n_u, n_y=model.n_y)


def weighted_error(model: AffineLpvModel, nrm: Normalizer, series: CoefficientSeries) -> float:
    """``||W (Pi - Pi_hat)||_F`` over the series."""
    approx = approximation_trajectories(model, series)
    return float(np.linalg.norm(nrm.weights[:, np.newaxis] * (series.data - approx.data)))


def embedding_error(model: AffineLpvModel, series: CoefficientSeries) -> float:
    """Largest entrywise deviation ``|L - L_hat(theta)|`` over the series."""
    approx = approximation_trajectories(model, series)
    return float(np.max(np.abs(series.data - approx.data)))


# Scheduling rates --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RateBounds:
    lower: FloatArray
    upper: FloatArray


def trajectory_rate_bounds(theta: npt.ArrayLike, period: float) -> RateBounds:
    """Min/max of central differences (one-sided at the ends) per component."""
    arr = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    if arr.shape[1] < 2:
        raise ConfigError('rate bounds need at least 2 samples')
    rates = np.gradient(arr, period, axis=1)
    return RateBounds(lower=rates.min(axis=1), upper=rates.max(axis=1))


def rate_bounds(model: AffineLpvModel, sys: SystemDescription, data: TrajectoryDataset) -> RateBounds:
    """Bounds on the scheduling rates along the data set."""
    bounds = trajectory_rate_bounds(schedule_series(model, sys, data), data.period)
    log.debug('rate bounds', lower=bounds.lower, upper=bounds.upper)
    return bounds


# Frozen frequency responses ----------------------------------------------------


def partition(model: AffineLpvModel, matrix: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    """Split ``[[A, B], [C, D]]`` by the model's state dimension."""
    nx = model.n_x
    return matrix[:nx, :nx], matrix[:nx, nx:], matrix[nx:, :nx], matrix[nx:, nx:]


def transfer_function(
    a: FloatArray,
    b: FloatArray,
    c: FloatArray,
    d: FloatArray,
    omegas: npt.ArrayLike,
) -> npt.NDArray[np.complex128]:
    """``C (j w I - A)^-1 B + D`` as a ``(n_y, n_u, len(omegas))`` array.

    Raises:
        FrequencyResponseError: an eigenvalue of A lies within
            ``POLE_TOLERANCE`` of ``j w`` for some grid frequency
    """
    freqs = np.asarray(omegas, dtype=np.float64)
    nx = a.shape[0]
    response = np.empty((d.shape[0], d.shape[1], freqs.shape[0]), dtype=np.complex128)
    if nx == 0:
        response[:] = d[:, :, np.newaxis]
        return response
    poles = np.linalg.eigvals(a)
    distance = np.min(np.abs(poles[np.newaxis, :] - 1j * freqs[:, np.newaxis]), axis=1)
    bad = freqs[distance <= POLE_TOLERANCE]
    if bad.size:
        raise FrequencyResponseError([float(w) for w in bad])
    eye = np.eye(nx)
    for k, omega in enumerate(freqs):
        response[:, :, k] = c @ np.linalg.solve(1j * omega * eye - a, b) + d
    return response


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    omegas: FloatArray
    magnitude: FloatArray  # (n_y, n_u, n_omega)
    theta: FloatArray
    inside_region: bool


def frozen_frequency_response(
    model: AffineLpvModel,
    theta: npt.ArrayLike,
    omegas: npt.ArrayLike | None = None,
) -> FrequencyResponse:
    """Magnitude response of the LTI system frozen at ``theta``."""
    point = np.asarray(theta, dtype=np.float64)
    freqs = DEFAULT_OMEGAS if omegas is None else np.asarray(omegas, dtype=np.float64)
    a, b, c, d = partition(model, evaluate(model, point))
    magnitude = np.abs(transfer_function(a, b, c, d, freqs))
    return FrequencyResponse(
        omegas=freqs,
        magnitude=magnitude,
        theta=point,
        inside_region=bool(in_region(model, point)),
    )


# Descriptions ------------------------------------------------------------------


def _affine_text(constant: float, coefficients: FloatArray, names: list[str], digits: int) -> str:
    scale = max(1.0, abs(constant), float(np.max(np.abs(coefficients), initial=0.0)))
    terms = [
        f'{coef:+.{digits}g}*{name}'
        for coef, name in zip(coefficients, names)
        if abs(coef) > 1e-12 * scale
    ]
    if abs(constant) > 1e-12 * scale or not terms:
        terms.append(f'{constant:+.{digits}g}')
    return ''.join(terms).removeprefix('+')


def describe_model(model: AffineLpvModel, *, digits: int = 4) -> str:
    """Every entry of ``L_hat`` as an affine expression in ``theta``.

    Example:
        ``L[1,1] = 0.6337*theta1+0.7773*theta2+1``
    """
    names = [f'theta{i + 1}' for i in range(model.n_theta)]
    lines = []
    for i in range(model.m):
        for j in range(model.n):
            text = _affine_text(model.m0[i, j], model.coefficients[:, i, j], names, digits)
            lines.append(f'L[{i + 1},{j + 1}] = {text}')
    return '\n'.join(lines)


def describe_schedule(model: AffineLpvModel, sys: SystemDescription | None = None, *, digits: int = 4) -> str:
    """The scheduling map as affine combinations of the non-constant inputs.

    Coefficient-based maps are written over the entries of L, using the
    entry expressions when ``sys`` is given.
    """
    if model.map_input == 'alpha':
        names = list(sys.variable_names) if sys else [f'alpha{k + 1}' for k in range(model.gain.shape[1])]
    else:
        names = []
        for row in range(model.gain.shape[1]):
            i, j = divmod(row, model.n)
            names.append(f'({sys.entries[i][j]})' if sys else f'L[{i + 1},{j + 1}]')
    return '\n'.join(
        f'theta{k + 1} = {_affine_text(model.offset[k], model.gain[k], names, digits)}'
        for k in range(model.n_theta)
    )


# Serialization -----------------------------------------------------------------


class _Schema(BaseModel):
    model_config = ConfigDict(extra='forbid')


class DimsDocument(_Schema):
    nx: int = Field(ge=0)
    nu: int = Field(ge=0)
    ny: int = Field(ge=0)
    ntheta: int = Field(ge=1)


class MapDocument(_Schema):
    K: list[float]
    k0: list[float]
    input: MapInput = 'gamma'


class RegionDocument(_Schema):
    method: RegionMethod
    lower: list[float]
    upper: list[float]
    rotation: list[float]
    center: list[float]
    volume: float
    reference_volume: float | None = None
    enclosing_volume: float | None = None


class ProvenanceDocument(_Schema):
    singular_values: list[float]
    eta_frobenius: float | None = None
    eta_sum: float | None = None
    eta_sqsum: float | None = None
    source_digest: str = ''


class ModelDocument(_Schema):
    """Model JSON; every matrix is a row-major flat list."""

    version: int
    dims: DimsDocument
    M0: list[float]
    Mi: list[list[float]]
    map: MapDocument
    region: RegionDocument
    provenance: ProvenanceDocument


def _flat(array: FloatArray) -> list[float]:
    return [float(value) for value in np.asarray(array).reshape(-1)]


def _optional(value: float | None) -> float | None:
    return None if value is None else float(value)


def save_model(model: AffineLpvModel) -> str:
    """Serialize to JSON; floats are written with full round-trip precision."""
    region = model.region
    doc = ModelDocument(
        version=MODEL_SCHEMA_VERSION,
        dims=DimsDocument(nx=model.n_x, nu=model.n_u, ny=model.n_y, ntheta=model.n_theta),
        M0=_flat(model.m0),
        Mi=[_flat(mat) for mat in model.coefficients],
        map=MapDocument(K=_flat(model.gain), k0=_flat(model.offset), input=model.map_input),
        region=RegionDocument(
            method=region.method,
            lower=_flat(region.lower),
            upper=_flat(region.upper),
            rotation=_flat(region.rotation),
            center=_flat(region.center),
            volume=float(region.volume),
            reference_volume=_optional(region.reference_volume),
            enclosing_volume=_optional(region.enclosing_volume),
        ),
        provenance=ProvenanceDocument(
            singular_values=_flat(model.provenance.singular_values),
            eta_frobenius=_optional(model.provenance.eta_frobenius),
            eta_sum=_optional(model.provenance.eta_sum),
            eta_sqsum=_optional(model.provenance.eta_sqsum),
            source_digest=model.provenance.source_digest,
        ),
    )
    return json.dumps(doc.model_dump(mode='json'), indent=2) + '\n'


def _matrix(values: list[float], rows: int, cols: int, what: str) -> FloatArray:
    if len(values) != rows * cols:
        raise DimensionMismatchError(f'{what} has {len(values)} values, expected {rows}x{cols}')
    return np.array(values, dtype=np.float64).reshape(rows, cols)


def load_model(text: str) -> AffineLpvModel:
    """Parse model JSON.

    Raises:
        ModelSchemaError: invalid JSON, missing fields or unknown version
        DimensionMismatchError: matrix sizes disagree with ``dims``
    """
    try:
        doc = ModelDocument.model_validate_json(text)
    except ValidationError as exc:
        problems = '; '.join(f'{".".join(str(p) for p in err["loc"])}: {err["msg"]}' for err in exc.errors())
        raise ModelSchemaError(f'invalid model document: {problems}') from exc
    if doc.version != MODEL_SCHEMA_VERSION:
        raise ModelSchemaError(f'unsupported model version {doc.version} (expected {MODEL_SCHEMA_VERSION})')

    dims = doc.dims
    m, n, nt = dims.nx + dims.ny, dims.nx + dims.nu, dims.ntheta
    if len(doc.Mi) != nt:
        raise DimensionMismatchError(f'model declares n_theta = {nt} but has {len(doc.Mi)} coefficient matrices')
    n_in = m * n if doc.map.input == 'gamma' else len(doc.map.K) // max(nt, 1)
    region = SchedulingRegion(
        lower=_matrix(doc.region.lower, nt, 1, 'region.lower')[:, 0],
        upper=_matrix(doc.region.upper, nt, 1, 'region.upper')[:, 0],
        rotation=_matrix(doc.region.rotation, nt, nt, 'region.rotation'),
        center=_matrix(doc.region.center, nt, 1, 'region.center')[:, 0],
        method=doc.region.method,
        volume=doc.region.volume,
        reference_volume=doc.region.reference_volume,
        enclosing_volume=doc.region.enclosing_volume,
    )
    return AffineLpvModel(
        n_x=dims.nx,
        n_u=dims.nu,
        n_y=dims.ny,
        m0=_matrix(doc.M0, m, n, 'M0'),
        coefficients=np.stack([_matrix(mat, m, n, f'Mi[{k}]') for k, mat in enumerate(doc.Mi)]),
        gain=_matrix(doc.map.K, nt, n_in, 'map.K'),
        offset=_matrix(doc.map.k0, nt, 1, 'map.k0')[:, 0],
        region=region,
        provenance=Provenance(
            singular_values=np.array(doc.provenance.singular_values, dtype=np.float64),
            eta_frobenius=doc.provenance.eta_frobenius,
            eta_sum=doc.provenance.eta_sum,
            eta_sqsum=doc.provenance.eta_sqsum,
            source_digest=doc.provenance.source_digest,
        ),
        map_input=doc.map.input,
    )
