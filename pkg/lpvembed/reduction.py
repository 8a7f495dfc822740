"""Principal components of the normalized coefficient trajectories.

The accuracy index is reported three ways. ``eta_frobenius`` is the weighted
Frobenius norm of the coefficient residual, computed directly. By the
Eckart-Young theorem it equals ``eta_sqsum``, the root-sum-of-squares of the
discarded singular values. ``eta_sum`` is their plain sum, which some
published comparisons quote as the same quantity; it is an upper bound of
the other two.
"""

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from lpvembed.dataset import CoefficientSeries, Normalizer, denormalize, normalize
from lpvembed.errors import (
    ConfigError,
    DegenerateDataError,
    DimensionMismatchError,
    NoActiveRowsError,
    NumericalError,
    OrderOutOfRangeError,
)
from lpvembed.log import get_logger

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

# Singular values below this fraction of the largest count as zero
RANK_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Thin SVD ``normalized = U diag(s) Vt``."""

    left_vectors: FloatArray
    singular_values: FloatArray
    right_vectors: FloatArray

    @property
    def n_components(self) -> int:
        return int(self.singular_values.shape[0])

    def rank(self, rtol: float = RANK_RTOL) -> int:
        if not self.n_components or self.singular_values[0] == 0:
            return 0
        return int(np.count_nonzero(self.singular_values > rtol * self.singular_values[0]))


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    """Leading left singular vectors, each with its largest-magnitude entry positive."""

    u_rho: FloatArray
    singular_values: FloatArray
    n_rho: int


@dataclass(frozen=True, eq=False)
class AccuracyReport:
    singular_values: FloatArray
    n_rho: int
    eta_frobenius: float
    eta_sum: float
    eta_sqsum: float
    captured_energy_ratio: float
    per_entry_rmse: FloatArray

    @property
    def eta(self) -> float:
        """The accuracy index: the directly computed weighted Frobenius norm."""
        return self.eta_frobenius


def decompose(normalized: npt.ArrayLike) -> Decomposition:
    """Thin SVD of the normalized data matrix (active rows only).

    Raises:
        NoActiveRowsError: the matrix has no rows
        NumericalError: non-finite entries
    """
    arr = np.asarray(normalized, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise NoActiveRowsError('no active coefficient rows: every entry of L is constant over the data')
    if not np.all(np.isfinite(arr)):
        raise NumericalError('normalized data contain non-finite values')
    u, s, vt = np.linalg.svd(arr, full_matrices=False)
    log.debug('decomposed', shape=list(arr.shape), singular_values=s)
    return Decomposition(left_vectors=u, singular_values=s, right_vectors=vt)


def fix_signs(vectors: FloatArray) -> FloatArray:
    """Flip columns so the entry of largest magnitude in each is positive."""
    out = np.array(vectors, dtype=np.float64)
    if out.size == 0:
        return out
    pivots = np.argmax(np.abs(out), axis=0)
    signs = np.sign(out[pivots, np.arange(out.shape[1])])
    signs[signs == 0] = 1.0
    return out * signs


def truncate(dec: Decomposition, n_rho: int) -> ReducedBasis:
    """Keep the first ``n_rho`` left singular vectors.

    Raises:
        OrderOutOfRangeError: ``n_rho`` outside ``1..n_components``
    """
    if not 1 <= n_rho <= dec.n_components:
        raise OrderOutOfRangeError(f'order {n_rho} outside the available range 1..{dec.n_components}')
    return ReducedBasis(
        u_rho=fix_signs(dec.left_vectors[:, :n_rho]),
        singular_values=dec.singular_values,
        n_rho=n_rho,
    )


def _check_basis(basis: ReducedBasis, nrm: Normalizer) -> None:
    if basis.u_rho.shape[0] != nrm.n_active:
        raise DimensionMismatchError(
            f'basis has {basis.u_rho.shape[0]} rows, normalizer has {nrm.n_active} active rows',
        )


def reduced_coordinates(
    basis: ReducedBasis,
    nrm: Normalizer,
    series: CoefficientSeries | npt.ArrayLike,
) -> FloatArray:
    """``rho = U_rho^T N(Gamma)`` for every column; shape ``(n_rho, N)``."""
    _check_basis(basis, nrm)
    return basis.u_rho.T @ normalize(nrm, series)


def _report(
    singular_values: FloatArray,
    n_rho: int,
    weighted_residual: FloatArray,
    rmse: FloatArray,
) -> AccuracyReport:
    discarded = singular_values[n_rho:]
    total = float(np.sum(singular_values**2))
    captured = float(np.sum(singular_values[:n_rho] ** 2)) / total if total > 0 else 1.0
    return AccuracyReport(
        singular_values=singular_values,
        n_rho=n_rho,
        eta_frobenius=float(np.linalg.norm(weighted_residual)),
        eta_sum=float(np.sum(discarded)),
        eta_sqsum=float(np.sqrt(np.sum(discarded**2))),
        captured_energy_ratio=min(1.0, captured),
        per_entry_rmse=rmse,
    )


def _per_entry_rmse(nrm: Normalizer, original: FloatArray, normalized_fit: FloatArray) -> FloatArray:
    approx = denormalize(nrm, normalized_fit).data
    return np.sqrt(np.mean((original - approx) ** 2, axis=1))


def accuracy(basis: ReducedBasis, nrm: Normalizer, series: CoefficientSeries) -> AccuracyReport:
    """Accuracy of the rank-``n_rho`` reconstruction of ``series``.

    ``W (Pi - Pi_hat)`` on active rows is ``N(Pi) - U U^T N(Pi)``; constant
    rows are reproduced exactly.
    """
    _check_basis(basis, nrm)
    pbar = normalize(nrm, series)
    fit = basis.u_rho @ (basis.u_rho.T @ pbar)
    report = _report(basis.singular_values, basis.n_rho, pbar - fit, _per_entry_rmse(nrm, series.data, fit))
    log.debug(
        'accuracy',
        n_rho=basis.n_rho,
        eta_frobenius=report.eta_frobenius,
        eta_sum=report.eta_sum,
        _debug_rmse=report.per_entry_rmse,
    )
    return report


def accuracy_sweep(
    dec: Decomposition,
    nrm: Normalizer,
    series: CoefficientSeries,
    orders: Iterable[int],
) -> list[AccuracyReport]:
    """Accuracy for several truncation orders from one decomposition."""
    return [accuracy(truncate(dec, order), nrm, series) for order in orders]


def suggest_order(singular_values: npt.ArrayLike, energy_threshold: float) -> int:
    """Smallest order whose captured energy ratio reaches ``energy_threshold``.

    Example:
        >>> suggest_order([39.5533, 2.3526, 0, 0, 0], 0.99)
        1
    """
    values = np.asarray(singular_values, dtype=np.float64)
    if values.size == 0:
        raise DegenerateDataError('no singular values to choose an order from')
    if not 0 < energy_threshold <= 1:
        raise ConfigError(f'energy threshold must lie in (0, 1], got {energy_threshold}')
    energy = np.cumsum(values**2)
    if energy[-1] == 0:
        return 1
    ratios = energy / energy[-1]
    ratios[-1] = 1.0
    return int(np.searchsorted(ratios, energy_threshold, side='left')) + 1


def format_report(report: AccuracyReport, *, prefix: str = '') -> str:
    """Flat ``key: value`` text block."""
    lines = [
        f'{prefix}n_rho: {report.n_rho}',
        f'{prefix}singular_values: {" ".join(f"{s:.6g}" for s in report.singular_values)}',
        f'{prefix}eta_frobenius: {report.eta_frobenius:.6g}',
        f'{prefix}eta_sum: {report.eta_sum:.6g}',
        f'{prefix}eta_sqsum: {report.eta_sqsum:.6g}',
        f'{prefix}captured_energy_ratio: {report.captured_energy_ratio:.6g}',
    ]
    return '\n'.join(lines)
