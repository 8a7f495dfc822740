"""Comparison baseline: PCA on the scheduling trajectories themselves.

The alpha trajectories are normalized and truncated by SVD to ``n`` reduced
variables ``z``; the coefficient matrices are then fitted to ``[z; 1]`` by
least squares over the data set. Its accuracy uses the same weighting as the
coefficient-based reduction. Because the residual is not the truncation of
a single SVD, ``eta_sum`` here is the nuclear norm of the weighted residual
and ``eta_sqsum`` its Frobenius norm.
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from lpvembed.dataset import (
    DEFAULT_EPS_SIGMA,
    CoefficientSeries,
    Normalizer,
    TrajectoryDataset,
    aligned_samples,
    build_series,
    devectorize,
    fit_normalizer,
)
from lpvembed.errors import OrderOutOfRangeError
from lpvembed.geometry import SchedulingRegion, axis_aligned_bounds
from lpvembed.log import get_logger
from lpvembed.model import AffineLpvModel, Provenance, source_digest
from lpvembed.reduction import AccuracyReport, fix_signs
from lpvembed.sysdsl import SystemDescription

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class BaselineResult:
    model: AffineLpvModel
    report: AccuracyReport
    trajectory: FloatArray  # (n, N) reduced scheduling z

    @property
    def region(self) -> SchedulingRegion:
        return self.model.region


def baseline_scheduling_pca(
    data: TrajectoryDataset,
    sys: SystemDescription,
    n: int,
    nrm: Normalizer | None = None,
    *,
    series: CoefficientSeries | None = None,
    eps_sigma: float = DEFAULT_EPS_SIGMA,
) -> BaselineResult:
    """Reduce alpha by PCA and fit an affine model in the reduced variables.

    ``nrm`` is the coefficient normalizer of the main path; its weighting
    defines the accuracy index so both methods are scored alike. Without one
    the coefficients are normalized afresh with ``eps_sigma``.

    Raises:
        OrderOutOfRangeError: ``n`` outside ``1..(non-constant alpha count)``
    """
    if series is None:
        series = build_series(sys, data)
    if nrm is None:
        nrm = fit_normalizer(series, eps_sigma)
    alpha = aligned_samples(sys, data).T
    means = alpha.mean(axis=1)
    stds = alpha.std(axis=1)
    active = np.flatnonzero(stds >= eps_sigma * np.maximum(1.0, np.abs(means)))
    if not 1 <= n <= active.size:
        raise OrderOutOfRangeError(f'baseline order {n} outside the available range 1..{active.size}')

    scaled = (alpha[active] - means[active, np.newaxis]) / stds[active, np.newaxis]
    u, s, _ = np.linalg.svd(scaled, full_matrices=False)
    basis = fix_signs(u[:, :n])
    z = basis.T @ scaled

    regressors = np.vstack([z, np.ones(z.shape[1])])
    solution, _, rank, _ = np.linalg.lstsq(regressors.T, series.data.T, rcond=None)
    if rank < regressors.shape[0]:
        log.warning('baseline regression is rank deficient; using the minimum-norm solution', rank=int(rank))
    coefficients = solution.T  # (n_gamma, n + 1)
    fitted = coefficients @ regressors

    rows = nrm.active_rows
    residual = (series.data[rows] - fitted[rows]) / nrm.stds[rows, np.newaxis]
    residual_sv = np.linalg.svd(residual, compute_uv=False) if residual.size else np.zeros(0)
    total = float(np.sum(s**2))
    report = AccuracyReport(
        singular_values=s,
        n_rho=n,
        eta_frobenius=float(np.linalg.norm(residual)),
        eta_sum=float(np.sum(residual_sv)),
        eta_sqsum=float(np.sqrt(np.sum(residual_sv**2))),
        captured_energy_ratio=min(1.0, float(np.sum(s[:n] ** 2)) / total) if total > 0 else 1.0,
        per_entry_rmse=np.sqrt(np.mean((series.data - fitted) ** 2, axis=1)),
    )

    gain = np.zeros((n, data.n_alpha))
    gain[:, active] = basis.T / stds[active]
    offset = -gain @ means
    m, cols = series.m, series.n
    model = AffineLpvModel(
        n_x=series.n_x,
        n_u=series.n_u,
        n_y=series.n_y,
        m0=devectorize(coefficients[:, n], m, cols),
        coefficients=np.stack([devectorize(coefficients[:, i], m, cols) for i in range(n)]),
        gain=gain,
        offset=offset,
        region=axis_aligned_bounds(z.T),
        provenance=Provenance.from_report(report, source_digest(sys)),
        map_input='alpha',
    )
    log.debug('baseline fitted', n=n, eta_frobenius=report.eta_frobenius, eta_sum=report.eta_sum)
    return BaselineResult(model=model, report=report, trajectory=z)
