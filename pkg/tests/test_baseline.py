"""Tests for the scheduling-trajectory PCA baseline."""

import numpy as np
import pytest

from lpvembed.baseline import baseline_scheduling_pca
from lpvembed.errors import OrderOutOfRangeError
from lpvembed.model import evaluate, schedule_series
from lpvembed.reduction import accuracy, truncate

from .conftest import Pipeline


def test_full_order_is_exact_for_affine_systems(example1: Pipeline) -> None:
    """L is affine in alpha, so keeping every alpha direction loses nothing."""
    result = baseline_scheduling_pca(example1.data, example1.system, 3, example1.normalizer, series=example1.series)
    scale = example1.decomposition.singular_values[0]
    assert result.report.eta_frobenius <= 1e-9 * scale


def test_model_schedules_from_alpha(example1: Pipeline) -> None:
    result = baseline_scheduling_pca(example1.data, example1.system, 2, example1.normalizer)
    assert result.model.map_input == 'alpha'
    assert result.trajectory.shape == (2, example1.data.n_samples)
    theta = schedule_series(result.model, example1.system, example1.data)
    np.testing.assert_allclose(theta, result.trajectory, atol=1e-10)
    assert np.all(result.region.contains(theta))
    assert result.region.method == 'axis-aligned'


def test_model_matrices_give_the_reported_error(example1: Pipeline) -> None:
    result = baseline_scheduling_pca(example1.data, example1.system, 2, example1.normalizer)
    fitted = np.stack([evaluate(result.model, z).reshape(-1) for z in result.trajectory.T], axis=1)
    rows = example1.normalizer.active_rows
    residual = (example1.series.data[rows] - fitted[rows]) / example1.normalizer.stds[rows, np.newaxis]
    assert np.linalg.norm(residual) == pytest.approx(result.report.eta_frobenius, rel=1e-9)


@pytest.mark.parametrize('order', [1, 2])
def test_coefficient_reduction_is_never_worse(example1: Pipeline, order: int) -> None:
    """Both residuals have rank ``order``; the truncated SVD is the best such fit."""
    baseline = baseline_scheduling_pca(example1.data, example1.system, order, example1.normalizer)
    proposed = accuracy(truncate(example1.decomposition, order), example1.normalizer, example1.series)
    assert proposed.eta_frobenius <= baseline.report.eta_frobenius * (1 + 1e-9)


def test_eta_sum_is_the_nuclear_norm(example2: Pipeline) -> None:
    result = baseline_scheduling_pca(example2.data, example2.system, 1, example2.normalizer)
    report = result.report
    assert report.eta_sqsum == pytest.approx(report.eta_frobenius, rel=1e-12)
    assert report.eta_sum >= report.eta_sqsum
    assert report.n_rho == 1
    assert report.captured_energy_ratio == 1.0


@pytest.mark.parametrize('order', [0, 4])
def test_order_out_of_range(example1: Pipeline, order: int) -> None:
    with pytest.raises(OrderOutOfRangeError, match=r'1\.\.3'):
        baseline_scheduling_pca(example1.data, example1.system, order, example1.normalizer)


def test_normalizer_defaults_to_the_coefficient_series(example1: Pipeline) -> None:
    default = baseline_scheduling_pca(example1.data, example1.system, 2)
    explicit = baseline_scheduling_pca(example1.data, example1.system, 2, example1.normalizer)
    assert default.report.eta_frobenius == pytest.approx(explicit.report.eta_frobenius, rel=1e-12)
    np.testing.assert_allclose(default.model.gain, explicit.model.gain, rtol=1e-12)
