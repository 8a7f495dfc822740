"""Tests for model assembly, evaluation, serialization and frozen responses."""

import json
import math
from collections.abc import Callable

import numpy as np
import pytest

from lpvembed.dataset import devectorize
from lpvembed.errors import DimensionMismatchError, FrequencyResponseError, ModelSchemaError
from lpvembed.geometry import SchedulingRegion, axis_aligned_bounds
from lpvembed.model import (
    AffineLpvModel,
    Provenance,
    approximation_trajectories,
    assemble,
    describe_model,
    describe_schedule,
    embedding_error,
    evaluate,
    frozen_frequency_response,
    in_region,
    load_model,
    rate_bounds,
    save_model,
    schedule,
    schedule_alpha,
    schedule_series,
    trajectory_rate_bounds,
    transfer_function,
    weighted_error,
)
from lpvembed.reduction import accuracy, reduced_coordinates, truncate

from .conftest import Pipeline, build_model


_model = build_model


def _toy_model(m0: np.ndarray, mi: np.ndarray, lower: float = -1.0, upper: float = 1.0) -> AffineLpvModel:
    """One-state, one-input, one-output model with a single scheduling variable."""
    region = SchedulingRegion(
        lower=np.array([lower]),
        upper=np.array([upper]),
        rotation=np.eye(1),
        center=np.array([(lower + upper) / 2]),
        method='axis-aligned',
        volume=upper - lower,
    )
    return AffineLpvModel(
        n_x=1,
        n_u=1,
        n_y=1,
        m0=m0,
        coefficients=mi[np.newaxis],
        gain=np.zeros((1, 4)),
        offset=np.zeros(1),
        region=region,
        provenance=Provenance(singular_values=np.array([1.0])),
    )


@pytest.mark.parametrize('strategy', ['axis-aligned', 'box'])
def test_full_order_embedding_is_exact(example2: Pipeline, strategy: str) -> None:
    """At the data rank the model reproduces L along the data to round-off."""
    model = _model(example2, 2, strategy)
    scale = np.max(np.abs(example2.series.data))
    assert embedding_error(model, example2.series) <= 1e-9 * scale


def test_weighted_error_matches_accuracy_index(example1: Pipeline) -> None:
    basis = truncate(example1.decomposition, 2)
    report = accuracy(basis, example1.normalizer, example1.series)
    for strategy in ('axis-aligned', 'box'):
        model = _model(example1, 2, strategy)
        assert weighted_error(model, example1.normalizer, example1.series) == pytest.approx(
            report.eta_frobenius,
            rel=1e-9,
        )


def test_axis_aligned_region_keeps_rho(example2: Pipeline) -> None:
    basis = truncate(example2.decomposition, 2)
    rho = reduced_coordinates(basis, example2.normalizer, example2.series)
    model = _model(example2, 2, 'axis-aligned')
    np.testing.assert_allclose(schedule(model, example2.series.data), rho, atol=1e-10)
    active = example2.normalizer.active_rows
    np.testing.assert_allclose(model.m0.reshape(-1)[active], example2.normalizer.means[active], atol=1e-12)


def test_rotated_region_schedules_inside(example1: Pipeline) -> None:
    model = _model(example1, 2, 'box')
    theta = schedule_series(model, example1.system, example1.data)
    assert np.all(model.region.contains(theta))


def test_schedule_alpha_matches_the_series(example1: Pipeline) -> None:
    model = _model(example1, 2, 'box')
    theta = schedule_series(model, example1.system, example1.data)
    for k in (0, 1234, 2999):
        point = schedule_alpha(model, example1.system, example1.data.samples[k])
        np.testing.assert_allclose(point, theta[:, k], atol=1e-10)
        assert bool(in_region(model, point))
    assert not bool(in_region(model, model.region.center + 1e3))


def test_constant_entries_live_in_m0(example2: Pipeline) -> None:
    model = _model(example2, 2)
    # L[2,3] = 1 everywhere; L[1,3] = 0
    assert model.m0[1, 2] == 1.0
    assert model.m0[0, 2] == 0.0
    np.testing.assert_array_equal(model.coefficients[:, 1, 2], 0.0)
    np.testing.assert_array_equal(model.gain[:, 5], 0.0)


def test_evaluate_matches_self_scheduling(example2: Pipeline) -> None:
    model = _model(example2, 2)
    for k in (0, 100, 314):
        theta = schedule(model, example2.series.data[:, k])
        expected = devectorize(example2.series.data[:, k], 3, 3)
        np.testing.assert_allclose(evaluate(model, theta), expected, atol=1e-10)


def test_evaluate_rejects_wrong_length(example2: Pipeline) -> None:
    with pytest.raises(DimensionMismatchError):
        evaluate(_model(example2, 2), [1.0])


def test_approximation_trajectories_shape(example1: Pipeline) -> None:
    approx = approximation_trajectories(_model(example1, 2), example1.series)
    assert approx.data.shape == example1.series.data.shape


def test_assemble_rejects_mismatched_region(example2: Pipeline) -> None:
    basis = truncate(example2.decomposition, 2)
    with pytest.raises(DimensionMismatchError):
        assemble(basis, example2.normalizer, axis_aligned_bounds(np.zeros((3, 1))))


def test_save_load_is_byte_identical(example1: Pipeline) -> None:
    text = save_model(_model(example1, 2, 'box'))
    again = load_model(text)
    assert save_model(again) == text
    np.testing.assert_array_equal(again.region.rotation, load_model(text).region.rotation)


def test_saved_document_layout(example2: Pipeline) -> None:
    doc = json.loads(save_model(_model(example2, 2)))
    assert doc['version'] == 1
    assert doc['dims'] == {'nx': 2, 'nu': 1, 'ny': 1, 'ntheta': 2}
    assert len(doc['M0']) == 9
    assert len(doc['Mi']) == 2
    assert len(doc['map']['K']) == 18
    assert doc['map']['input'] == 'gamma'
    assert len(doc['provenance']['source_digest']) == 64


@pytest.mark.parametrize(
    ('mutate', 'error'),
    [
        (lambda doc: doc.update(version=2), ModelSchemaError),
        (lambda doc: doc.pop('region'), ModelSchemaError),
        (lambda doc: doc.update(extra=1), ModelSchemaError),
        (lambda doc: doc['dims'].update(nx=-1), ModelSchemaError),
        (lambda doc: doc['M0'].pop(), DimensionMismatchError),
        (lambda doc: doc['Mi'].pop(), DimensionMismatchError),
    ],
)
def test_load_rejects_bad_documents(
    example2: Pipeline,
    mutate: Callable[[dict], object],
    error: type[Exception],
) -> None:
    doc = json.loads(save_model(_model(example2, 2)))
    mutate(doc)
    with pytest.raises(error):
        load_model(json.dumps(doc))


def test_load_rejects_invalid_json() -> None:
    with pytest.raises(ModelSchemaError):
        load_model('{not json')


def test_first_order_lag_response() -> None:
    """x' = -x + u, y = x has |G(j w)| = 1/sqrt(1 + w^2)."""
    model = _toy_model(np.array([[-1.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2)))
    omegas = np.array([0.01, 1.0, 10.0, 100.0])
    response = frozen_frequency_response(model, [0.0], omegas)
    np.testing.assert_allclose(response.magnitude[0, 0], 1 / np.sqrt(1 + omegas**2), rtol=1e-12)
    assert response.inside_region


def test_response_depends_on_theta() -> None:
    # a(theta) = -1 - theta
    model = _toy_model(np.array([[-1.0, 1.0], [1.0, 0.0]]), np.array([[-1.0, 0.0], [0.0, 0.0]]))
    response = frozen_frequency_response(model, [1.0], np.array([0.0]))
    assert response.magnitude[0, 0, 0] == pytest.approx(0.5)


def test_response_outside_region_is_flagged() -> None:
    model = _toy_model(np.array([[-1.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2)))
    response = frozen_frequency_response(model, [5.0], np.array([1.0]))
    assert not response.inside_region


def test_pole_on_the_grid() -> None:
    """x' = [[0, 1], [-1, 0]] x has poles at +-j."""
    a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    b = np.array([[0.0], [1.0]])
    c = np.array([[1.0, 0.0]])
    d = np.zeros((1, 1))
    with pytest.raises(FrequencyResponseError) as excinfo:
        transfer_function(a, b, c, d, np.array([0.5, 1.0, 2.0]))
    assert excinfo.value.frequencies == [1.0]
    assert excinfo.value.exit_code == 4


def test_static_system_response() -> None:
    response = transfer_function(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), np.array([[2.0]]), [1.0, 2.0])
    np.testing.assert_array_equal(np.abs(response), [[[2.0, 2.0]]])


def test_trajectory_rate_bounds() -> None:
    t = np.linspace(0, 1, 1001)
    bounds = trajectory_rate_bounds(np.vstack([np.sin(2 * math.pi * t), 3 * t]), t[1] - t[0])
    np.testing.assert_allclose(bounds.lower, [-2 * math.pi, 3.0], rtol=1e-4)
    np.testing.assert_allclose(bounds.upper, [2 * math.pi, 3.0], rtol=1e-4)


def test_rate_bounds_cover_the_data(example1: Pipeline) -> None:
    model = _model(example1, 2, 'box')
    bounds = rate_bounds(model, example1.system, example1.data)
    assert np.all(bounds.lower < 0)
    assert np.all(bounds.upper > 0)


def test_describe_model(example2: Pipeline) -> None:
    model = _model(example2, 2)
    lines = describe_model(model).splitlines()
    assert len(lines) == 9
    assert lines[5] == 'L[2,3] = 1'
    assert lines[2] == 'L[1,3] = 0'
    assert 'theta1' in lines[0]
    assert 'theta2' in lines[0]


def test_describe_schedule_uses_entry_expressions(example2: Pipeline) -> None:
    model = _model(example2, 2)
    text = describe_schedule(model, example2.system)
    assert text.startswith('theta1 = ')
    assert '(2*sin(x1)+1)' in text
    assert '(3*x1+5)' in text
    assert 'L[2,3]' not in describe_schedule(model)
