"""lpvembed - affine LPV embedding of nonlinear state-space models.

Pipeline:
    sys = parse_system(text)
    series = build_series(sys, data)
    nrm = fit_normalizer(series)
    basis = truncate(decompose(normalize(nrm, series)), n_theta)
    rho = reduced_coordinates(basis, nrm, series)
    model = assemble(basis, nrm, region_from_points(rho))
"""

from lpvembed.baseline import BaselineResult, baseline_scheduling_pca
from lpvembed.dataset import (
    CoefficientSeries,
    Normalizer,
    SignalGenerator,
    TrajectoryDataset,
    build_series,
    denormalize,
    fit_normalizer,
    generate_trajectories,
    load_trajectories,
    normalize,
    parse_generator,
    save_trajectories,
)
from lpvembed.errors import (
    ConfigError,
    DegenerateDataError,
    LpvEmbedError,
    NumericalError,
)
from lpvembed.fixtures import Fixture, PublishedValue, fixture
from lpvembed.geometry import (
    Ellipsoid,
    OrientedBox,
    SchedulingRegion,
    axis_aligned_bounds,
    convex_hull,
    ellipsoid_axis_align,
    kabsch_align,
    min_area_rectangle,
    min_volume_box3,
    mvee,
    region_from_points,
)
from lpvembed.model import (
    AffineLpvModel,
    approximation_trajectories,
    assemble,
    describe_model,
    describe_schedule,
    evaluate,
    frozen_frequency_response,
    load_model,
    rate_bounds,
    save_model,
    schedule,
)
from lpvembed.reduction import (
    AccuracyReport,
    Decomposition,
    ReducedBasis,
    accuracy,
    decompose,
    reduced_coordinates,
    suggest_order,
    truncate,
)
from lpvembed.simulate import SimulationRun, StateFeedback, compare_runs, simulate_lpv, simulate_nl
from lpvembed.sysdsl import ExpressionTree, SystemDescription, eval_matrix, parse_expression, parse_system
from lpvembed.version import __version__

__all__ = [
    'AccuracyReport',
    'AffineLpvModel',
    'BaselineResult',
    'CoefficientSeries',
    'ConfigError',
    'Decomposition',
    'DegenerateDataError',
    'Ellipsoid',
    'ExpressionTree',
    'Fixture',
    'LpvEmbedError',
    'Normalizer',
    'NumericalError',
    'OrientedBox',
    'PublishedValue',
    'ReducedBasis',
    'SchedulingRegion',
    'SignalGenerator',
    'SimulationRun',
    'StateFeedback',
    'SystemDescription',
    'TrajectoryDataset',
    '__version__',
    'accuracy',
    'approximation_trajectories',
    'assemble',
    'axis_aligned_bounds',
    'baseline_scheduling_pca',
    'build_series',
    'compare_runs',
    'convex_hull',
    'decompose',
    'denormalize',
    'describe_model',
    'describe_schedule',
    'ellipsoid_axis_align',
    'eval_matrix',
    'evaluate',
    'fit_normalizer',
    'fixture',
    'frozen_frequency_response',
    'generate_trajectories',
    'kabsch_align',
    'load_model',
    'load_trajectories',
    'min_area_rectangle',
    'min_volume_box3',
    'mvee',
    'normalize',
    'parse_expression',
    'parse_generator',
    'parse_system',
    'rate_bounds',
    'reduced_coordinates',
    'region_from_points',
    'save_model',
    'save_trajectories',
    'schedule',
    'simulate_lpv',
    'simulate_nl',
    'suggest_order',
    'truncate',
]
