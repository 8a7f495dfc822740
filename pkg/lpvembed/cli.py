"""Command-line interface.

Tables and reports go to stdout; diagnostics go to stderr. Failures exit
with the code of their error family (2 config, 3 degenerate data,
4 numerical).

Run with:
    lpvembed embed --fixture example1 --order 2 --region box --out model.json
    lpvembed accuracy --fixture example2 --max-order 5
    lpvembed compare --fixture example1 --order 2 -v
"""

import sys
from collections.abc import Generator, Iterable
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
import typer
from structlog.typing import FilteringBoundLogger

from lpvembed.baseline import baseline_scheduling_pca
from lpvembed.dataset import (
    CoefficientSeries,
    Normalizer,
    TrajectoryDataset,
    build_series,
    fit_normalizer,
    normalize,
    parse_generator,
)
from lpvembed.errors import ConfigError, DimensionMismatchError, LpvEmbedError
from lpvembed.geometry import SchedulingRegion, affine_dimension, convex_hull, mvee, region_from_points
from lpvembed.log import StageMatch, configure_logging, get_logger, pipeline_stage, resolve_verbosity, verbosity_option
from lpvembed.model import (
    AffineLpvModel,
    Provenance,
    approximation_trajectories,
    assemble,
    describe_model,
    describe_schedule,
    frozen_frequency_response,
    load_model,
    rate_bounds,
    save_model,
    source_digest,
)
from lpvembed.reduction import (
    AccuracyReport,
    Decomposition,
    ReducedBasis,
    accuracy,
    decompose,
    format_report,
    reduced_coordinates,
    suggest_order,
    truncate,
)
from lpvembed.settings import RunConfig, load_config_file
from lpvembed.simulate import compare_runs, simulate_lpv, simulate_nl, write_run_csv
from lpvembed.sysdsl import SystemDescription
from lpvembed.version import __version__

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

app = typer.Typer(
    help='Affine LPV embedding with a reduced number of scheduling variables',
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)

# Shared options; None means "not given" so config-file values survive
config_option = typer.Option(None, '--config', help='key = value run configuration file')
fixture_option = typer.Option(None, '--fixture', help='Built-in example system (example1, example2)')
system_option = typer.Option(None, '--system', help='System description file')
data_option = typer.Option(None, '--data', help='Trajectory CSV (t followed by one column per variable)')
generate_option = typer.Option(None, '--generate', '-g', help="Signal generator 'name=kind:args' (repeatable)")
period_option = typer.Option(None, '--period', help='Sample period for generated data')
samples_option = typer.Option(None, '--samples', help='Sample count for generated data')
order_option = typer.Option(None, '--order', help='Number of scheduling variables (default: from --energy)')
energy_option = typer.Option(None, '--energy', help='Captured-energy threshold used when --order is not given')
region_option = typer.Option(None, '--region', help='Region strategy: auto, axis-aligned, box, ellipsoid')
eps_sigma_option = typer.Option(None, '--eps-sigma', help='Relative spread below which an entry counts as constant')
ddof_option = typer.Option(
    None,
    '--ddof',
    help="Standard deviation normalization: 0 (1/N) or 1 (1/(N-1)); default: the fixture's own, else 0",
)
tol_mvee_option = typer.Option(None, '--tol-mvee', help='Ellipsoid iteration tolerance')
box_eps_option = typer.Option(None, '--box-eps', help='Relative accuracy of the 3D box search')
seed_option = typer.Option(None, '--seed', help='Seed for the randomized 3D box orientations')


def _version_callback(value: bool) -> None:
    if value:
        sys.stdout.write(f'lpvembed {__version__}\n')
        raise typer.Exit


@app.callback()
def _root(
    version: bool = typer.Option(False, '--version', callback=_version_callback, is_eager=True),
) -> None:
    del version


@contextmanager
def _command(name: str, verbose: int) -> Generator[FilteringBoundLogger, None, None]:
    """Set up logging for one command and turn library errors into exit codes."""
    configure_logging(verbosity=resolve_verbosity(verbose=verbose), matchers=[StageMatch(command=name)])
    try:
        yield log
    except LpvEmbedError as exc:
        log.error(f'{name} failed', stage=exc.stage or 'setup', reason=exc.message)
        raise typer.Exit(exc.exit_code) from exc


def _config(config: Path | None, **flags: object) -> RunConfig:
    base = load_config_file(config) if config is not None else RunConfig()
    return base.merged(flags)


def _numbers(values: Iterable[float]) -> str:
    return ' '.join(f'{float(v):.10g}' for v in values)


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ConfigError(f'cannot write {path}: {exc.strerror}') from exc


def _read_model(path: Path) -> AffineLpvModel:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f'cannot read model {path}: {exc.strerror}') from exc
    return load_model(text)


def _parse_vector(text: str, what: str) -> FloatArray:
    try:
        return np.array([float(part) for part in text.split(',')], dtype=np.float64)
    except ValueError:
        raise ConfigError(f'{what} must be comma-separated numbers, got {text!r}') from None


# Pipeline ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Prepared:
    """Everything up to and including the decomposition."""

    system: SystemDescription
    data: TrajectoryDataset
    series: CoefficientSeries
    normalizer: Normalizer
    decomposition: Decomposition


@dataclass(frozen=True, eq=False)
class Embedding:
    basis: ReducedBasis
    report: AccuracyReport
    rho: FloatArray
    model: AffineLpvModel

    @property
    def region(self) -> SchedulingRegion:
        return self.model.region


def prepare(command: str, cfg: RunConfig) -> Prepared:
    with pipeline_stage(command, 'load'):
        system = cfg.system_description()
        data = cfg.dataset()
    log.info('stage', stage='load', detail=f'{data.n_samples} samples of {data.n_alpha} variables')

    with pipeline_stage(command, 'normalize'):
        series = build_series(system, data)
        nrm = fit_normalizer(series, cfg.eps_sigma, ddof=cfg.normalizer_ddof)
    log.info('stage', stage='normalize', detail=f'{nrm.n_active} of {nrm.n_gamma} entries vary')

    with pipeline_stage(command, 'decompose'):
        dec = decompose(normalize(nrm, series))
    log.info('stage', stage='decompose', detail=f'{dec.n_components} singular values')
    return Prepared(system=system, data=data, series=series, normalizer=nrm, decomposition=dec)


def choose_order(prep: Prepared, cfg: RunConfig) -> int:
    if cfg.order is not None:
        return cfg.order
    order = suggest_order(prep.decomposition.singular_values, cfg.energy)
    log.info('order chosen from captured energy', order=order, energy=cfg.energy)
    return order


def embed_order(command: str, prep: Prepared, cfg: RunConfig, order: int) -> Embedding:
    """Truncate, fit the region and assemble the model at one order."""
    with pipeline_stage(command, 'truncate'):
        basis = truncate(prep.decomposition, order)
        report = accuracy(basis, prep.normalizer, prep.series)
        rho = reduced_coordinates(basis, prep.normalizer, prep.series)
    log.info('stage', stage='truncate', detail=f'order {order}, eta {report.eta_frobenius:.6g}')

    with pipeline_stage(command, 'region'):
        region = region_from_points(rho, cfg.region, box_eps=cfg.box_eps, tol_mvee=cfg.tol_mvee, seed=cfg.seed)
    log.info('stage', stage='region', detail=f'{region.method}, volume {region.volume:.6g}')

    with pipeline_stage(command, 'assemble'):
        provenance = Provenance.from_report(report, source_digest(prep.system))
        model = assemble(basis, prep.normalizer, region, provenance=provenance)
    return Embedding(basis=basis, report=report, rho=rho, model=model)


def format_region(region: SchedulingRegion, *, prefix: str = 'region_') -> str:
    lines = [
        f'{prefix}method: {region.method}',
        f'{prefix}lower: {_numbers(region.lower)}',
        f'{prefix}upper: {_numbers(region.upper)}',
        f'{prefix}center: {_numbers(region.center)}',
        f'{prefix}rotation: {_numbers(region.rotation.reshape(-1))}',
        f'{prefix}volume: {region.volume:.10g}',
    ]
    if region.reference_volume is not None:
        lines.append(f'{prefix}reference_volume: {region.reference_volume:.10g}')
    if region.enclosing_volume is not None:
        lines.append(f'{prefix}enclosing_volume: {region.enclosing_volume:.10g}')
    return '\n'.join(lines)


def vertices_csv(shapes: Iterable[tuple[str, npt.ArrayLike]], d: int) -> str:
    """``kind,index,coord1..coordd`` rows, one per vertex of each named shape."""
    rows = [','.join(['kind', 'index', *(f'coord{k + 1}' for k in range(d))])]
    for kind, vertices in shapes:
        for index, vertex in enumerate(np.atleast_2d(np.asarray(vertices, dtype=np.float64))):
            rows.append(f'{kind},{index},' + ','.join(f'{v:.17g}' for v in vertex))
    return '\n'.join(rows) + '\n'


# Commands ------------------------------------------------------------------------


@app.command()
def embed(
    config: Path | None = config_option,
    fixture: str | None = fixture_option,
    system: Path | None = system_option,
    data: Path | None = data_option,
    generate: list[str] | None = generate_option,
    period: float | None = period_option,
    samples: int | None = samples_option,
    order: int | None = order_option,
    energy: float | None = energy_option,
    region: str | None = region_option,
    eps_sigma: float | None = eps_sigma_option,
    ddof: int | None = ddof_option,
    tol_mvee: float | None = tol_mvee_option,
    box_eps: float | None = box_eps_option,
    seed: int | None = seed_option,
    out: Path | None = typer.Option(None, '--out', help='Write the model JSON here'),
    describe: bool = typer.Option(False, '--describe', help='Also print L_hat(theta) and theta(L)'),
    verbose: int = verbosity_option,
) -> None:
    """Build the affine LPV model and report its accuracy and region."""
    with _command('embed', verbose):
        cfg = _config(
            config,
            fixture=fixture,
            system=system,
            data=data,
            generators=generate,
            period=period,
            samples=samples,
            order=order,
            energy=energy,
            region=region,
            eps_sigma=eps_sigma,
            ddof=ddof,
            tol_mvee=tol_mvee,
            box_eps=box_eps,
            seed=seed,
            out=out,
        ).validate()
        prep = prepare('embed', cfg)
        result = embed_order('embed', prep, cfg, choose_order(prep, cfg))
        rates = rate_bounds(result.model, prep.system, prep.data)

        if cfg.out is not None:
            _write_text(cfg.out, save_model(result.model))
            log.info('model written', path=str(cfg.out))
        else:
            log.warning('no --out given; the model is not saved')

        blocks = [
            format_report(result.report),
            format_region(result.region),
            f'rate_lower: {_numbers(rates.lower)}\nrate_upper: {_numbers(rates.upper)}',
        ]
        if describe:
            blocks.extend([describe_model(result.model), describe_schedule(result.model, prep.system)])
        sys.stdout.write('\n'.join(blocks) + '\n')


@app.command('accuracy')
def accuracy_command(
    config: Path | None = config_option,
    fixture: str | None = fixture_option,
    system: Path | None = system_option,
    data: Path | None = data_option,
    generate: list[str] | None = generate_option,
    period: float | None = period_option,
    samples: int | None = samples_option,
    eps_sigma: float | None = eps_sigma_option,
    ddof: int | None = ddof_option,
    min_order: int = typer.Option(1, '--min-order', help='First order of the sweep'),
    max_order: int | None = typer.Option(None, '--max-order', help='Last order (default: every component)'),
    verbose: int = verbosity_option,
) -> None:
    """Accuracy index for a range of orders, one CSV row each."""
    with _command('accuracy', verbose):
        cfg = _config(
            config,
            fixture=fixture,
            system=system,
            data=data,
            generators=generate,
            period=period,
            samples=samples,
            eps_sigma=eps_sigma,
            ddof=ddof,
        ).validate()
        prep = prepare('accuracy', cfg)
        last = prep.decomposition.n_components if max_order is None else max_order
        orders = range(min_order, last + 1)
        if not orders:
            raise ConfigError(f'empty order range {min_order}..{last}')

        rows = ['order,eta_frobenius,eta_sum,eta_sqsum,captured_energy_ratio']
        with pipeline_stage('accuracy', 'sweep'):
            for n in orders:
                report = accuracy(truncate(prep.decomposition, n), prep.normalizer, prep.series)
                rows.append(
                    f'{n},{report.eta_frobenius:.10g},{report.eta_sum:.10g},'
                    f'{report.eta_sqsum:.10g},{report.captured_energy_ratio:.10g}',
                )
        sys.stdout.write('\n'.join(rows) + '\n')


def _trajectory_table(prep: Prepared, model: AffineLpvModel) -> tuple[FloatArray, list[str]]:
    approx = approximation_trajectories(model, prep.series)
    rows = prep.normalizer.active_rows
    header = ['t']
    for row in rows:
        i, j = prep.series.index_map[int(row)]
        label = f'L{i + 1}_{j + 1}'
        header.extend([label, f'{label}_hat'])
    columns = [prep.data.times]
    for row in rows:
        columns.extend([prep.series.data[row], approx.data[row]])
    return np.column_stack(columns), header


@app.command()
def compare(
    config: Path | None = config_option,
    fixture: str | None = fixture_option,
    system: Path | None = system_option,
    data: Path | None = data_option,
    generate: list[str] | None = generate_option,
    period: float | None = period_option,
    samples: int | None = samples_option,
    order: int | None = order_option,
    energy: float | None = energy_option,
    region: str | None = region_option,
    eps_sigma: float | None = eps_sigma_option,
    ddof: int | None = ddof_option,
    tol_mvee: float | None = tol_mvee_option,
    box_eps: float | None = box_eps_option,
    seed: int | None = seed_option,
    trajectories_out: Path | None = typer.Option(
        None,
        '--trajectories-out',
        help='CSV of every varying entry next to its model approximation',
    ),
    verbose: int = verbosity_option,
) -> None:
    """Coefficient-based reduction against PCA on the scheduling trajectories."""
    with _command('compare', verbose):
        cfg = _config(
            config,
            fixture=fixture,
            system=system,
            data=data,
            generators=generate,
            period=period,
            samples=samples,
            order=order,
            energy=energy,
            region=region,
            eps_sigma=eps_sigma,
            ddof=ddof,
            tol_mvee=tol_mvee,
            box_eps=box_eps,
            seed=seed,
        ).validate()
        prep = prepare('compare', cfg)
        n = choose_order(prep, cfg)
        proposed = embed_order('compare', prep, cfg, n)
        with pipeline_stage('compare', 'baseline'):
            baseline = baseline_scheduling_pca(
                prep.data,
                prep.system,
                n,
                prep.normalizer,
                series=prep.series,
                eps_sigma=cfg.eps_sigma,
            )

        if trajectories_out is not None:
            table, header = _trajectory_table(prep, proposed.model)
            try:
                trajectories_out.parent.mkdir(parents=True, exist_ok=True)
                np.savetxt(trajectories_out, table, fmt='%.17g', delimiter=',', header=','.join(header), comments='')
            except OSError as exc:
                raise ConfigError(f'cannot write {trajectories_out}: {exc.strerror}') from exc

        rows = ['method,order,eta_frobenius,eta_sum,eta_sqsum,region_volume,reference_volume']
        for name, report, reg in (
            ('proposed', proposed.report, proposed.region),
            ('baseline', baseline.report, baseline.region),
        ):
            rows.append(
                f'{name},{n},{report.eta_frobenius:.10g},{report.eta_sum:.10g},{report.eta_sqsum:.10g},'
                f'{reg.volume:.10g},{reg.reference_volume or reg.volume:.10g}',
            )
        sys.stdout.write('\n'.join(rows) + '\n')


def _input_signal(specs: list[str], n_u: int, h: float, steps: int) -> FloatArray:
    """Input table from ``u<j>=kind:args`` generators; missing inputs are zero."""
    table = np.zeros((steps, n_u))
    t = np.arange(steps) * h
    for text in specs:
        gen = parse_generator(text)
        if not (gen.name.startswith('u') and gen.name[1:].isdigit() and 1 <= int(gen.name[1:]) <= n_u):
            raise ConfigError(f'input generators must be named u1..u{n_u}, got {gen.name!r}')
        table[:, int(gen.name[1:]) - 1] = gen.values(t)
    return table


@app.command()
def simulate(
    model_path: Path = typer.Option(..., '--model', help='Model JSON written by embed'),
    config: Path | None = config_option,
    fixture: str | None = fixture_option,
    system: Path | None = system_option,
    x0: str = typer.Option(..., '--x0', help='Initial state, comma separated'),
    inputs: list[str] | None = typer.Option(None, '--input', '-u', help="Input generator 'u1=kind:args'"),
    step: float = typer.Option(1e-3, '--step', help='Integration step'),
    steps: int = typer.Option(100, '--steps', help='Number of steps'),
    out_dir: Path | None = typer.Option(None, '--out-dir', help='Write nl.csv and lpv.csv here'),
    verbose: int = verbosity_option,
) -> None:
    """Simulate the nonlinear system and its self-scheduled LPV model side by side."""
    with _command('simulate', verbose):
        cfg = _config(config, fixture=fixture, system=system).validate(require_data=False)
        with pipeline_stage('simulate', 'load'):
            description = cfg.system_description()
            model = _read_model(model_path)
        if model.provenance.source_digest and model.provenance.source_digest != source_digest(description):
            log.warning('model was built from a different system description', model=str(model_path))

        start = _parse_vector(x0, 'x0')
        if start.shape != (description.n_x,):
            raise DimensionMismatchError(f'x0 must have {description.n_x} values, got {start.size}')
        signal = _input_signal(inputs or [], description.n_u, step, steps)

        with pipeline_stage('simulate', 'integrate'):
            nl_run = simulate_nl(description, start, signal, step, steps, raise_on_divergence=True)
            lpv_run = simulate_lpv(model, description, start, signal, step, steps, raise_on_divergence=True)
        comparison = compare_runs(nl_run, lpv_run)

        if out_dir is not None:
            try:
                out_dir.mkdir(parents=True, exist_ok=True)
                write_run_csv(nl_run, out_dir / 'nl.csv')
                write_run_csv(lpv_run, out_dir / 'lpv.csv')
            except OSError as exc:
                raise ConfigError(f'cannot write runs to {out_dir}: {exc.strerror}') from exc

        rows = ['channel,rmse']
        rows.extend(f'x{i + 1},{v:.10g}' for i, v in enumerate(comparison.state_rmse))
        rows.extend(f'y{i + 1},{v:.10g}' for i, v in enumerate(comparison.output_rmse))
        sys.stdout.write('\n'.join(rows) + '\n')


@app.command()
def freqresp(
    model_path: Path = typer.Option(..., '--model', help='Model JSON written by embed'),
    thetas: list[str] | None = typer.Option(None, '--theta', help='Frozen scheduling value (default: region centre)'),
    omega_min: float = typer.Option(1e-2, '--omega-min', help='Lowest frequency, rad/s'),
    omega_max: float = typer.Option(1e3, '--omega-max', help='Highest frequency, rad/s'),
    points: int = typer.Option(400, '--points', help='Log-spaced grid size'),
    out: Path | None = typer.Option(None, '--out', help='Write the CSV here instead of stdout'),
    verbose: int = verbosity_option,
) -> None:
    """Magnitude responses of the model frozen at fixed scheduling values."""
    with _command('freqresp', verbose):
        if not 0 < omega_min < omega_max or points < 2:
            raise ConfigError('frequency grid needs 0 < omega-min < omega-max and at least 2 points')
        with pipeline_stage('freqresp', 'load'):
            model = _read_model(model_path)
        region = model.region
        frozen = [_parse_vector(text, 'theta') for text in thetas or []] or [(region.lower + region.upper) / 2]
        omegas = np.logspace(np.log10(omega_min), np.log10(omega_max), points)

        channels = [f'y{i + 1}_u{j + 1}' for i in range(model.n_y) for j in range(model.n_u)]
        header = [*(f'theta{k + 1}' for k in range(model.n_theta)), 'inside_region', 'omega', *channels]
        rows = [','.join(header)]
        with pipeline_stage('freqresp', 'response'):
            for theta in frozen:
                response = frozen_frequency_response(model, theta, omegas)
                lead = f'{_numbers(theta).replace(" ", ",")},{int(response.inside_region)}'
                magnitude = response.magnitude.reshape(-1, omegas.size)
                for k, omega in enumerate(omegas):
                    rows.append(f'{lead},{omega:.10g},' + ','.join(f'{v:.10g}' for v in magnitude[:, k]))
        text = '\n'.join(rows) + '\n'
        if out is not None:
            _write_text(out, text)
        else:
            sys.stdout.write(text)


@app.command('region-debug')
def region_debug(
    config: Path | None = config_option,
    fixture: str | None = fixture_option,
    system: Path | None = system_option,
    data: Path | None = data_option,
    generate: list[str] | None = generate_option,
    period: float | None = period_option,
    samples: int | None = samples_option,
    order: int | None = order_option,
    energy: float | None = energy_option,
    region: str | None = region_option,
    eps_sigma: float | None = eps_sigma_option,
    ddof: int | None = ddof_option,
    tol_mvee: float | None = tol_mvee_option,
    box_eps: float | None = box_eps_option,
    seed: int | None = seed_option,
    points_out: Path | None = typer.Option(None, '--points-out', help='CSV of rho and theta per sample'),
    vertices_out: Path | None = typer.Option(
        None,
        '--vertices-out',
        help='CSV of hull vertices, box corners and ellipsoid axis ends in rho coordinates',
    ),
    verbose: int = verbosity_option,
) -> None:
    """Inspect the reduced scheduling cloud and the fitted region."""
    with _command('region-debug', verbose):
        cfg = _config(
            config,
            fixture=fixture,
            system=system,
            data=data,
            generators=generate,
            period=period,
            samples=samples,
            order=order,
            energy=energy,
            region=region,
            eps_sigma=eps_sigma,
            ddof=ddof,
            tol_mvee=tol_mvee,
            box_eps=box_eps,
            seed=seed,
        ).validate()
        prep = prepare('region-debug', cfg)
        result = embed_order('region-debug', prep, cfg, choose_order(prep, cfg))
        rho = result.rho
        theta = result.region.transform(rho)
        d = rho.shape[0]

        lines = [f'dimension: {d}', f'affine_dimension: {affine_dimension(rho.T)}']
        full = affine_dimension(rho.T) == d
        hull = convex_hull(rho.T) if d in (2, 3) and full else None
        if hull is not None:
            lines.append(f'hull_vertices: {hull.vertex_indices.size}')
            lines.append(f'hull_volume: {hull.volume:.10g}')
        reference = region_from_points(rho, 'axis-aligned')
        lines.extend([format_region(reference, prefix='reference_'), format_region(result.region)])
        inside = result.region.contains(theta)
        lines.append(f'samples_inside: {int(inside.sum())}/{inside.size}')

        if points_out is not None:
            header = ['t', *(f'rho{k + 1}' for k in range(d)), *(f'theta{k + 1}' for k in range(d))]
            table = np.column_stack([prep.data.times, rho.T, theta.T])
            try:
                points_out.parent.mkdir(parents=True, exist_ok=True)
                np.savetxt(points_out, table, fmt='%.17g', delimiter=',', header=','.join(header), comments='')
            except OSError as exc:
                raise ConfigError(f'cannot write {points_out}: {exc.strerror}') from exc
        if vertices_out is not None:
            shapes = [('box', result.region.restore(result.region.vertices.T).T)]
            if hull is not None:
                shapes.insert(0, ('hull', hull.vertices))
            if d >= 2 and full:
                shapes.append(('ellipsoid', mvee(rho.T, cfg.tol_mvee).axis_endpoints()))
            _write_text(vertices_out, vertices_csv(shapes, d))
        sys.stdout.write('\n'.join(lines) + '\n')


def main() -> None:
    app()


if __name__ == '__main__':
    main()
