"""Built-in example systems with their trajectory recipes and reference values."""

from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cache
from types import MappingProxyType

from lpvembed.dataset import SignalGenerator, TrajectoryDataset, generate_trajectories, parse_generator
from lpvembed.errors import ConfigError
from lpvembed.sysdsl import SystemDescription, parse_system

EXAMPLE1_SYSTEM = """\
# affine in three scheduling variables
dims: 2 1 1
vars: a1 a2 a3
bounds: a1 0 2
bounds: a2 0 5
bounds: a3 -1 1
L[1,1] = 1+2*a1
L[1,2] = 3+a2
L[1,3] = 3*a3+7*a2
L[2,1] = 2+3*a3
L[2,2] = 20*a1+5*a2
L[2,3] = 1
L[3,1] = a1
"""

EXAMPLE2_SYSTEM = """\
# nonlinear in the first state, alpha = x1
dims: 2 1 1
vars: x1
bounds: x1 -1.5707963267948966 1.5707963267948966
L[1,1] = 2*sin(x1)+1
L[1,2] = 3*x1+5
L[2,1] = x1
L[2,3] = 1
L[3,1] = sin(x1)
L[3,2] = 2*x1
"""


@dataclass(frozen=True)
class PublishedValue:
    value: float
    citation: str


@dataclass(frozen=True, eq=False)
class Fixture:
    name: str
    description: str
    system: SystemDescription
    generators: tuple[SignalGenerator, ...]
    period: float
    samples: int | None
    published_values: Mapping[str, PublishedValue] = field(default_factory=dict)
    # deviation the reference values were computed with
    ddof: int = 0

    def trajectories(self) -> TrajectoryDataset:
        return generate_trajectories(self.generators, self.period, self.samples)


def _published(**values: tuple[float, str]) -> Mapping[str, PublishedValue]:
    return MappingProxyType({key: PublishedValue(value, citation) for key, (value, citation) in values.items()})


def _example1() -> Fixture:
    region = 'Example 1, two scheduling variables'
    return Fixture(
        name='example1',
        description='two states, one input, one output; affine in three sinusoidal scheduling variables',
        system=parse_system(EXAMPLE1_SYSTEM),
        generators=(
            parse_generator('a1=expr:2*sin(10*t)^2'),
            parse_generator('a2=expr:5*cos(20*t+pi/5)^2'),
            parse_generator('a3=expr:sin(10*t)*cos(20*t)'),
        ),
        period=1e-3,
        samples=3000,
        published_values=_published(
            omega_rho_area=(31.2870, f'{region}: area of the unaligned box of the reduced coordinates'),
            omega_theta_area=(23.2186, f'{region}: area of the minimum rectangle'),
            theta1_lower=(-2.2798, f'{region}: lower bound of the first aligned variable'),
            theta1_upper=(2.6174, f'{region}: upper bound of the first aligned variable'),
            theta2_lower=(-2.3341, f'{region}: lower bound of the second aligned variable'),
            theta2_upper=(2.4071, f'{region}: upper bound of the second aligned variable'),
            centroid1=(0.1688, f'{region}: first coordinate of the rotation centre'),
            centroid2=(0.0365, f'{region}: second coordinate of the rotation centre'),
            eta_proposed=(54.4705, f'{region}: accuracy index of the coefficient-based reduction'),
            eta_baseline=(68.2811, f'{region}: accuracy index of scheduling-trajectory PCA'),
        ),
    )


def _example2() -> Fixture:
    where = 'Example 2'
    return Fixture(
        name='example2',
        description='two states, one input, one output; nonlinear in x1 over [-pi/2, pi/2]',
        system=parse_system(EXAMPLE2_SYSTEM),
        generators=(parse_generator('x1=grid:-1.5707963267948966,1.5707963267948966,0.01'),),
        period=0.01,
        samples=None,
        ddof=1,
        published_values=_published(
            sigma1=(39.5533, f'{where}: largest singular value of the normalized data'),
            sigma2=(2.3526, f'{where}: second singular value of the normalized data'),
            a11_theta1=(0.6337, f'{where}: theta1 coefficient of L[1,1]'),
            a11_theta2=(0.7773, f'{where}: theta2 coefficient of L[1,1]'),
            a12_theta1=(1.2226, f'{where}: theta1 coefficient of L[1,2]'),
            a12_theta2=(-0.9968, f'{where}: theta2 coefficient of L[1,2]'),
            a21_theta1=(0.4075, f'{where}: theta1 coefficient of L[2,1]'),
            a21_theta2=(-0.3323, f'{where}: theta2 coefficient of L[2,1]'),
            c11_theta1=(0.3169, f'{where}: theta1 coefficient of L[3,1]'),
            c11_theta2=(0.3887, f'{where}: theta2 coefficient of L[3,1]'),
            c12_theta1=(0.8151, f'{where}: theta1 coefficient of L[3,2]'),
            c12_theta2=(-0.6645, f'{where}: theta2 coefficient of L[3,2]'),
            theta1_sin=(1.2601, f'{where}: sin(x1) weight of the first scheduling variable'),
            theta1_x1=(1.4740, f'{where}: x1 weight of the first scheduling variable'),
            theta2_sin=(1.5456, f'{where}: sin(x1) weight of the second scheduling variable'),
            theta2_x1=(-1.2017, f'{where}: x1 weight of the second scheduling variable'),
        ),
    )


_BUILDERS = {'example1': _example1, 'example2': _example2}
FIXTURE_NAMES = tuple(_BUILDERS)


@cache
def fixture(name: str) -> Fixture:
    """Built-in fixture by name.

    Raises:
        ConfigError: unknown name
    """
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise ConfigError(f'unknown fixture {name!r}; choose from {", ".join(FIXTURE_NAMES)}') from None
