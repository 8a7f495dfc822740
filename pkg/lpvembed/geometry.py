"""Enclosing regions for clouds of reduced scheduling points.

Point sets are ``(N, d)`` arrays (one point per row) throughout this module,
except ``region_from_points`` which takes the ``(d, N)`` trajectory layout
produced by the reduction.

A region stores an affine alignment ``theta = R (rho - c) + c`` together with
the bounds of the aligned samples. ``R`` is a proper rotation, so volumes are
preserved.
"""

import itertools
import math
from dataclasses import dataclass
from functools import cache
from typing import Literal

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.transform import Rotation
from scipy.special import gammaln

from lpvembed.errors import ConfigError, ConvergenceError, DegenerateCloudError, DimensionMismatchError
from lpvembed.log import get_logger
from lpvembed.reduction import fix_signs

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

RegionMethod = Literal['axis-aligned', 'box2d', 'box3d', 'ellipsoid']
RegionStrategy = Literal['auto', 'axis-aligned', 'box', 'ellipsoid']
STRATEGIES: tuple[RegionStrategy, ...] = ('auto', 'axis-aligned', 'box', 'ellipsoid')

CONTAINMENT_RTOL = 1e-9
# Affine-rank threshold relative to the cloud's extent
DEGENERACY_RTOL = 1e-10

DEFAULT_MVEE_TOL = 1e-7
DEFAULT_MVEE_MAX_ITER = 1_000_000
DEFAULT_BOX_EPS = 0.05


def _points(points: npt.ArrayLike) -> FloatArray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2:
        raise DimensionMismatchError(f'expected an (N, d) point array, got shape {arr.shape}')
    if arr.shape[0] == 0:
        raise ConfigError('empty point set')
    return arr


def affine_dimension(points: npt.ArrayLike) -> int:
    """Dimension of the affine hull of ``points``."""
    arr = _points(points)
    centered = arr - arr.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > DEGENERACY_RTOL * s[0]))


def _require_full_dimension(points: FloatArray) -> None:
    d = points.shape[1]
    dim = affine_dimension(points)
    if dim < d:
        raise DegenerateCloudError(dim, d)


@cache
def signed_permutations(d: int) -> tuple[FloatArray, ...]:
    """All ``d x d`` signed permutation matrices with determinant +1."""
    out = []
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1.0, -1.0), repeat=d):
            mat = np.zeros((d, d))
            mat[perm, range(d)] = signs
            if np.linalg.det(mat) > 0:
                out.append(mat)
    return tuple(out)


def sign_patterns(d: int) -> FloatArray:
    """``(2^d, d)`` array of the corner sign patterns of a box."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=d)))


# Boxes, ellipsoids, regions -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Box ``{center + rotation @ y : |y_i| <= half_extents_i}``.

    The columns of ``rotation`` are the box axes.
    """

    center: FloatArray
    rotation: FloatArray
    half_extents: FloatArray

    @property
    def dimension(self) -> int:
        return int(self.center.shape[0])

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.half_extents))

    @property
    def vertices(self) -> FloatArray:
        """Corners, one per sign pattern of ``sign_patterns``."""
        return self.center + (sign_patterns(self.dimension) * self.half_extents) @ self.rotation.T

    def local(self, points: npt.ArrayLike) -> FloatArray:
        return (_points(points) - self.center) @ self.rotation

    def contains(self, points: npt.ArrayLike, rtol: float = CONTAINMENT_RTOL) -> bool:
        slack = rtol * max(1.0, float(np.max(self.half_extents)), float(np.max(np.abs(self.center))))
        return bool(np.all(np.abs(self.local(points)) <= self.half_extents + slack))


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{v : (v - center)^T shape (v - center) <= 1}``."""

    shape: FloatArray
    center: FloatArray
    iterations: int = 0

    @property
    def dimension(self) -> int:
        return int(self.center.shape[0])

    def constraint_values(self, points: npt.ArrayLike) -> FloatArray:
        diff = _points(points) - self.center
        return np.einsum('ij,jk,ik->i', diff, self.shape, diff)

    @property
    def semi_axes(self) -> FloatArray:
        return 1.0 / np.sqrt(np.linalg.eigvalsh(self.shape))

    def axis_endpoints(self) -> FloatArray:
        """``(2d, d)`` ends of the principal axes, ``center - a_k v_k`` then ``center + a_k v_k`` per axis."""
        values, vectors = np.linalg.eigh(self.shape)
        offsets = vectors / np.sqrt(values)
        return np.stack([self.center + sign * offsets[:, k] for k in range(self.dimension) for sign in (-1.0, 1.0)])

    @property
    def volume(self) -> float:
        d = self.dimension
        log_unit_ball = (d / 2) * math.log(math.pi) - gammaln(d / 2 + 1)
        return float(math.exp(log_unit_ball) / math.sqrt(np.linalg.det(self.shape)))


@dataclass(frozen=True, eq=False)
class SchedulingRegion:
    """Hyper-rectangle ``[lower, upper]`` of the aligned coordinates.

    Attributes:
        rotation, center: alignment ``theta = rotation @ (rho - center) + center``
        method: how the alignment was found
        volume: product of the bound widths
        reference_volume: volume of the unaligned bounding box of ``rho``
        enclosing_volume: for ellipsoids, the volume of the aligned box
            circumscribing the ellipsoid
    """

    lower: FloatArray
    upper: FloatArray
    rotation: FloatArray
    center: FloatArray
    method: RegionMethod
    volume: float
    reference_volume: float | None = None
    enclosing_volume: float | None = None

    def __post_init__(self) -> None:
        if np.any(self.lower > self.upper):
            raise ConfigError('region lower bound exceeds upper bound')
        d = self.lower.shape[0]
        if self.upper.shape != (d,) or self.center.shape != (d,) or self.rotation.shape != (d, d):
            raise DimensionMismatchError(f'inconsistent region dimensions for n_theta = {d}')

    @property
    def dimension(self) -> int:
        return int(self.lower.shape[0])

    def transform(self, rho: npt.ArrayLike) -> FloatArray:
        """Align ``(d,)`` or ``(d, N)`` reduced coordinates."""
        arr = np.asarray(rho, dtype=np.float64)
        center = self.center if arr.ndim == 1 else self.center[:, np.newaxis]
        return self.rotation @ (arr - center) + center

    def restore(self, theta: npt.ArrayLike) -> FloatArray:
        """Reduced coordinates of ``(d,)`` or ``(d, N)`` aligned values."""
        arr = np.asarray(theta, dtype=np.float64)
        center = self.center if arr.ndim == 1 else self.center[:, np.newaxis]
        return self.rotation.T @ (arr - center) + center

    def contains(self, theta: npt.ArrayLike, rtol: float = CONTAINMENT_RTOL) -> npt.NDArray[np.bool_]:
        """Per-sample membership of ``(d,)`` or ``(d, N)`` scheduling values."""
        arr = np.asarray(theta, dtype=np.float64)
        slack = rtol * np.maximum(1.0, np.maximum(np.abs(self.lower), np.abs(self.upper)))
        if arr.ndim == 2:
            slack = slack[:, np.newaxis]
            lower, upper = self.lower[:, np.newaxis], self.upper[:, np.newaxis]
        else:
            lower, upper = self.lower, self.upper
        return np.all((arr >= lower - slack) & (arr <= upper + slack), axis=0)

    @property
    def vertices(self) -> FloatArray:
        """Corners of the bounds, ``(2^d, d)``."""
        return np.where(sign_patterns(self.dimension) < 0, self.lower, self.upper)


def axis_aligned_bounds(points: npt.ArrayLike) -> SchedulingRegion:
    """Per-coordinate min/max of an ``(N, d)`` point set."""
    arr = _points(points)
    lower, upper = arr.min(axis=0), arr.max(axis=0)
    volume = float(np.prod(upper - lower))
    return SchedulingRegion(
        lower=lower,
        upper=upper,
        rotation=np.eye(arr.shape[1]),
        center=(lower + upper) / 2,
        method='axis-aligned',
        volume=volume,
        reference_volume=volume,
    )


# Convex hulls -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hull:
    """Convex hull; in 2D the vertices run counterclockwise.

    ``normals`` are outward unit facet normals with ``normals @ x + offsets <= 0``
    inside.
    """

    vertices: FloatArray
    vertex_indices: npt.NDArray[np.intp]
    normals: FloatArray
    offsets: FloatArray

    @property
    def volume(self) -> float:
        return float(ConvexHull(self.vertices).volume)


def convex_hull(points: npt.ArrayLike) -> Hull:
    """Hull of a 2D or 3D cloud.

    Raises:
        DegenerateCloudError: the cloud spans a lower-dimensional subspace
    """
    arr = _points(points)
    d = arr.shape[1]
    if d not in (2, 3):
        raise DimensionMismatchError(f'convex hulls are supported in 2 and 3 dimensions, got {d}')
    _require_full_dimension(arr)
    try:
        hull = ConvexHull(arr)
    except QhullError as exc:
        raise DegenerateCloudError(affine_dimension(arr), d) from exc
    return Hull(
        vertices=arr[hull.vertices],
        vertex_indices=np.asarray(hull.vertices),
        normals=hull.equations[:, :d],
        offsets=hull.equations[:, d],
    )


# Minimal boxes ------------------------------------------------------------------


def _box_for_rotation(points: FloatArray, rotation: FloatArray) -> OrientedBox:
    local = points @ rotation
    lo, hi = local.min(axis=0), local.max(axis=0)
    return OrientedBox(center=rotation @ ((lo + hi) / 2), rotation=rotation, half_extents=(hi - lo) / 2)


def _closest_to_identity(rotation: FloatArray) -> FloatArray:
    """Same box frame, with axes permuted and flipped to maximize the trace."""
    candidates = [rotation @ perm for perm in signed_permutations(rotation.shape[0])]
    return max(candidates, key=lambda mat: float(np.trace(mat)))


def _rotation2(angle: float) -> FloatArray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def edge_rectangle_areas(hull: Hull) -> tuple[FloatArray, FloatArray]:
    """Angles (in ``[-pi/4, pi/4)``) and areas of the edge-aligned rectangles."""
    edges = np.roll(hull.vertices, -1, axis=0) - hull.vertices
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    angles = np.mod(angles + math.pi / 4, math.pi / 2) - math.pi / 4
    c, s = np.cos(angles), np.sin(angles)
    # projections onto the two axes of each candidate frame
    u = hull.vertices @ np.vstack([c, s])
    v = hull.vertices @ np.vstack([-s, c])
    areas = np.ptp(u, axis=0) * np.ptp(v, axis=0)
    return angles, areas


def min_area_rectangle(points: npt.ArrayLike) -> OrientedBox:
    """Exact minimum-area enclosing rectangle (rotating calipers).

    One side of an optimal rectangle is collinear with a hull edge, so the
    edge directions are exhaustive. Ties go to the smallest rotation angle.
    """
    hull = convex_hull(points)
    angles, areas = edge_rectangle_areas(hull)
    best = areas.min()
    tied = np.flatnonzero(areas <= best * (1 + 1e-12))
    angle = float(angles[tied[np.argmin(np.abs(angles[tied]))]])
    return _box_for_rotation(hull.vertices, _rotation2(angle))


def _volume(points: FloatArray, rotation: FloatArray) -> float:
    return float(np.prod(np.ptp(points @ rotation, axis=0)))


def _proper(rotation: FloatArray) -> FloatArray:
    if np.linalg.det(rotation) < 0:
        rotation = rotation.copy()
        rotation[:, -1] *= -1
    return rotation


def _facet_candidates(hull: Hull) -> list[FloatArray]:
    normals: list[FloatArray] = []
    for normal in hull.normals:
        if all(abs(float(normal @ seen)) < 1 - 1e-12 for seen in normals):
            normals.append(normal)
    candidates = []
    for normal in normals:
        plane = scipy.linalg.null_space(normal[np.newaxis, :])
        rect = min_area_rectangle(hull.vertices @ plane)
        axes = plane @ rect.rotation
        candidates.append(_proper(np.column_stack([axes, normal])))
    return candidates


def _refine(points: FloatArray, rotation: FloatArray, min_step: float) -> tuple[FloatArray, float]:
    """Coordinate descent over small rotations about the box's own axes."""
    volume = _volume(points, rotation)
    step = 0.1
    while step >= min_step:
        improved = False
        for axis in range(3):
            for sign in (1.0, -1.0):
                turn = Rotation.from_rotvec(sign * step * np.eye(3)[axis]).as_matrix()
                trial = rotation @ turn
                trial_volume = _volume(points, trial)
                if trial_volume < volume * (1 - 1e-15):
                    rotation, volume, improved = trial, trial_volume, True
        if not improved:
            step /= 2
    return rotation, volume


def min_volume_box3(
    points: npt.ArrayLike,
    epsilon: float = DEFAULT_BOX_EPS,
    *,
    seed: int = 0,
    random_orientations: int = 32,
    refine_top: int = 3,
) -> OrientedBox:
    """Approximate minimum-volume box of a 3D cloud.

    Candidate frames come from every distinct hull facet normal (with the
    exact minimum rectangle of the projection onto the facet plane), the
    principal axes, the identity and ``random_orientations`` random
    rotations drawn from ``seed``. The best ``refine_top`` candidates are
    refined by rotations about their own axes down to an angular step of
    ``epsilon / 100``.
    """
    if not 0 < epsilon <= 0.5:
        raise ConfigError(f'box epsilon must lie in (0, 0.5], got {epsilon}')
    hull = convex_hull(points)
    if hull.vertices.shape[1] != 3:
        raise DimensionMismatchError('min_volume_box3 needs a 3D point set')
    verts = hull.vertices

    candidates = _facet_candidates(hull)
    centered = verts - verts.mean(axis=0)
    candidates.append(_proper(np.linalg.svd(centered, full_matrices=False)[2].T))
    candidates.append(np.eye(3))
    rng = np.random.default_rng(seed)
    candidates.extend(Rotation.random(random_orientations, random_state=rng).as_matrix())

    volumes = np.array([_volume(verts, rot) for rot in candidates])
    order = np.argsort(volumes, kind='stable')[:refine_top]
    log.debug('box3 candidates', count=len(candidates), best=float(volumes[order[0]]), _live_=True)

    refined = [_refine(verts, candidates[i], epsilon * 1e-2) for i in order]
    best_volume = min(volume for _, volume in refined)
    tied = [rot for rot, volume in refined if volume <= best_volume * (1 + 1e-12)]
    rotation = max((_closest_to_identity(rot) for rot in tied), key=lambda mat: float(np.trace(mat)))
    box = _box_for_rotation(verts, rotation)
    log.debug('box3 refined', volume=box.volume, aabb_volume=_volume(verts, np.eye(3)))
    return box


# Alignment ----------------------------------------------------------------------


def _kabsch(p: FloatArray, q: FloatArray) -> FloatArray:
    """Proper rotation ``R`` minimising ``||R p - q||_F`` for column point sets."""
    u, _, vt = np.linalg.svd(p @ q.T)
    correction = np.eye(p.shape[0])
    correction[-1, -1] = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    return vt.T @ correction @ u.T


def closed_form_rotation(p: FloatArray, q: FloatArray) -> FloatArray | None:
    """``(M^T M)^(1/2) M^-1`` with ``M = p q^T``, or None when ``M`` is singular."""
    m = p @ q.T
    if np.linalg.cond(m) > 1e12:
        return None
    root = np.real(scipy.linalg.sqrtm(m.T @ m))
    return root @ np.linalg.inv(m)


def kabsch_align(
    box: OrientedBox,
    singular_values: npt.ArrayLike | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Rotation taking the box onto the coordinate axes, pivoted at its centroid.

    ``P`` holds the centered box corners as columns. Each candidate target
    ``Q`` places the corners, matched by their sign pattern in the box frame,
    on an axis-aligned box whose half-extents follow from the singular values
    of ``P``; the candidates differ by a proper signed permutation of the
    axes. The candidate rotation with the largest trace wins.

    Returns:
        ``(rotation, center)`` such that ``rotation @ (v - center) + center``
        is axis-aligned

    Raises:
        DegenerateCloudError: the box has a zero extent
    """
    d = box.dimension
    if d not in (2, 3):
        raise DimensionMismatchError(f'box alignment is defined in 2 and 3 dimensions, got {d}')
    if np.any(box.half_extents <= 0):
        raise DegenerateCloudError(int(np.count_nonzero(box.half_extents > 0)), d)

    patterns = sign_patterns(d)
    p = (box.vertices - box.center).T
    sigma = np.sort(np.linalg.svd(p, compute_uv=False) if singular_values is None else np.asarray(singular_values))
    # singular values of P are 2^(d/2) times the half-extents; match them by rank
    ranks = np.argsort(np.argsort(box.half_extents))
    half = sigma[ranks] / 2 ** (d / 2)

    best: FloatArray | None = None
    target = patterns.T
    for perm in signed_permutations(d):
        q = perm @ (patterns * half).T
        rotation = _kabsch(p, q)
        if best is None or np.trace(rotation) > np.trace(best) + 1e-12:
            best = rotation
            target = q
    assert best is not None

    closed = closed_form_rotation(p, target)
    if closed is not None and not np.allclose(closed, best, atol=1e-6):
        log.warning('closed-form alignment disagrees with the SVD route', _verbose_difference=closed - best)
    return best, box.center.copy()


def ellipsoid_axis_align(ell: Ellipsoid) -> tuple[FloatArray, FloatArray]:
    """Rotation diagonalizing the ellipsoid's shape matrix, pivoted at its center.

    With ``P_e = U diag(w) U^T`` the rotation applied to points is ``U^T``;
    the aligned shape matrix is ``diag(w)``.
    """
    _, vectors = np.linalg.eigh(ell.shape)
    vectors = _proper(fix_signs(vectors))
    return vectors.T, ell.center.copy()


# Minimum-volume ellipsoid -------------------------------------------------------


def _hull_points(points: FloatArray) -> FloatArray:
    if points.shape[0] <= points.shape[1] + 1:
        return points
    try:
        return points[ConvexHull(points).vertices]
    except QhullError:
        return points


def mvee(
    points: npt.ArrayLike,
    tol: float = DEFAULT_MVEE_TOL,
    *,
    max_iter: int = DEFAULT_MVEE_MAX_ITER,
) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid by Khachiyan's method with away steps.

    Iterates on the dual weights of the hull points until the largest
    constraint value ``(v - c)^T P (v - c)`` is at most ``1 + tol``, then
    rescales ``P`` so the outermost point lies exactly on the boundary.

    Raises:
        DegenerateCloudError: the cloud is not full-dimensional
        ConvergenceError: ``max_iter`` reached first
    """
    arr = _points(points)
    d = arr.shape[1]
    if d < 2:
        raise DimensionMismatchError('the ellipsoid method needs at least 2 dimensions')
    _require_full_dimension(arr)

    pts = _hull_points(arr)
    n = pts.shape[0]
    lifted = np.vstack([pts.T, np.ones(n)])
    u = np.full(n, 1.0 / n)
    violation = math.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        weighted = (lifted * u) @ lifted.T
        m = np.einsum('ij,ji->i', lifted.T @ np.linalg.inv(weighted), lifted)
        j = int(np.argmax(m))
        violation = (m[j] - 1) / d
        if violation <= 1 + tol:
            break
        support = np.flatnonzero(u > 0)
        k = int(support[np.argmin(m[support])])
        if m[j] - (d + 1) >= (d + 1) - m[k] or u[k] >= 1:
            step = (m[j] - d - 1) / ((d + 1) * (m[j] - 1))
            u *= 1 - step
            u[j] += step
        else:
            step = min((d + 1 - m[k]) / ((d + 1) * (m[k] - 1)), u[k] / (1 - u[k]))
            u *= 1 + step
            u[k] -= step
            u[k] = max(u[k], 0.0)
        if iteration % 10_000 == 0:
            log.debug('mvee progress', iteration=iteration, violation=float(violation), _live_=True)
    else:
        raise ConvergenceError('minimum-volume ellipsoid did not converge', iteration, float(violation))

    center = pts.T @ u
    scatter = (pts.T * u) @ pts - np.outer(center, center)
    shape = np.linalg.inv(scatter) / d
    shape = (shape + shape.T) / 2
    ell = Ellipsoid(shape=shape, center=center, iterations=iteration)
    outer = float(np.max(ell.constraint_values(arr)))
    ell = Ellipsoid(shape=shape / outer, center=center, iterations=iteration)
    log.debug('mvee converged', iterations=iteration, violation=float(violation), volume=ell.volume)
    return ell


# Regions ------------------------------------------------------------------------


def resolve_strategy(strategy: RegionStrategy, dimension: int) -> RegionMethod:
    """Concrete method for ``strategy`` in ``dimension`` scheduling variables."""
    if strategy not in STRATEGIES:
        raise ConfigError(f'unknown region strategy {strategy!r}; choose from {", ".join(STRATEGIES)}')
    if strategy == 'auto':
        strategy = 'axis-aligned' if dimension == 1 else 'box' if dimension <= 3 else 'ellipsoid'
    if strategy == 'box':
        if dimension == 1:
            return 'axis-aligned'
        if dimension > 3:
            raise ConfigError(f'box strategy supports up to 3 scheduling variables, got {dimension}')
        return 'box2d' if dimension == 2 else 'box3d'
    if strategy == 'ellipsoid' and dimension < 2:
        raise ConfigError('ellipsoid strategy needs at least 2 scheduling variables')
    return strategy


def region_from_points(
    rho_samples: npt.ArrayLike,
    strategy: RegionStrategy = 'auto',
    *,
    box_eps: float = DEFAULT_BOX_EPS,
    tol_mvee: float = DEFAULT_MVEE_TOL,
    seed: int = 0,
) -> SchedulingRegion:
    """Scheduling region for a ``(d, N)`` reduced trajectory.

    ``auto`` uses plain bounds for ``d = 1``, the minimal box for
    ``d in {2, 3}`` and the ellipsoid alignment beyond. The bounds are always
    the min/max of the aligned samples.
    """
    rho = np.atleast_2d(np.asarray(rho_samples, dtype=np.float64))
    points = _points(rho.T)
    d = points.shape[1]
    method = resolve_strategy(strategy, d)
    reference = axis_aligned_bounds(points)
    if method == 'axis-aligned':
        return reference

    enclosing_volume = None
    if method == 'box2d':
        rotation, center = kabsch_align(min_area_rectangle(points))
    elif method == 'box3d':
        rotation, center = kabsch_align(min_volume_box3(points, box_eps, seed=seed))
    else:
        ell = mvee(points, tol_mvee)
        rotation, center = ellipsoid_axis_align(ell)
        enclosing_volume = float(np.prod(2.0 * ell.semi_axes))

    theta = (points - center) @ rotation.T + center
    lower, upper = theta.min(axis=0), theta.max(axis=0)
    region = SchedulingRegion(
        lower=lower,
        upper=upper,
        rotation=rotation,
        center=center,
        method=method,
        volume=float(np.prod(upper - lower)),
        reference_volume=reference.volume,
        enclosing_volume=enclosing_volume,
    )
    log.debug(
        'region fitted',
        method=method,
        volume=region.volume,
        reference_volume=reference.volume,
        _verbose_lower=lower,
        _verbose_upper=upper,
    )
    return region
