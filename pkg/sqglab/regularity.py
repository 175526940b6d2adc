"""
Oscillation over parabolic cylinders, the drift-following frame, the
renormalization ladder and Holder exponent fits from oscillation decay.
"""
import collections
import logging
import math

import numpy as np
import scipy.stats

from sqglab import spectral
from sqglab.exception import CheckError, CylinderRangeError, RenormalizationError


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


MIN_CELLS = 4
MIN_RADII = 5
ALPHA_MAX = 1.5
RENORMALIZATION_CAP = 2.0

HolderFit = collections.namedtuple(
    'HolderFit', ['alpha', 'r_squared', 'radii', 'oscillations', 'flag'])


class ParabolicCylinder(collections.namedtuple('ParabolicCylinder', ['t', 'x', 'r', 'depth'])):
    """[t - depth, t] x (x + [-r, r]^N); depth defaults to r"""
    __slots__ = ()

    def __new__(cls, t, x, r, depth=None):
        if not r > 0:
            raise CylinderRangeError('Cylinder radius must be positive, got {}'.format(r))
        if depth is None:
            depth = r
        return super().__new__(cls, float(t), tuple(float(c) for c in np.atleast_1d(x)),
                               float(r), float(depth))


class FramePath(collections.namedtuple('FramePath', ['times', 'positions'])):
    """x0(s) sampled at ``times``, unwrapped, linear in between"""
    __slots__ = ()

    def position(self, s):
        times = np.asarray(self.times)
        positions = np.asarray(self.positions)
        return np.array([np.interp(s, times, positions[:, j]) for j in range(positions.shape[1])])

    def velocity(self):
        """Finite difference estimate of dx0/ds at the samples"""
        return np.gradient(np.asarray(self.positions), np.asarray(self.times), axis=0)


def _cube_mask(grid, center, r):
    mask = np.ones(grid.shape, dtype=bool)
    eps = 1e-9 * min(grid.spacing)
    for x, c, length in zip(grid.coordinates(), center, grid.lengths):
        d = np.mod(x - c + 0.5 * length, length) - 0.5 * length
        mask = mask & (np.abs(d) <= r + eps)
    return mask


def _check_cylinder(traj, cyl):
    grid = traj.grid
    if len(cyl.x) != grid.ndim:
        raise CylinderRangeError('Centre of dimension {} on a {}D grid'.format(len(cyl.x), grid.ndim))
    if cyl.r >= 0.5 * min(grid.lengths):
        raise CylinderRangeError('Radius {} does not fit the periodic cell {}'.format(cyl.r, grid.lengths))
    if cyl.r < MIN_CELLS * max(grid.spacing) * (1 - 1e-9):
        raise CylinderRangeError('Radius {} resolved by fewer than {} cells'.format(cyl.r, MIN_CELLS))
    t0, t1 = traj.times[0], traj.times[-1]
    eps = 1e-9 * max(1.0, abs(t1))
    if cyl.t - cyl.depth < t0 - eps or cyl.t > t1 + eps:
        raise CylinderRangeError('Cylinder [{}, {}] outside trajectory [{}, {}]'.format(
            cyl.t - cyl.depth, cyl.t, t0, t1))


def oscillation(traj, cyl, frame=None):
    """sup - inf of theta over grid points and snapshots inside the cylinder"""
    _check_cylinder(traj, cyl)
    index = traj.window(cyl.t - cyl.depth, cyl.t)
    if index.size == 0:
        raise CylinderRangeError('No snapshot inside [{}, {}]'.format(cyl.t - cyl.depth, cyl.t))
    center = np.asarray(cyl.x)
    anchor = frame.position(cyl.t) if frame is not None else None
    hi = -math.inf
    lo = math.inf
    for i in index:
        if frame is not None:
            c = center + frame.position(traj.times[i]) - anchor
        else:
            c = center
        values = traj.thetas[i].values[_cube_mask(traj.grid, c, cyl.r)]
        hi = max(hi, float(values.max()))
        lo = min(lo, float(values.min()))
    return hi - lo


# Moving frame

def box_average_multiplier(grid, radius):
    """Fourier multiplier of the average over x + [-radius, radius]^N"""
    mult = np.ones(grid.shape)
    for k in spectral.wavevectors(grid):
        mult = mult * np.sinc(k * radius / math.pi)
    return mult


def _average_velocity(traj, i, point, mult):
    velocity = traj.velocities[i]
    if velocity is None:
        return np.zeros(traj.grid.ndim)
    wrapped = np.mod(point, traj.grid.lengths)[None, :]
    return np.array([
        spectral.evaluate_at(spectral.SpectralField(v.grid, spectral.forward(v).coeffs * mult), wrapped)[0]
        for v in velocity])


def default_radius(grid):
    return MIN_CELLS * max(grid.spacing)


def moving_frame(traj, radius=None):
    """
    x0' = average of v over x0 + [-radius, radius]^N, x0 = 0 at the first
    snapshot. Heun steps between snapshots with v taken at the snapshots.
    """
    if radius is None:
        radius = default_radius(traj.grid)
    mult = box_average_multiplier(traj.grid, radius)
    positions = [np.zeros(traj.grid.ndim)]
    for i in range(len(traj) - 1):
        h = traj.times[i + 1] - traj.times[i]
        x = positions[-1]
        k1 = _average_velocity(traj, i, x, mult)
        k2 = _average_velocity(traj, i + 1, x + h * k1, mult)
        positions.append(x + 0.5 * h * (k1 + k2))
    return FramePath(tuple(traj.times), np.asarray(positions))


def frame_residual(traj, frame, radius=None):
    """max over snapshots of |box average of v at x0 - x0'|"""
    if radius is None:
        radius = default_radius(traj.grid)
    mult = box_average_multiplier(traj.grid, radius)
    speed = frame.velocity()
    worst = 0.0
    for i in range(len(traj)):
        average = _average_velocity(traj, i, frame.positions[i], mult)
        worst = max(worst, float(np.max(np.abs(average - speed[i]))))
    return worst


# Renormalization

def _values(theta):
    return theta.values if hasattr(theta, 'values') else np.asarray(theta, dtype=np.float64)


def renormalization_sequence(theta, K):
    """theta_k = 2 (theta_{k-1} - 1), theta_0 = theta <= 2; returns theta_1..theta_K"""
    values = _values(theta)
    if np.any(values > RENORMALIZATION_CAP):
        raise RenormalizationError('Field reaches {} above the cap {}'.format(
            float(values.max()), RENORMALIZATION_CAP))
    sequence = []
    current = values
    for _ in range(K):
        current = 2.0 * (current - 1.0)
        sequence.append(current)
    return sequence


def renormalization_closed_form(theta, k):
    return 2.0 ** k * (_values(theta) - 2.0) + 2.0


# Holder fits

def radius_ladder(grid, span=math.inf, count=MIN_RADII):
    """
    Radii four cells and up in factor 2 steps, kept below half the periodic
    cell and within ``span``, the time available for the cylinder depth.
    """
    half = 0.5 * min(grid.lengths)
    radii = []
    r = default_radius(grid)
    while r < half and r <= span * (1 + 1e-9):
        radii.append(r)
        r *= 2.0
    if len(radii) < count:
        raise CheckError('Fewer than {} radii from {:.4g} fit below half the cell {:.4g} and depth {:.4g}'.format(
            count, default_radius(grid), half, span))
    return radii


def ladder_depth(grid, count=MIN_RADII):
    """Time a point needs behind it for the shortest feasible ladder"""
    return default_radius(grid) * 2.0 ** (count - 1)


def holder_exponent_fit(traj, point, radii=None, frame=None):
    """
    Slope of log osc against log r over cylinders centred at ``point`` = (t, x).
    Clipped to [0, 1.5] with a flag; a flat cylinder gives alpha = inf.
    """
    t, x = point
    if radii is None:
        radii = radius_ladder(traj.grid, t - traj.times[0])
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    if radii.size < MIN_RADII:
        raise CheckError('Need at least {} radii, got {}'.format(MIN_RADII, radii.size))
    if radii[-1] < 10.0 * radii[0] * (1 - 1e-9):
        raise CheckError('Radii must span a decade, got {} to {}'.format(radii[0], radii[-1]))
    osc = np.array([oscillation(traj, ParabolicCylinder(t, x, r), frame) for r in radii])
    scale = max(1.0, float(np.max(np.abs(traj.thetas[0].values))))
    if np.any(osc <= 1e-14 * scale):
        return HolderFit(math.inf, math.nan, radii, osc, 'flat')
    fit = scipy.stats.linregress(np.log(radii), np.log(osc))
    alpha = float(fit.slope)
    flag = ''
    if alpha < 0.0 or alpha > ALPHA_MAX:
        flag = 'clipped'
        alpha = min(max(alpha, 0.0), ALPHA_MAX)
    log_debug('Holder fit at t={} x={}: alpha={:.4g} r2={:.4g}'.format(t, x, alpha, fit.rvalue ** 2))
    return HolderFit(alpha, float(fit.rvalue ** 2), radii, osc, flag)


def random_points(traj, count, seed, t_min=None):
    """``count`` (t, x) pairs at snapshot times >= t_min with grid-point centres"""
    rng = np.random.default_rng(seed)
    times = np.asarray(traj.times)
    # the grid alone has to fit a ladder
    radius_ladder(traj.grid)
    depth = ladder_depth(traj.grid)
    lo = times[0] + depth if t_min is None else max(t_min, times[0] + depth)
    candidates = np.nonzero(times >= lo * (1 - 1e-12))[0]
    if candidates.size == 0:
        raise CheckError('No snapshot late enough for cylinders of depth {:.4g}'.format(depth))
    points = []
    for _ in range(count):
        i = int(rng.choice(candidates))
        x = tuple(float(rng.integers(n) * h) for n, h in zip(traj.grid.dims, traj.grid.spacing))
        points.append((float(times[i]), x))
    return points
