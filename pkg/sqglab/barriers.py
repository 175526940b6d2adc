"""
Barrier functions, the constants ledger built from them and the isoperimetric
measurement for functions crossing from 0 to 1.

Both barriers are harmonic in a box. The discrete solves expand in sine modes
(DST-I) along the directions with zero boundary values and solve the remaining
second difference equation per mode in closed form.
"""
import collections
import logging
import math

import numpy as np
import scipy.fft

from sqglab import extension, spectral
from sqglab.exception import BarrierError


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


B2_P_MAX = 50
B2_X_MAX = 6.0
B1_HALF_WIDTH = 4.0
B1_MIN_RESOLUTION = 32
HARMONIC_TOL = 1e-9
DELTA_MAX = 0.25
DELTA_STEP = 1e-3
K_RANGE = 64


DecayScan = collections.namedtuple('DecayScan', ['c_bar', 'xs', 'profile', 'limit'])
B1Solution = collections.namedtuple('B1Solution', ['axes', 'values', 'spacing', 'lam'])
ConstantsLedger = collections.namedtuple(
    'ConstantsLedger', ['lam', 'delta', 'M', 'c_bar', 'c0', 'p_norm', 'ndim', 'energy_constant',
                        'margins'])
IsoperimetricResult = collections.namedtuple(
    'IsoperimetricResult', ['lhs', 'rhs', 'ratio', 'a', 'b', 'c', 'grad_norm'])


class BarrierB2:
    """
    Partial sums of the separated solution of the Laplace problem on the half
    strip x > 0, 0 < z < 1, equal to ``boundary_value`` on x = 0 and 0 on z = 0, 1:

        b2(x, z) = sum_{p < p_max} 4 bv / (pi (2p+1)) exp(-(2p+1) pi x) sin((2p+1) pi z)
    """

    def __init__(self, p_max=B2_P_MAX, boundary_value=2.0):
        if p_max < 1:
            raise BarrierError('p_max must be >= 1, got {}'.format(p_max))
        self.p_max = int(p_max)
        self.boundary_value = float(boundary_value)
        self._orders = 2.0 * np.arange(self.p_max) + 1.0

    def __repr__(self):
        return 'BarrierB2(p_max={}, boundary_value={})'.format(self.p_max, self.boundary_value)

    @property
    def decay_limit(self):
        """lim |b2| e^(pi x) as x -> infinity, at z = 1/2"""
        return 4.0 * self.boundary_value / math.pi

    def eval(self, x, z):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if np.any(x < 0):
            raise BarrierError('b2 is defined for x >= 0, got min x={}'.format(float(x.min())))
        if np.any((z < 0) | (z > 1)):
            raise BarrierError('b2 is defined for z in [0, 1]')
        x, z = np.broadcast_arrays(x, z)
        m = self._orders.reshape((-1,) + (1,) * x.ndim)
        terms = (4.0 * self.boundary_value / (math.pi * m)) * np.exp(-m * math.pi * x) \
            * np.sin(m * math.pi * z)
        values = terms.sum(axis=0)
        # walls are exact zeros, not sin(m pi) roundoff
        return np.where((z == 0) | (z == 1), 0.0, values)

    def tail_bound(self, x):
        """Bound on the neglected terms; infinite on x = 0"""
        x = np.asarray(x, dtype=np.float64)
        m = 2.0 * self.p_max + 1.0
        with np.errstate(divide='ignore'):
            bound = 4.0 * abs(self.boundary_value) / (math.pi * m) * np.exp(-m * math.pi * x) \
                / -np.expm1(-2.0 * math.pi * x)
        return np.where(x > 0, bound, np.inf)


def _decay_ratio(r, n, j):
    """sinh(r (n - j)) / sinh(r n) without overflow"""
    return (np.exp(-r * j) - np.exp(-r * (2 * n - j))) / -np.expm1(-2.0 * r * n)


def _strip_modes(boundary, h, steps):
    """
    Discrete harmonic function on ``steps`` + 1 layers with the given values on
    layer 0 (interior nodes of the sine directions, last axes), 0 on layer
    ``steps`` and 0 on the sine-direction walls. Returns all layers, walls included.
    """
    boundary = np.asarray(boundary, dtype=np.float64)
    coeffs = scipy.fft.dstn(boundary, type=1)
    mu = np.zeros(boundary.shape)
    for axis, n in enumerate(boundary.shape):
        m = np.arange(1, n + 1)
        eig = 4.0 * np.sin(0.5 * math.pi * m / (n + 1)) ** 2
        mu = mu + eig.reshape((-1,) + (1,) * (boundary.ndim - axis - 1))
    # cosh(r) = 1 + mu / 2 per mode for the 5-point stencil with equal spacing
    r = np.arccosh(1.0 + 0.5 * mu)
    layers = np.arange(steps + 1).reshape((-1,) + (1,) * boundary.ndim)
    modal = coeffs[None] * _decay_ratio(r[None], steps, layers)
    interior = scipy.fft.idstn(modal, type=1, axes=tuple(range(1, boundary.ndim + 1)))
    pad = [(0, 0)] + [(1, 1)] * boundary.ndim
    return np.pad(interior, pad)


def b2_laplace_oracle(h=1.0 / 256, x_max=B2_X_MAX, boundary_value=2.0):
    """
    Five point Laplace solve for the b2 problem on [0, x_max] x [0, 1], zero at
    x = x_max. Returns (x, z, values) with values indexed [ix, iz].
    """
    nz = int(round(1.0 / h))
    nx = int(round(x_max / h))
    if nz < 4 or abs(nz * h - 1.0) > 1e-12:
        raise BarrierError('h must divide 1, got {}'.format(h))
    data = np.full(nz - 1, boundary_value)
    values = _strip_modes(data, h, nx)
    x = np.arange(nx + 1) * h
    z = np.arange(nz + 1) * h
    log_debug('b2 oracle solved on {}x{} nodes'.format(nx + 1, nz + 1))
    return x, z, values


def barrier_b2_decay_check(b, xs, nz=257):
    """C_bar estimate max over xs and z of |b2(x, z)| e^(pi x)"""
    xs = np.asarray(xs, dtype=np.float64)
    if np.any(xs <= 0):
        raise BarrierError('Decay scan needs x > 0')
    z = np.linspace(0.0, 1.0, nz)
    values = np.abs(b.eval(xs[:, None], z[None, :]))
    profile = values.max(axis=1) * np.exp(math.pi * xs)
    return DecayScan(float(profile.max()), xs, profile, b.decay_limit)


def harmonicity_residual(values, h):
    """Max of the (2N)-point discrete Laplacian over interior nodes"""
    values = np.asarray(values, dtype=np.float64)
    inner = tuple(slice(1, -1) for _ in range(values.ndim))
    lap = -2.0 * values.ndim * values[inner]
    for axis in range(values.ndim):
        for shift in (slice(2, None), slice(None, -2)):
            index = list(inner)
            index[axis] = shift
            lap = lap + values[tuple(index)]
    return float(np.max(np.abs(lap))) / (h * h)


def solve_barrier_b1(resolution, ndim=1):
    """
    b1 harmonic in (-4, 4)^ndim x (0, 4), 2 on the sides and top, 0 on z = 0.
    ``resolution`` nodes intervals across the width 8. lam = (2 - max b1 over
    [-2, 2]^ndim x [0, 2]) / 4.
    """
    if resolution < B1_MIN_RESOLUTION or resolution % 4:
        raise BarrierError('Resolution must be a multiple of 4 and >= {}, got {}'.format(
            B1_MIN_RESOLUTION, resolution))
    if ndim not in (1, 2):
        raise BarrierError('b1 is solved for ndim 1 or 2, got {}'.format(ndim))
    h = 2.0 * B1_HALF_WIDTH / resolution
    steps = resolution // 2
    # b1 = 2 - w with w = 2 on the floor and 0 elsewhere on the boundary
    w = _strip_modes(np.full((resolution - 1,) * ndim, 2.0), h, steps)
    values = 2.0 - w
    values[0] = 0.0
    residual = harmonicity_residual(values, h)
    scale = 2.0 / (h * h)
    if residual > HARMONIC_TOL * scale:
        raise BarrierError('b1 solve residual {:.3e} exceeds {:.3e}'.format(
            residual, HARMONIC_TOL * scale))
    x = np.linspace(-B1_HALF_WIDTH, B1_HALF_WIDTH, resolution + 1)
    z = np.arange(steps + 1) * h
    inner = np.abs(x) <= 2.0 + 1e-12
    index = (z <= 2.0 + 1e-12,) + (inner,) * ndim
    sub = values[np.ix_(*index)]
    lam = (2.0 - float(sub.max())) / 4.0
    log_info('b1 at resolution {}: lambda={:.6g}'.format(resolution, lam))
    return B1Solution((z,) + (x,) * ndim, values, h, lam)


# Constants ledger

def _log_margins(lam, delta, M, c_bar, c0, p_norm, ndim, k_range=K_RANGE):
    """Max over k of log(lhs) - log(rhs) per inequality; <= 0 means it holds"""
    k = np.arange(1, k_range + 1, dtype=np.float64)
    log2 = math.log(2.0)
    first = math.log(ndim * c_bar) - math.pi * np.exp(-k * math.log(2.0 * delta)) \
        - (math.log(lam) - (k + 2) * log2)
    second = -k * math.log(M) - (k + 1) * math.log(delta) + math.log(p_norm) \
        - (math.log(lam) - (k + 2) * log2)
    k3 = np.arange(12 * ndim, 24 * ndim + 1, dtype=np.float64)
    # M^-k >= C0^k M^(-(1+1/N)(k-3))
    third = k3 * math.log(c0) - (1.0 + 1.0 / ndim) * (k3 - 3) * math.log(M) + k3 * math.log(M)
    return {
        'cutoff_decay': float(first.max()),
        'kernel_tail': float(second.max()),
        'recursion_gain': float(third.max()),
    }


def verify_ledger(ledger, k_range=K_RANGE):
    return _log_margins(ledger.lam, ledger.delta, ledger.M, ledger.c_bar, ledger.c0,
                        ledger.p_norm, ledger.ndim, k_range)


def constants_ledger_build(lam, ndim=2, energy_constant=1.0, p_norm=None, c_bar=None,
                           k_range=K_RANGE):
    """
    Largest delta <= 1/4 on a 1e-3 ladder with N C_bar exp(-pi 2^-k / delta^k) <= lam 2^(-k-2)
    for k = 1..k_range, then M = max(1, C0^(2N), 2/delta, 8 ||P(1)||_L2 / (lam delta^2))
    with C0 = C 2^(1+2/N) / lam^(2/N).
    """
    if not 0 < lam < 1:
        raise BarrierError('lambda must lie in (0, 1), got {}'.format(lam))
    if energy_constant <= 0:
        raise BarrierError('Energy constant must be positive, got {}'.format(energy_constant))
    if p_norm is None:
        p_norm = extension.poisson_kernel_l2_norm(extension.poisson_kernel_spec(ndim))
    if c_bar is None:
        c_bar = barrier_b2_decay_check(BarrierB2(), np.linspace(0.1, 5.0, 50)).c_bar
    c0 = energy_constant * 2.0 ** (1.0 + 2.0 / ndim) / lam ** (2.0 / ndim)
    k = np.arange(1, k_range + 1, dtype=np.float64)
    bound = math.log(lam) - (k + 2) * math.log(2.0) - math.log(ndim * c_bar)
    delta = None
    for step in range(int(round(DELTA_MAX / DELTA_STEP)), 0, -1):
        candidate = step * DELTA_STEP
        if np.all(-math.pi * np.exp(-k * math.log(2.0 * candidate)) <= bound):
            delta = candidate
            break
    if delta is None:
        raise BarrierError('No delta in (0, {}] satisfies the cutoff decay bound for lambda={}'.format(
            DELTA_MAX, lam))
    M = max(1.0, c0 ** (2 * ndim), 2.0 / delta, 8.0 * p_norm / (lam * delta ** 2))
    margins = _log_margins(lam, delta, M, c_bar, c0, p_norm, ndim, k_range)
    ledger = ConstantsLedger(lam, delta, M, c_bar, c0, p_norm, ndim, energy_constant, margins)
    log_info('Constants ledger: delta={} M={:.6g} margins={}'.format(delta, M, margins))
    return ledger


# Isoperimetric lemma

def isoperimetric_check(omega):
    """
    |A| |B| against ||grad omega||_L2 |C|^(1/2) for A = {omega <= 0}, B = {omega >= 1},
    C = {0 < omega < 1}. Measures count cells; the gradient uses one-sided
    differences between neighbouring samples (no wrap).
    """
    values = omega.values
    cell = omega.grid.cell_volume
    a = np.count_nonzero(values <= 0.0) * cell
    b = np.count_nonzero(values >= 1.0) * cell
    c = np.count_nonzero((values > 0.0) & (values < 1.0)) * cell
    grad2 = 0.0
    for axis, h in enumerate(omega.grid.spacing):
        grad2 += float(np.sum(np.diff(values, axis=axis) ** 2)) / (h * h) * cell
    grad_norm = math.sqrt(grad2)
    lhs = a * b
    rhs = grad_norm * math.sqrt(c)
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    return IsoperimetricResult(lhs, rhs, ratio, a, b, c, grad_norm)


def box_grid(n, ndim=2, half_width=1.0):
    """Grid on [-half_width, half_width]^ndim; see ``box_coordinates``"""
    return spectral.Grid((n,) * ndim, 2.0 * half_width)


def box_coordinates(grid):
    """Cell centres of the box, shifted so the box is centred at 0"""
    return tuple(x + 0.5 * h - 0.5 * length
                 for x, h, length in zip(grid.coordinates(), grid.spacing, grid.lengths))


def _smooth_sample(rng, x):
    values = np.full(x[0].shape, 0.5)
    for _ in range(4):
        k = rng.uniform(0.5, 3.0, size=len(x)) * rng.choice([-1.0, 1.0], size=len(x))
        phase = rng.uniform(0.0, 2.0 * math.pi)
        values = values + rng.uniform(0.2, 0.6) * np.cos(sum(kj * xj for kj, xj in zip(k, x)) + phase)
    return values


def _ramp_sample(rng, x):
    direction = rng.standard_normal(len(x))
    direction /= np.linalg.norm(direction)
    offset = rng.uniform(-0.5, 0.5)
    width = rng.uniform(0.2, 1.0)
    s = sum(d * xj for d, xj in zip(direction, x))
    return np.clip((s - offset) / width, 0.0, 1.0)


def _bump_sample(rng, x):
    center = rng.uniform(-0.5, 0.5, size=len(x))
    width = rng.uniform(0.2, 0.6)
    height = rng.uniform(1.0, 2.0)
    r2 = sum((xj - c) ** 2 for xj, c in zip(x, center))
    return height * np.exp(-r2 / width ** 2) - rng.uniform(0.0, 0.3)


CORPUS_GENERATORS = (_smooth_sample, _ramp_sample, _bump_sample)


def isoperimetric_corpus(grid, count, seed):
    """``count`` fields cycling smooth, ramp and bump samples; parameters don't depend on the grid"""
    rng = np.random.default_rng(seed)
    x = box_coordinates(grid)
    return [spectral.PhysicalField(grid, CORPUS_GENERATORS[i % len(CORPUS_GENERATORS)](rng, x))
            for i in range(count)]


def isoperimetric_constant(grid, count, seed):
    """Empirical constant: max ratio over the corpus"""
    return max(isoperimetric_check(omega).ratio for omega in isoperimetric_corpus(grid, count, seed))


def isoperimetric_holdout_fraction(c_hat, grid, count, seed):
    """Fraction of fresh corpus fields with ratio <= c_hat"""
    ratios = [isoperimetric_check(omega).ratio for omega in isoperimetric_corpus(grid, count, seed)]
    return float(np.mean(np.asarray(ratios) <= c_hat))
