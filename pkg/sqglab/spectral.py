"""
Fields on the periodic grid and Fourier multiplier operators.

Transforms use ``norm='forward'``: coefficients carry the 1/(number of points)
factor, so they don't depend on resolution and Parseval reads

    sum(values**2) * cell_volume == sum(|coeffs|**2) * volume

Odd multipliers (derivatives, Riesz transforms) vanish on the Nyquist plane of
their axis so that real fields map to real fields. Even multipliers use the
full |k|.
"""
import collections
import functools
import math

import numpy as np
import scipy.fft

from sqglab.exception import GridError, NonFiniteError, OperatorError


TWO_PI = 2.0 * math.pi
MAX_DIM = 3
MIN_POINTS = 8


class Grid(collections.namedtuple('Grid', ['dims', 'lengths'])):
    """Uniform periodic grid on [0, L_1) x ... x [0, L_N)"""
    __slots__ = ()

    def __new__(cls, dims, lengths=None):
        dims = tuple(int(n) for n in dims)
        if not 1 <= len(dims) <= MAX_DIM:
            raise GridError('Spatial dimension must be 1, 2 or 3, got {}'.format(len(dims)))
        if lengths is None:
            lengths = (TWO_PI,) * len(dims)
        elif np.isscalar(lengths):
            lengths = (float(lengths),) * len(dims)
        lengths = tuple(float(length) for length in lengths)
        if len(lengths) != len(dims):
            raise GridError('Got {} lengths for {} axes'.format(len(lengths), len(dims)))
        for n in dims:
            if n < MIN_POINTS or n & (n - 1):
                raise GridError('Axis size must be a power of two >= {}, got {}'.format(MIN_POINTS, n))
        for length in lengths:
            if not (math.isfinite(length) and length > 0):
                raise GridError('Domain length must be positive, got {}'.format(length))
        return super().__new__(cls, dims, lengths)

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def shape(self):
        return self.dims

    @property
    def npoints(self):
        return math.prod(self.dims)

    @property
    def spacing(self):
        return tuple(length / n for length, n in zip(self.lengths, self.dims))

    @property
    def cell_volume(self):
        return math.prod(self.spacing)

    @property
    def volume(self):
        return math.prod(self.lengths)

    def refined(self, factor=2):
        return Grid(tuple(n * factor for n in self.dims), self.lengths)

    def coordinates(self):
        """Tuple of coordinate arrays, one per axis, broadcast to the grid shape"""
        return _coordinates(self)


class PhysicalField(collections.namedtuple('PhysicalField', ['grid', 'values', 'time_tag'])):
    """Real samples on a Grid, row-major, with an optional simulation time"""
    __slots__ = ()

    def __new__(cls, grid, values, time_tag=None):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            if values.size != grid.npoints:
                raise GridError(
                    'Field of {} values does not match grid {}'.format(values.size, grid.dims))
            values = values.reshape(grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError('Field holds {} non-finite values'.format(
                int(np.count_nonzero(~np.isfinite(values)))))
        if time_tag is not None:
            time_tag = float(time_tag)
        return super().__new__(cls, grid, values, time_tag)

    def with_values(self, values):
        return PhysicalField(self.grid, values, self.time_tag)

    def mean(self):
        return float(self.values.mean())


class SpectralField(collections.namedtuple('SpectralField', ['grid', 'coeffs'])):
    """Fourier coefficients in scipy.fft ordering"""
    __slots__ = ()

    def __new__(cls, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != grid.shape:
            raise GridError('Coefficients of shape {} do not match grid {}'.format(
                coeffs.shape, grid.dims))
        if not np.all(np.isfinite(coeffs)):
            raise NonFiniteError('Spectral field holds non-finite coefficients')
        return super().__new__(cls, grid, coeffs)

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def scale(self, factor):
        return SpectralField(self.grid, self.coeffs * factor)


# Cached wavenumber tables. Grid is hashable so these are keyed per grid.

@functools.lru_cache(maxsize=32)
def _coordinates(grid):
    axes = [np.arange(n) * h for n, h in zip(grid.dims, grid.spacing)]
    return tuple(np.meshgrid(*axes, indexing='ij'))


@functools.lru_cache(maxsize=32)
def integer_wavenumbers(grid):
    """Signed integer wavenumbers per axis, broadcastable to the grid shape"""
    result = []
    for axis, n in enumerate(grid.dims):
        k = np.rint(scipy.fft.fftfreq(n, 1.0 / n)).astype(np.int64)
        shape = [1] * grid.ndim
        shape[axis] = n
        result.append(k.reshape(shape))
    return tuple(result)


@functools.lru_cache(maxsize=32)
def wavevectors(grid):
    """Physical wavevector components k'_j = 2*pi*k_j/L_j"""
    return tuple(TWO_PI / length * k for length, k in zip(grid.lengths, integer_wavenumbers(grid)))


@functools.lru_cache(maxsize=32)
def wavenumber_norm(grid):
    """|k'| on the full grid"""
    norm2 = np.zeros(grid.shape)
    for k in wavevectors(grid):
        norm2 = norm2 + k ** 2
    return np.sqrt(norm2)


@functools.lru_cache(maxsize=32)
def nyquist_mask(grid, axis):
    """True off the Nyquist plane of ``axis``"""
    k = integer_wavenumbers(grid)[axis]
    return np.broadcast_to(k != -(grid.dims[axis] // 2), grid.shape)


@functools.lru_cache(maxsize=32)
def dealias_mask(grid):
    mask = np.ones(grid.shape, dtype=bool)
    for k, n in zip(integer_wavenumbers(grid), grid.dims):
        mask = mask & (3 * np.abs(k) <= n)
    return mask


@functools.lru_cache(maxsize=64)
def derivative_multiplier(grid, axis):
    return np.where(nyquist_mask(grid, axis), 1j * wavevectors(grid)[axis], 0.0)


@functools.lru_cache(maxsize=64)
def riesz_multiplier(grid, axis):
    norm = wavenumber_norm(grid)
    safe = np.where(norm > 0, norm, 1.0)
    keep = nyquist_mask(grid, axis) & (norm > 0)
    return np.where(keep, 1j * wavevectors(grid)[axis] / safe, 0.0)


def _check_axis(grid, j):
    if not isinstance(j, (int, np.integer)) or not 1 <= j <= grid.ndim:
        raise OperatorError('Axis must be in 1..{}, got {}'.format(grid.ndim, j))
    return int(j) - 1


def _check_beta(beta):
    if not 0.0 <= beta <= 2.0:
        raise OperatorError('beta must lie in [0, 2], got {}'.format(beta))


# Transforms

def forward(f):
    """PhysicalField -> SpectralField"""
    if not isinstance(f, PhysicalField):
        raise GridError('forward expects a PhysicalField, got {}'.format(type(f).__name__))
    return SpectralField(f.grid, scipy.fft.fftn(f.values, norm='forward'))


def inverse(s, time_tag=None):
    """SpectralField -> PhysicalField, real part"""
    values = scipy.fft.ifftn(s.coeffs, norm='forward').real
    return PhysicalField(s.grid, values, time_tag)


def transform_pair(f):
    """Forward transform of ``f`` and the inverse of that, for round-trip checks"""
    s = forward(f)
    return s, inverse(s, f.time_tag)


# Multipliers

def fractional_laplacian(s, beta):
    """Multiply by |k'|^beta. The k=0 mode is zeroed for beta > 0, kept for beta = 0"""
    _check_beta(beta)
    if beta == 0:
        return SpectralField(s.grid, s.coeffs.copy())
    return SpectralField(s.grid, s.coeffs * wavenumber_norm(s.grid) ** beta)


def riesz_transform(s, j):
    """R_j with multiplier i k'_j/|k'|; zero at k=0"""
    axis = _check_axis(s.grid, j)
    return SpectralField(s.grid, s.coeffs * riesz_multiplier(s.grid, axis))


def derivative(s, j):
    """Spectral d/dx_j"""
    axis = _check_axis(s.grid, j)
    return SpectralField(s.grid, s.coeffs * derivative_multiplier(s.grid, axis))


def gradient(f):
    s = forward(f)
    return tuple(inverse(derivative(s, j), f.time_tag) for j in range(1, f.grid.ndim + 1))


def divergence(v):
    v = tuple(v)
    grid = v[0].grid
    if len(v) != grid.ndim:
        raise GridError('Vector field has {} components on a {}D grid'.format(len(v), grid.ndim))
    total = np.zeros(grid.shape, dtype=np.complex128)
    for j, component in enumerate(v, start=1):
        total += derivative(forward(component), j).coeffs
    return inverse(SpectralField(grid, total), v[0].time_tag)


def dealias(s):
    """2/3 rule: zero any mode with |k_j| > dims_j/3"""
    return SpectralField(s.grid, np.where(dealias_mask(s.grid), s.coeffs, 0.0))


# Norms

def l2_norm_squared(f):
    return float(np.sum(f.values ** 2) * f.grid.cell_volume)


def sobolev_seminorm(s, order):
    """||Lambda^order f||^2 computed from coefficients"""
    if order < 0:
        raise OperatorError('Seminorm order must be nonnegative, got {}'.format(order))
    weight = wavenumber_norm(s.grid) ** (2.0 * order)
    return float(np.sum(weight * np.abs(s.coeffs) ** 2) * s.grid.volume)


def h_half_seminorm(s):
    """sum |k'| |c_k|^2 * volume, the squared L2 norm of Lambda^(1/2) f"""
    return float(np.sum(wavenumber_norm(s.grid) * np.abs(s.coeffs) ** 2) * s.grid.volume)


# Resampling

def _padding_index(n, factor):
    k = np.rint(scipy.fft.fftfreq(n, 1.0 / n)).astype(np.int64)
    keep = np.nonzero(k != -(n // 2))[0]
    return keep, np.mod(k[keep], n * factor)


def upsample(f, factor=2):
    """Spectral zero padding onto a grid ``factor`` times finer. Drops the Nyquist mode"""
    s = forward(f) if isinstance(f, PhysicalField) else f
    fine = s.grid.refined(factor)
    source, target = zip(*(_padding_index(n, factor) for n in s.grid.dims))
    coeffs = np.zeros(fine.shape, dtype=np.complex128)
    coeffs[np.ix_(*target)] = s.coeffs[np.ix_(*source)]
    result = SpectralField(fine, coeffs)
    if isinstance(f, PhysicalField):
        return inverse(result, f.time_tag)
    return result


def evaluate_at(s, points):
    """Trigonometric interpolant of ``s`` at off-grid points of shape (P, N)"""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != s.grid.ndim:
        raise GridError('Points of dimension {} on a {}D grid'.format(points.shape[1], s.grid.ndim))
    ks = [k.ravel() for k in wavevectors(s.grid)]
    out = np.empty(points.shape[0])
    for i, x in enumerate(points):
        phase = functools.reduce(np.multiply.outer, [np.exp(1j * k * xj) for k, xj in zip(ks, x)])
        out[i] = np.sum(s.coeffs * phase).real
    return out


# Generators

def _band_grid(grid, k_max):
    n = MIN_POINTS
    while n < 2 * int(math.floor(k_max)) + 2:
        n *= 2
    return Grid((n,) * grid.ndim, grid.lengths)


def random_band_field(grid, k_min, k_max, amplitude, seed):
    """
    Mean-zero random field with energy in the shell k_min <= |k| <= k_max (integer
    wavenumbers), scaled so max|theta| == amplitude. Nyquist modes are never excited.

    Coefficients are drawn on the smallest grid holding the shell and copied by
    wavenumber, so one seed gives the same function at every resolution.
    """
    base = _band_grid(grid, k_max)
    rng = np.random.default_rng(seed)
    s = forward(PhysicalField(base, rng.standard_normal(base.shape)))
    knorm = np.sqrt(sum(k.astype(np.float64) ** 2 for k in integer_wavenumbers(base)))
    keep = (knorm >= k_min) & (knorm <= k_max)
    for axis in range(base.ndim):
        keep = keep & nyquist_mask(base, axis)
    band = np.where(keep, s.coeffs, 0.0)
    source = []
    target = []
    for m, n in zip(base.dims, grid.dims):
        k = np.rint(scipy.fft.fftfreq(m, 1.0 / m)).astype(np.int64)
        fits = np.nonzero(np.abs(k) < n // 2)[0]
        source.append(fits)
        target.append(np.mod(k[fits], n))
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    coeffs[np.ix_(*target)] = band[np.ix_(*source)]
    field = inverse(SpectralField(grid, coeffs))
    peak = np.max(np.abs(field.values))
    if peak == 0:
        return field
    return field.with_values(field.values * (amplitude / peak))
