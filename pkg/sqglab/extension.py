"""Harmonic extension to the upper half space, Poisson kernel, extension energies"""
import collections
import logging
import math

import numpy as np
import scipy.fft
import scipy.integrate
import scipy.special

from sqglab import spectral
from sqglab.exception import GridError, NonFiniteError, OperatorError, SupportError


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


DZ_MIN = 1e-3
Z_MAX = 8.0
NUM_LEVELS = 64
SUPPORT_TOL = 1e-3


ExtensionEnergy = collections.namedtuple(
    'ExtensionEnergy', ['total', 'cutoff_term', 'gradient_term', 'cross_term'])


def default_z_levels(dz_min=DZ_MIN, z_max=Z_MAX, num=NUM_LEVELS):
    """z = 0 followed by geometric spacing from dz_min to z_max"""
    return np.concatenate([[0.0], np.geomspace(dz_min, z_max, num - 1)])


def _check_z_levels(z_levels):
    z = np.asarray(z_levels, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise OperatorError('z_levels must be a non-empty 1D sequence')
    if not np.all(np.isfinite(z)):
        raise NonFiniteError('z_levels hold non-finite values')
    if np.any(z < 0):
        raise OperatorError('Negative z level {}'.format(z.min()))
    if z[0] != 0.0:
        raise OperatorError('First z level must be 0, got {}'.format(z[0]))
    if np.any(np.diff(z) <= 0):
        raise OperatorError('z_levels must be strictly increasing')
    return z


class ExtensionField(collections.namedtuple('ExtensionField', ['grid', 'z_levels', 'values'])):
    """Samples of the extension on grid x z_levels, z-major: values[iz] is one level"""
    __slots__ = ()

    def __new__(cls, grid, z_levels, values):
        z = _check_z_levels(z_levels)
        values = np.asarray(values, dtype=np.float64)
        shape = (z.size,) + grid.shape
        if values.shape != shape:
            if values.size != math.prod(shape):
                raise GridError('Extension of {} values does not match {}'.format(values.size, shape))
            values = values.reshape(shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError('Extension holds non-finite values')
        return super().__new__(cls, grid, z, values)

    def boundary(self):
        return spectral.PhysicalField(self.grid, self.values[0])

    def level(self, iz):
        return spectral.PhysicalField(self.grid, self.values[iz])


def halve_z_spacing(z_levels):
    """Midpoints inserted between neighbouring levels"""
    z = _check_z_levels(z_levels)
    return np.sort(np.concatenate([z, 0.5 * (z[1:] + z[:-1])]))


def _spatial_axes(grid):
    return tuple(range(1, grid.ndim + 1))


def harmonic_extension(theta, z_levels=None):
    """Level z carries coefficients theta_hat(k) * exp(-|k'| z)"""
    if z_levels is None:
        z_levels = default_z_levels()
    z = _check_z_levels(z_levels)
    grid = theta.grid
    coeffs = spectral.forward(theta).coeffs
    decay = np.exp(-np.multiply.outer(z, spectral.wavenumber_norm(grid)))
    values = scipy.fft.ifftn(decay * coeffs, axes=_spatial_axes(grid), norm='forward').real
    # exact trace
    values[0] = theta.values
    return ExtensionField(grid, z, values)


def one_sided_weights(z_levels):
    """Second order weights for f'(0) from the first three (nonuniform) levels"""
    h1 = z_levels[1] - z_levels[0]
    h2 = z_levels[2] - z_levels[1]
    return (-(2.0 * h1 + h2) / (h1 * (h1 + h2)),
            (h1 + h2) / (h1 * h2),
            -h1 / (h2 * (h1 + h2)))


def normal_derivative_at_boundary(ext):
    """-d/dz at z = 0, which realizes Lambda on the boundary trace"""
    if ext.z_levels.size < 3:
        raise OperatorError('Need at least 3 z levels, got {}'.format(ext.z_levels.size))
    w0, w1, w2 = one_sided_weights(ext.z_levels)
    dz = w0 * ext.values[0] + w1 * ext.values[1] + w2 * ext.values[2]
    return spectral.PhysicalField(ext.grid, -dz)


# Poisson kernel

class PoissonKernelSpec(collections.namedtuple('PoissonKernelSpec', ['ndim', 'constant'])):
    """P(t, x) = C t / (|x|^2 + t^2)^((N+1)/2)"""
    __slots__ = ()


def sphere_area(ndim):
    """Surface area of the unit sphere in R^ndim"""
    return 2.0 * math.pi ** (ndim / 2.0) / scipy.special.gamma(ndim / 2.0)


def poisson_constant_closed_form(ndim):
    return scipy.special.gamma((ndim + 1) / 2.0) / math.pi ** ((ndim + 1) / 2.0)


def _radial_integral(integrand, radius):
    value, _ = scipy.integrate.quad(integrand, 0.0, radius, limit=500, epsabs=1e-13, epsrel=1e-12)
    return value


def poisson_kernel_mass(spec, t=1.0, radius=np.inf):
    """Integral of P(t, .) over the ball of given radius, by radial quadrature"""
    if t <= 0:
        raise OperatorError('Poisson kernel needs t > 0, got {}'.format(t))
    n = spec.ndim
    area = sphere_area(n)

    def integrand(r):
        return area * r ** (n - 1) * spec.constant * t / (r * r + t * t) ** ((n + 1) / 2.0)

    return _radial_integral(integrand, radius)


def poisson_kernel_spec(ndim):
    """Kernel spec with C fixed by unit mass, computed by quadrature"""
    if ndim not in (1, 2, 3):
        raise OperatorError('Poisson kernel dimension must be 1, 2 or 3, got {}'.format(ndim))
    unit_mass = poisson_kernel_mass(PoissonKernelSpec(ndim, 1.0))
    constant = 1.0 / unit_mass
    log_debug('Poisson constant N={}: quadrature {:.15g}, closed form {:.15g}'.format(
        ndim, constant, poisson_constant_closed_form(ndim)))
    return PoissonKernelSpec(ndim, constant)


def poisson_kernel_eval(spec, t, x):
    """Kernel value at point(s) x; last axis of x holds the N coordinates"""
    if t <= 0:
        raise OperatorError('Poisson kernel needs t > 0, got {}'.format(t))
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != spec.ndim:
        raise OperatorError('Point of dimension {} for an N={} kernel'.format(x.shape[-1], spec.ndim))
    r2 = np.sum(x * x, axis=-1)
    return spec.constant * t / (r2 + t * t) ** ((spec.ndim + 1) / 2.0)


def poisson_kernel_l2_norm(spec, t=1.0):
    """||P(t, .)||_L2 over R^N"""
    if t <= 0:
        raise OperatorError('Poisson kernel needs t > 0, got {}'.format(t))
    n = spec.ndim
    area = sphere_area(n)

    def integrand(r):
        return area * r ** (n - 1) * (spec.constant * t) ** 2 / (r * r + t * t) ** (n + 1)

    return math.sqrt(_radial_integral(integrand, np.inf))


def poisson_convolve(theta, t):
    """P(t) * theta via the multiplier exp(-|k'| t)"""
    if t <= 0:
        raise OperatorError('Poisson convolution needs t > 0, got {}'.format(t))
    s = spectral.forward(theta)
    decay = np.exp(-t * spectral.wavenumber_norm(theta.grid))
    return spectral.inverse(spectral.SpectralField(theta.grid, s.coeffs * decay), theta.time_tag)


def poisson_convolve_direct(theta, t, images=8, spec=None):
    """
    P(t) * theta by direct quadrature of the kernel, periodized over
    (2*images + 1)^N copies of the cell. Cross-check for poisson_convolve.
    """
    if t <= 0:
        raise OperatorError('Poisson convolution needs t > 0, got {}'.format(t))
    grid = theta.grid
    if spec is None:
        spec = poisson_kernel_spec(grid.ndim)
    offsets = []
    for n, h in zip(grid.dims, grid.spacing):
        idx = np.rint(scipy.fft.fftfreq(n, 1.0 / n))
        offsets.append(idx * h)
    mesh = np.stack(np.meshgrid(*offsets, indexing='ij'), axis=-1)
    kernel = np.zeros(grid.shape)
    shifts = np.arange(-images, images + 1)
    for image in np.stack(np.meshgrid(*([shifts] * grid.ndim), indexing='ij'), axis=-1).reshape(-1, grid.ndim):
        kernel += poisson_kernel_eval(spec, t, mesh + image * np.asarray(grid.lengths))
    kernel *= grid.cell_volume
    conv = scipy.fft.ifftn(scipy.fft.fftn(kernel) * scipy.fft.fftn(theta.values)).real
    return spectral.PhysicalField(grid, conv, theta.time_tag)


# Energies

def _as_cutoff_values(ext, cutoff):
    values = cutoff.values if hasattr(cutoff, 'values') else cutoff
    values = np.asarray(values, dtype=np.float64)
    if values.shape != ext.values.shape:
        values = np.broadcast_to(values, ext.values.shape)
    return values


def _x_gradient(ext_values, grid):
    coeffs = scipy.fft.fftn(ext_values, axes=_spatial_axes(grid), norm='forward')
    result = []
    for axis in range(grid.ndim):
        mult = spectral.derivative_multiplier(grid, axis)
        result.append(scipy.fft.ifftn(coeffs * mult, axes=_spatial_axes(grid), norm='forward').real)
    return result


def _integrate(density, ext):
    per_level = density.reshape(density.shape[0], -1).sum(axis=1) * ext.grid.cell_volume
    return float(scipy.integrate.trapezoid(per_level, ext.z_levels))


def extension_energy_terms(ext, cutoff, level=0.0):
    """
    Split of the integral of |grad(eta * (theta* - level)_+)|^2 into
    eta^2 |grad theta*_+|^2, theta*_+^2 |grad eta|^2 and the cross term.
    x-derivatives are spectral, z-derivatives second order finite differences.
    """
    eta = _as_cutoff_values(ext, cutoff)
    if np.isneginf(level):
        positive = ext.values
        indicator = np.ones(ext.values.shape, dtype=bool)
    else:
        shifted = ext.values - level
        positive = np.maximum(shifted, 0.0)
        indicator = shifted > 0
    product = eta * positive
    peak = np.max(np.abs(product))
    if peak > 0 and np.max(np.abs(product[-1])) > SUPPORT_TOL * peak:
        raise SupportError(
            'Cutoff times positive part is {:.3e} of its maximum at z={}'.format(
                np.max(np.abs(product[-1])) / peak, ext.z_levels[-1]))
    if peak == 0:
        return ExtensionEnergy(0.0, 0.0, 0.0, 0.0)

    grad_theta = _x_gradient(ext.values, ext.grid)
    grad_theta.append(np.gradient(ext.values, ext.z_levels, axis=0, edge_order=2))
    grad_eta = _x_gradient(eta, ext.grid)
    grad_eta.append(np.gradient(eta, ext.z_levels, axis=0, edge_order=2))

    grad_pos2 = sum(g * g for g in grad_theta) * indicator
    grad_eta2 = sum(g * g for g in grad_eta)
    dot = sum(a * b for a, b in zip(grad_theta, grad_eta)) * indicator

    cutoff_term = _integrate(eta * eta * grad_pos2, ext)
    gradient_term = _integrate(positive * positive * grad_eta2, ext)
    cross_term = _integrate(2.0 * eta * positive * dot, ext)
    total = cutoff_term + gradient_term + cross_term
    return ExtensionEnergy(max(total, 0.0), cutoff_term, gradient_term, cross_term)


def extension_dirichlet_energy(ext, cutoff, level=0.0):
    """Integral of |grad(eta (theta* - level)_+)|^2 over grid x z-range"""
    return extension_energy_terms(ext, cutoff, level).total


def trace_energy_gap(theta, z_levels=None):
    """
    Extension energy of theta* (cutoff 1) minus ||Lambda^(1/2) theta||^2. Zero up to
    z-discretization and z-truncation for mean-zero theta.
    """
    ext = harmonic_extension(theta, z_levels)
    energy = extension_dirichlet_energy(ext, 1.0, level=-np.inf)
    return energy - spectral.h_half_seminorm(spectral.forward(theta))
