"""
Eigenfunction Galerkin scheme on a box B = (0, L_1) x ... x (0, L_N).

Modes are sigma_m(x) = prod_j sqrt(2/L_j) sin(m_j pi x_j / L_j) with eigenvalue
lambda_m^2 = sum_j (m_j pi / L_j)^2. The fractional operator acts as
sigma_m -> lambda_m sigma_m and transport enters through

    a_kl = integral (v . grad sigma_k) sigma_l

so that f'_k = -(eps lambda_k^2 + lambda_k) f_k + sum_l a_kl f_l.
"""
import collections
import itertools
import logging
import math

import numpy as np
import scipy.integrate
import scipy.linalg

from sqglab import quadrature, spectral
from sqglab.exception import GalerkinError, StabilityError


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


ANTISYMMETRY_TOL = 1e-8
QUADRATURE_FACTOR = 4
RK4_STABILITY = 2.78
GROWTH_TOL = 1e-12
PROJECTION_TOL = 5e-2

Coupling = collections.namedtuple('Coupling', ['matrix', 'defect', 'antisymmetric'])
GalerkinState = collections.namedtuple('GalerkinState', ['coeffs', 'time', 'epsilon'])
GalerkinTrajectory = collections.namedtuple(
    'GalerkinTrajectory', ['times', 'coeffs', 'epsilon', 'dissipation', 'generator', 'weights'])
TruncationLevel = collections.namedtuple(
    'TruncationLevel', ['level', 'residual', 'tolerance', 'projection_error', 'status'])


class EigenBasis:
    """First ``k_max`` Dirichlet eigenpairs of the box, sorted by eigenvalue"""

    def __init__(self, lengths, indices, quadrature_points):
        self.lengths = tuple(float(length) for length in lengths)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.ndim = len(self.lengths)
        self.k_max = self.indices.shape[0]
        self.quadrature_points = quadrature_points
        wavenumbers = self.indices * (math.pi / np.asarray(self.lengths))
        self.eigenvalues = np.sum(wavenumbers ** 2, axis=1)
        self.sqrt_eigenvalues = np.sqrt(self.eigenvalues)
        self.nodes = tuple(
            (np.arange(quadrature_points) + 0.5) * length / quadrature_points for length in self.lengths)
        self.weight = math.prod(length / quadrature_points for length in self.lengths)
        self._samples, self._gradients = self._tabulate()

    def _tabulate(self):
        # 1D factors per axis: sin and derivative at the nodes, indexed by m
        n_modes = self.k_max
        samples = np.ones((n_modes,) + (self.quadrature_points,) * self.ndim)
        gradients = [np.ones_like(samples) for _ in range(self.ndim)]
        for axis, (length, x) in enumerate(zip(self.lengths, self.nodes)):
            m = self.indices[:, axis][:, None]
            k = m * math.pi / length
            norm = math.sqrt(2.0 / length)
            s = norm * np.sin(k * x[None, :])
            ds = norm * k * np.cos(k * x[None, :])
            shape = [n_modes] + [1] * self.ndim
            shape[axis + 1] = self.quadrature_points
            samples = samples * s.reshape(shape)
            for j in range(self.ndim):
                gradients[j] = gradients[j] * (ds if j == axis else s).reshape(shape)
        flat = (n_modes, -1)
        return samples.reshape(flat), [g.reshape(flat) for g in gradients]

    @property
    def samples(self):
        """sigma_k at the quadrature nodes, shape (k_max, nodes)"""
        return self._samples

    @property
    def gradients(self):
        return self._gradients

    def node_coordinates(self):
        return tuple(x.ravel() for x in np.meshgrid(*self.nodes, indexing='ij'))

    def evaluate(self, k, points):
        """sigma_k at arbitrary points of shape (P, N)"""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        value = np.ones(points.shape[0])
        for axis, length in enumerate(self.lengths):
            m = self.indices[k, axis]
            value = value * math.sqrt(2.0 / length) * np.sin(m * math.pi * points[:, axis] / length)
        return value

    def gram(self):
        return self._samples @ self._samples.T * self.weight

    def project(self, values):
        """Coefficients of node samples ``values`` against the basis"""
        return self._samples @ np.asarray(values, dtype=np.float64).ravel() * self.weight

    def reconstruct(self, coeffs):
        """Node samples of sum_k f_k sigma_k"""
        return np.asarray(coeffs) @ self._samples


def _enumerate_indices(ndim, lengths, k_max):
    # every index with m_j <= k_max covers the first k_max eigenvalues
    candidates = np.array(list(itertools.product(range(1, k_max + 1), repeat=ndim)), dtype=np.int64)
    eig = np.sum((candidates * (math.pi / np.asarray(lengths))) ** 2, axis=1)
    # lexsort: last key is primary; ties broken by multi-index for prefix stability
    keys = [candidates[:, j] for j in reversed(range(ndim))] + [eig]
    order = np.lexsort(keys)
    return candidates[order[:k_max]]


def build_basis(k_max, lengths=(math.pi, math.pi), quadrature_points=None):
    """Sorted sine eigenbasis with tensor midpoint quadrature"""
    if k_max < 1:
        raise GalerkinError('k_max must be >= 1, got {}'.format(k_max))
    lengths = tuple(lengths)
    if not 1 <= len(lengths) <= 3 or any(length <= 0 for length in lengths):
        raise GalerkinError('Invalid box lengths {}'.format(lengths))
    indices = _enumerate_indices(len(lengths), lengths, k_max)
    highest = int(indices.max())
    required = QUADRATURE_FACTOR * highest
    if quadrature_points is None:
        quadrature_points = max(32, required)
    if quadrature_points < required:
        raise GalerkinError('Quadrature grid of {} points is too coarse for mode {} (need {})'.format(
            quadrature_points, highest, required))
    basis = EigenBasis(lengths, indices, quadrature_points)
    log_debug('Built basis: {} modes, highest index {}, {} nodes per axis'.format(
        k_max, highest, quadrature_points))
    return basis


# Drifts at the quadrature nodes

def zero_drift(basis):
    return tuple(np.zeros(basis.quadrature_points ** basis.ndim) for _ in range(basis.ndim))


def cellular_drift(basis, amplitude=1.0, k=1):
    """v = (-d_2 psi, d_1 psi), psi = A sin(k pi x_1/L_1) sin(k pi x_2/L_2), zero on the box boundary"""
    if basis.ndim < 2:
        raise GalerkinError('cellular drift needs N >= 2')
    x = basis.node_coordinates()
    p = k * math.pi / basis.lengths[0]
    q = k * math.pi / basis.lengths[1]
    v1 = -amplitude * q * np.sin(p * x[0]) * np.cos(q * x[1])
    v2 = amplitude * p * np.cos(p * x[0]) * np.sin(q * x[1])
    return (v1, v2) + tuple(np.zeros_like(v1) for _ in range(basis.ndim - 2))


def stream_drift(basis, psi):
    """
    Drift from a periodic stream function on a torus twice the box side. The
    stream function should be odd about the box faces so the drift is tangential.
    """
    if basis.ndim != 2 or psi.grid.ndim != 2:
        raise GalerkinError('Stream function drift needs N=2')
    expected = tuple(2.0 * length for length in basis.lengths)
    if not np.allclose(psi.grid.lengths, expected):
        raise GalerkinError('Stream function domain {} should be {}'.format(psi.grid.lengths, expected))
    s = spectral.forward(psi)
    points = np.stack(basis.node_coordinates(), axis=-1)
    d1 = spectral.evaluate_at(spectral.derivative(s, 1), points)
    d2 = spectral.evaluate_at(spectral.derivative(s, 2), points)
    return -d2, d1


def coupling_matrix(basis, velocity):
    """a_kl by quadrature, with the antisymmetry defect max|a + a^T|"""
    velocity = tuple(np.asarray(v, dtype=np.float64).ravel() for v in velocity)
    if len(velocity) != basis.ndim:
        raise GalerkinError('Drift has {} components in a {}D box'.format(len(velocity), basis.ndim))
    transport = sum(g * v[None, :] for g, v in zip(basis.gradients, velocity))
    matrix = transport @ basis.samples.T * basis.weight
    defect = float(np.max(np.abs(matrix + matrix.T))) if matrix.size else 0.0
    antisymmetric = defect < ANTISYMMETRY_TOL
    if not antisymmetric:
        log_warning('Coupling antisymmetry defect {:.3e} exceeds {:.1e}'.format(defect, ANTISYMMETRY_TOL))
    return Coupling(matrix, defect, antisymmetric)


def damping(basis, epsilon, dissipation=True):
    """eps lambda_k^2 + lambda_k, or eps lambda_k^2 alone with dissipation off"""
    rate = epsilon * basis.eigenvalues
    if dissipation:
        rate = rate + basis.sqrt_eigenvalues
    return rate


def generator(basis, a, epsilon, dissipation=True):
    matrix = a.matrix if isinstance(a, Coupling) else np.asarray(a)
    return matrix - np.diag(damping(basis, epsilon, dissipation))


def spectral_radius(matrix):
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(scipy.linalg.eigvals(matrix))))


def check_stability(matrix, dt):
    rho = spectral_radius(matrix)
    if dt * rho > RK4_STABILITY:
        raise StabilityError('dt={:.3g} times spectral radius {:.3g} exceeds RK4 limit {}'.format(
            dt, rho, RK4_STABILITY))
    return rho


def _rk4(matrix, f, dt):
    k1 = matrix @ f
    k2 = matrix @ (f + 0.5 * dt * k1)
    k3 = matrix @ (f + 0.5 * dt * k2)
    k4 = matrix @ (f + dt * k3)
    return f + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def galerkin_step(state, basis, a, dt, dissipation=True, matrix=None):
    """One RK4 step of f' = A f. Energy growth means the step is unstable"""
    if matrix is None:
        matrix = generator(basis, a, state.epsilon, dissipation)
    coeffs = _rk4(matrix, state.coeffs, dt)
    before = float(np.dot(state.coeffs, state.coeffs))
    after = float(np.dot(coeffs, coeffs))
    if not np.all(np.isfinite(coeffs)) or after > before * (1.0 + GROWTH_TOL) + 1e-300:
        raise StabilityError('Energy grew from {:.6g} to {:.6g} at t={:.6g}'.format(
            before, after, state.time + dt))
    return GalerkinState(coeffs, state.time + dt, state.epsilon)


def galerkin_run(basis, f0, a, t_end, dt, epsilon=0.0, dissipation=True):
    matrix = generator(basis, a, epsilon, dissipation)
    check_stability(matrix, dt)
    nsteps = max(1, int(round(t_end / dt)))
    h = t_end / nsteps
    state = GalerkinState(np.asarray(f0, dtype=np.float64), 0.0, epsilon)
    times = [0.0]
    coeffs = [state.coeffs]
    for _ in range(nsteps):
        state = galerkin_step(state, basis, a, h, dissipation, matrix=matrix)
        times.append(state.time)
        coeffs.append(state.coeffs)
    log_info('Galerkin run: {} modes, {} steps, eps={}'.format(basis.k_max, nsteps, epsilon))
    return GalerkinTrajectory(np.asarray(times), np.asarray(coeffs), epsilon, dissipation, matrix,
                              damping(basis, epsilon, dissipation))


def _window(traj, t1, t2):
    t1 = traj.times[0] if t1 is None else t1
    t2 = traj.times[-1] if t2 is None else t2
    eps = 1e-12 * max(1.0, abs(traj.times[-1]))
    index = np.nonzero((traj.times >= t1 - eps) & (traj.times <= t2 + eps))[0]
    if index.size == 0:
        raise GalerkinError('No samples in [{}, {}]'.format(t1, t2))
    return index


def galerkin_energy_identity(traj, t1=None, t2=None):
    """
    sum f^2(t2) + 2 integral sum (eps lambda^2 + lambda) f^2 - sum f^2(t1), the time
    integral by end-corrected trapezoid (fourth order).
    """
    index = _window(traj, t1, t2)
    times = traj.times[index]
    f = traj.coeffs[index]
    rate = traj.weights
    density = np.sum(rate * f * f, axis=1)
    derivative = 2.0 * np.sum(rate * f * (f @ traj.generator.T), axis=1)
    integral = quadrature.hermite_trapezoid(times, density, derivative)
    energy = np.sum(f * f, axis=1)
    return float(energy[-1] + 2.0 * integral - energy[0])


def galerkin_truncation_check(traj, basis, levels, t1=None, t2=None, projection_tol=PROJECTION_TOL):
    """
    Level-set inequality for gamma = (theta - level)_+ of the reconstructed solution:

        ||gamma(t2)||^2 + 2 integral sum (eps lambda^2 + lambda) g_k^2 <= ||gamma(t1)||^2

    with g_k the projection of gamma. Levels whose projection error exceeds
    ``projection_tol`` are inconclusive. level = -inf reproduces the energy identity.
    """
    index = _window(traj, t1, t2)
    times = traj.times[index]
    results = []
    for level in levels:
        if np.isneginf(level):
            residual = galerkin_energy_identity(traj, times[0], times[-1])
            status = 'pass' if residual <= 1e-8 * max(1.0, np.sum(traj.coeffs[index[0]] ** 2)) else 'fail'
            results.append(TruncationLevel(level, residual, 1e-8, 0.0, status))
            continue
        energy = []
        density = []
        worst = 0.0
        for i in index:
            theta = basis.reconstruct(traj.coeffs[i])
            gamma = np.maximum(theta - level, 0.0)
            g = basis.project(gamma)
            exact = float(np.sum(gamma * gamma) * basis.weight)
            error = float(np.sum((gamma - basis.reconstruct(g)) ** 2) * basis.weight)
            if exact > 0:
                worst = max(worst, math.sqrt(error / exact))
            energy.append(float(np.dot(g, g)))
            density.append(float(np.sum(traj.weights * g * g)))
        if len(times) >= 3:
            integral = float(scipy.integrate.simpson(density, x=times))
        else:
            integral = float(scipy.integrate.trapezoid(density, times))
        residual = energy[-1] + 2.0 * integral - energy[0]
        scale = max(energy[0], 1e-300)
        tolerance = 4.0 * worst * scale + 1e-10 * scale
        if worst > projection_tol:
            status = 'inconclusive'
        elif residual <= tolerance:
            status = 'pass'
        else:
            status = 'fail'
        results.append(TruncationLevel(float(level), residual, tolerance, worst, status))
    return results


# Initial data at the nodes

def analytic_bump(basis, amplitude=1.0):
    """prod sin(pi x_j/L_j) * exp(prod cos(pi x_j/L_j)); its odd extension is analytic"""
    x = basis.node_coordinates()
    s = np.ones_like(x[0])
    c = np.ones_like(x[0])
    for xj, length in zip(x, basis.lengths):
        s = s * np.sin(math.pi * xj / length)
        c = c * np.cos(math.pi * xj / length)
    return amplitude * s * np.exp(c)


def galerkin_cauchy_gap(k_max, lengths=(math.pi, math.pi), t_end=0.5, dt=1e-3, epsilon=0.0,
                        drift_amplitude=1.0):
    """L2 distance at t_end between the k_max and 2 k_max solutions for analytic data"""
    large = build_basis(2 * k_max, lengths)
    small = build_basis(k_max, lengths, quadrature_points=large.quadrature_points)
    results = []
    for basis in (small, large):
        if basis.ndim >= 2:
            velocity = cellular_drift(basis, drift_amplitude)
        else:
            velocity = zero_drift(basis)
        a = coupling_matrix(basis, velocity)
        f0 = basis.project(analytic_bump(basis))
        results.append(galerkin_run(basis, f0, a, t_end, dt, epsilon).coeffs[-1])
    coarse, fine = results
    diff = fine.copy()
    diff[:k_max] -= coarse
    return float(np.sqrt(np.dot(diff, diff)))
