"""
Pseudo-spectral integration of

    d_t theta + v . grad theta = -kappa Lambda^beta theta

on the periodic grid, with v prescribed (divergence free) or given by the SQG
closure u = (-R_2 theta, R_1 theta). Time stepping is integrating-factor RK4
(Lawson): the linear part is exact, RK4 handles transport.
"""
import collections
import csv
import dataclasses
import json
import logging
import math
import os

from enum import IntEnum

import numpy as np
import scipy.fft

from sqglab import messaging, quadrature, spectral
from sqglab.exception import (
    BlowUpError, CFLError, DriftError, GridError, SolverError)


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


CFL = 0.5
DIV_TOL = 1e-10
AUTO = 'auto'
SCALAR_NAMES = ('time', 'l2', 'linf', 'hhalf', 'umax', 'energy_residual')
TRAJECTORY_META = 'trajectory.json'
DIAGNOSTICS_CSV = 'diagnostics.csv'


class RunState(IntEnum):
    RUNNING = 0
    COMPLETED = 1
    FAILED = 2


class DriftMode(IntEnum):
    ZERO = 0
    SQG = 1
    PRESCRIBED = 2


InitialCondition = collections.namedtuple('InitialCondition', ['name', 'params', 'seed'])
InitialCondition.__new__.__defaults__ = ({}, None)

DriftSpec = collections.namedtuple('DriftSpec', ['mode', 'name', 'params'])
DriftSpec.__new__.__defaults__ = (None, {})

# time, step, spectral coefficients, cached nonlinear term, max|u|, velocity arrays
SolverState = collections.namedtuple(
    'SolverState', ['time', 'step', 'coeffs', 'nonlinear', 'umax', 'velocity'])


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    grid: spectral.Grid
    beta: float = 1.0
    kappa: float = 1.0
    dt: object = AUTO
    t_end: float = 1.0
    initial_condition: InitialCondition = InitialCondition('random_band')
    drift: DriftSpec = DriftSpec(DriftMode.SQG)
    dealias: bool = True
    snapshot_stride: int = 1
    cfl: float = CFL

    def __post_init__(self):
        if not 0.0 < self.beta <= 2.0:
            raise SolverError('beta must lie in (0, 2], got {}'.format(self.beta))
        if not self.kappa >= 0.0:
            raise SolverError('kappa must be nonnegative, got {}'.format(self.kappa))
        if self.dt != AUTO and not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise SolverError("dt must be positive or 'auto', got {!r}".format(self.dt))
        if not (math.isfinite(self.t_end) and self.t_end >= 0.0):
            raise SolverError('t_end must be finite and nonnegative, got {}'.format(self.t_end))
        if self.snapshot_stride < 1:
            raise SolverError('snapshot_stride must be >= 1, got {}'.format(self.snapshot_stride))
        if not 0.0 < self.cfl <= 1.0:
            raise SolverError('cfl must lie in (0, 1], got {}'.format(self.cfl))
        if DriftMode(self.drift.mode) == DriftMode.SQG and self.grid.ndim != 2:
            raise SolverError('SQG closure needs N=2, grid is {}D'.format(self.grid.ndim))


# Initial conditions. All are projected to mean zero by make_initial_condition.

def _random_band(grid, seed, k_min=2.0, k_max=6.0, amplitude=1.0):
    if seed is None:
        raise SolverError('random_band needs an explicit seed')
    return spectral.random_band_field(grid, k_min, k_max, amplitude, seed).values


def _single_mode(grid, seed, k=(1,), amplitude=1.0):
    k = tuple(k) + (0,) * (grid.ndim - len(k))
    if len(k) != grid.ndim:
        raise SolverError('Mode {} does not fit a {}D grid'.format(k, grid.ndim))
    phase = sum(2.0 * math.pi * kj / length * x
                for kj, length, x in zip(k, grid.lengths, grid.coordinates()))
    return amplitude * np.sin(phase)


def _periodic_distance2(grid, center):
    total = np.zeros(grid.shape)
    for x, c, length in zip(grid.coordinates(), center, grid.lengths):
        d = np.mod(x - c + 0.5 * length, length) - 0.5 * length
        total = total + d * d
    return total


def _two_vortex(grid, seed, separation=1.0, width=0.3, amplitude=1.0):
    middle = [0.5 * length for length in grid.lengths]
    left = list(middle)
    right = list(middle)
    left[0] -= 0.5 * separation
    right[0] += 0.5 * separation
    values = (np.exp(-_periodic_distance2(grid, left) / (2 * width ** 2))
              - np.exp(-_periodic_distance2(grid, right) / (2 * width ** 2)))
    return amplitude * values


def _zero(grid, seed):
    return np.zeros(grid.shape)


INITIAL_CONDITIONS = {
    'random_band': _random_band,
    'single_mode': _single_mode,
    'two_vortex': _two_vortex,
    'zero': _zero
}


def make_initial_condition(grid, ic):
    try:
        generator = INITIAL_CONDITIONS[ic.name]
    except KeyError:
        raise SolverError("Unknown initial condition '{}'".format(ic.name))
    try:
        values = generator(grid, ic.seed, **dict(ic.params))
    except TypeError as e:
        raise SolverError("Bad parameters for initial condition '{}': {}".format(ic.name, e)) from e
    values = values - values.mean()
    return spectral.PhysicalField(grid, values, 0.0)


# Prescribed drifts, built from a stream function in the first two axes

def _stream_velocity(grid, psi):
    s = spectral.forward(spectral.PhysicalField(grid, psi))
    d1 = spectral.inverse(spectral.derivative(s, 1)).values
    d2 = spectral.inverse(spectral.derivative(s, 2)).values
    velocity = [-d2, d1] + [np.zeros(grid.shape)] * (grid.ndim - 2)
    return tuple(velocity)


def _cellular(grid, amplitude=1.0, k=1):
    if grid.ndim < 2:
        raise SolverError('cellular drift needs N >= 2')
    x1, x2 = grid.coordinates()[:2]
    k1 = 2.0 * math.pi * k / grid.lengths[0]
    k2 = 2.0 * math.pi * k / grid.lengths[1]
    psi = amplitude / math.hypot(k1, k2) * np.sin(k1 * x1) * np.sin(k2 * x2)
    return _stream_velocity(grid, psi)


def _shear(grid, amplitude=1.0, k=1):
    if grid.ndim < 2:
        raise SolverError('shear drift needs N >= 2')
    x2 = grid.coordinates()[1]
    velocity = [amplitude * np.sin(2.0 * math.pi * k / grid.lengths[1] * x2)]
    velocity += [np.zeros(grid.shape)] * (grid.ndim - 1)
    return tuple(velocity)


def _uniform(grid, velocity=None):
    velocity = tuple(velocity or (1.0,)) + (0.0,) * grid.ndim
    return tuple(np.full(grid.shape, float(c)) for c in velocity[:grid.ndim])


def _from_files(grid, paths=()):
    fields = [messaging.read_snapshot(path) for path in paths]
    if len(fields) != grid.ndim:
        raise SolverError('Drift needs {} component files, got {}'.format(grid.ndim, len(fields)))
    for field in fields:
        if field.grid != grid:
            raise GridError('Drift grid {} does not match {}'.format(field.grid, grid))
    return tuple(field.values for field in fields)


DRIFTS = {
    'cellular': _cellular,
    'shear': _shear,
    'uniform': _uniform,
    'file': _from_files
}


def divergence_residual(velocity, grid):
    total = np.zeros(grid.shape, dtype=np.complex128)
    for axis, component in enumerate(velocity):
        total += spectral.derivative_multiplier(grid, axis) * scipy.fft.fftn(component, norm='forward')
    return float(np.max(np.abs(scipy.fft.ifftn(total, norm='forward').real)))


def check_divergence_free(velocity, grid, tol=DIV_TOL):
    scale = max(1.0, max(float(np.max(np.abs(c))) for c in velocity))
    residual = divergence_residual(velocity, grid)
    if residual > tol * scale:
        raise DriftError(residual, tol * scale)
    return residual


def prescribed_drift(grid, spec):
    try:
        builder = DRIFTS[spec.name]
    except KeyError:
        raise SolverError("Unknown drift '{}'".format(spec.name))
    velocity = builder(grid, **dict(spec.params))
    check_divergence_free(velocity, grid)
    return velocity


# Operators on physical fields

def velocity_from_theta(theta):
    """u = (-R_2 theta, R_1 theta). The mean of theta does not enter"""
    if theta.grid.ndim != 2:
        raise SolverError('SQG velocity needs N=2, grid is {}D'.format(theta.grid.ndim))
    s = spectral.forward(theta)
    u1 = spectral.inverse(spectral.riesz_transform(s, 2).scale(-1.0), theta.time_tag)
    u2 = spectral.inverse(spectral.riesz_transform(s, 1), theta.time_tag)
    return u1, u2


def rhs(theta, v, beta, kappa, dealias=True):
    """-v . grad theta - kappa Lambda^beta theta, with the product dealiased"""
    grid = theta.grid
    velocity = tuple(np.asarray(c.values if hasattr(c, 'values') else c) for c in v)
    if len(velocity) != grid.ndim:
        raise GridError('Drift has {} components on a {}D grid'.format(len(velocity), grid.ndim))
    check_divergence_free(velocity, grid)
    integrator = Integrator(grid, beta, kappa, DriftSpec(DriftMode.PRESCRIBED), dealias=dealias,
                            velocity=velocity)
    coeffs = spectral.forward(theta).coeffs
    nonlinear, _, _ = integrator.evaluate(coeffs)
    total = nonlinear - integrator.symbol * coeffs
    return spectral.inverse(spectral.SpectralField(grid, total), theta.time_tag)


class Integrator:
    """
    Owns the multiplier tables for one grid/beta/kappa/drift combination.
    ``step`` is the only way states advance.
    """

    def __init__(self, grid, beta, kappa, drift, *, dealias=True, cfl=CFL, velocity=None):
        self.grid = grid
        self.beta = beta
        self.kappa = kappa
        self.cfl = cfl
        self.dx = min(grid.spacing)
        self.mode = DriftMode(drift.mode)
        if self.mode == DriftMode.SQG and grid.ndim != 2:
            raise SolverError('SQG closure needs N=2, grid is {}D'.format(grid.ndim))
        if self.mode == DriftMode.PRESCRIBED and velocity is None:
            velocity = prescribed_drift(grid, drift)
        self._velocity = velocity
        self._mask = spectral.dealias_mask(grid) if dealias else None
        self._ik = [spectral.derivative_multiplier(grid, axis) for axis in range(grid.ndim)]
        self._lambda_beta = spectral.wavenumber_norm(grid) ** beta
        self.symbol = kappa * self._lambda_beta
        self._factors = {}
        self._zero = np.zeros(grid.shape, dtype=np.complex128)
        if self._velocity is not None:
            self._prescribed_umax = float(np.max(np.sqrt(sum(c * c for c in self._velocity))))

    @classmethod
    def from_config(cls, config):
        return cls(config.grid, config.beta, config.kappa, config.drift,
                   dealias=config.dealias, cfl=config.cfl)

    def project(self, coeffs):
        if self._mask is None:
            return coeffs
        return np.where(self._mask, coeffs, 0.0)

    def factor(self, h):
        """exp(-kappa |k'|^beta h), cached per step size"""
        try:
            return self._factors[h]
        except KeyError:
            if len(self._factors) > 8:
                self._factors.clear()
            factor = np.exp(-self.symbol * h)
            self._factors[h] = factor
            return factor

    def velocity(self, coeffs):
        if self.mode == DriftMode.ZERO:
            return None
        if self.mode == DriftMode.PRESCRIBED:
            return self._velocity
        u1 = scipy.fft.ifftn(-spectral.riesz_multiplier(self.grid, 1) * coeffs, norm='forward').real
        u2 = scipy.fft.ifftn(spectral.riesz_multiplier(self.grid, 0) * coeffs, norm='forward').real
        return u1, u2

    def evaluate(self, coeffs):
        """Returns (-P FFT(v . grad theta), max|v|, v)"""
        velocity = self.velocity(coeffs)
        if velocity is None:
            return self._zero, 0.0, None
        advection = np.zeros(self.grid.shape)
        for v, ik in zip(velocity, self._ik):
            advection += v * scipy.fft.ifftn(ik * coeffs, norm='forward').real
        nonlinear = -self.project(scipy.fft.fftn(advection, norm='forward'))
        # mean of v . grad theta vanishes for divergence-free v
        nonlinear.flat[0] = 0.0
        if self.mode == DriftMode.PRESCRIBED:
            umax = self._prescribed_umax
        else:
            umax = float(np.max(np.sqrt(sum(v * v for v in velocity))))
        return nonlinear, umax, velocity

    def _nonlinear(self, coeffs):
        return self.evaluate(coeffs)[0]

    def initial_state(self, theta, time=0.0):
        coeffs = self.project(scipy.fft.fftn(theta.values, norm='forward'))
        nonlinear, umax, velocity = self.evaluate(coeffs)
        return SolverState(time, 0, coeffs, nonlinear, umax, velocity)

    def cfl_limit(self, umax):
        if umax <= 0:
            return math.inf
        return self.cfl * self.dx / umax

    def auto_dt(self, state, remaining):
        dt = min(self.cfl_limit(state.umax), remaining)
        if self.kappa > 0:
            dt = min(dt, self.dx ** self.beta / self.kappa)
        return dt

    def step(self, state, dt):
        if not dt > 0:
            raise SolverError('Time step must be positive, got {}'.format(dt))
        limit = self.cfl_limit(state.umax)
        if dt > limit * (1.0 + 1e-12):
            raise CFLError(state.umax, dt, limit)
        theta = state.coeffs
        k1 = state.nonlinear
        e_half = self.factor(0.5 * dt)
        e_full = self.factor(dt)
        k2 = self._nonlinear(e_half * (theta + 0.5 * dt * k1))
        k3 = self._nonlinear(e_half * theta + 0.5 * dt * k2)
        k4 = self._nonlinear(e_full * theta + dt * e_half * k3)
        coeffs = e_full * theta + dt / 6.0 * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
        if not np.all(np.isfinite(coeffs)):
            raise BlowUpError('Non-finite state at t={:.6g} (step {})'.format(
                state.time + dt, state.step + 1))
        nonlinear, umax, velocity = self.evaluate(coeffs)
        return SolverState(state.time + dt, state.step + 1, coeffs, nonlinear, umax, velocity)

    # energy bookkeeping

    def energy(self, coeffs):
        return float(np.sum(np.abs(coeffs) ** 2) * self.grid.volume)

    def dissipation(self, coeffs):
        """||Lambda^(beta/2) theta||^2"""
        return float(np.sum(self._lambda_beta * np.abs(coeffs) ** 2) * self.grid.volume)

    def dissipation_rate(self, state):
        """d/dt of dissipation along the semi-discrete flow"""
        dtheta = state.nonlinear - self.symbol * state.coeffs
        return float(2.0 * np.sum(self._lambda_beta * np.real(np.conj(state.coeffs) * dtheta))
                     * self.grid.volume)


class Trajectory:
    """
    Snapshots (theta and, for nonzero drift, u) every ``snapshot_stride`` steps
    plus the final state, and one row of scalars per step.
    """

    def __init__(self, grid, beta, kappa, *, dealias=True, drift_mode=DriftMode.SQG, config=None):
        self.grid = grid
        self.beta = beta
        self.kappa = kappa
        self.dealias = dealias
        self.drift_mode = DriftMode(drift_mode)
        self.config = config
        self.times = []
        self.steps = []
        self.thetas = []
        self.velocities = []
        self.scalars = {name: [] for name in SCALAR_NAMES}
        self.state = RunState.RUNNING
        self.message = ''
        self._energy0 = None
        self._last = None
        self._dissipated = 0.0

    @classmethod
    def from_config(cls, config):
        return cls(config.grid, config.beta, config.kappa, dealias=config.dealias,
                   drift_mode=config.drift.mode, config=config)

    def __len__(self):
        return len(self.thetas)

    @property
    def theta0(self):
        return self.thetas[0]

    @property
    def t_end(self):
        return self.times[-1]

    @property
    def failed(self):
        return self.state == RunState.FAILED

    def record(self, state, integrator, snapshot):
        theta = spectral.PhysicalField(
            self.grid, scipy.fft.ifftn(state.coeffs, norm='forward').real, state.time)
        energy = integrator.energy(state.coeffs)
        dissipation = integrator.dissipation(state.coeffs)
        rate = integrator.dissipation_rate(state)
        if self._energy0 is None:
            self._energy0 = energy
        else:
            t0, d0, r0 = self._last
            self._dissipated += quadrature.hermite_trapezoid(
                [t0, state.time], [d0, dissipation], [r0, rate])
        self._last = (state.time, dissipation, rate)
        residual = energy - self._energy0 + 2.0 * self.kappa * self._dissipated
        hhalf = float(np.sum(spectral.wavenumber_norm(self.grid) * np.abs(state.coeffs) ** 2)
                      * self.grid.volume)
        row = (state.time, math.sqrt(energy), float(np.max(np.abs(theta.values))), hhalf,
               state.umax, residual)
        for name, value in zip(SCALAR_NAMES, row):
            self.scalars[name].append(value)
        if snapshot:
            self.add_snapshot(state.step, theta, state.velocity)

    def add_snapshot(self, step, theta, velocity=None):
        if self.times and theta.time_tag <= self.times[-1]:
            raise SolverError('Snapshot times must increase: {} after {}'.format(
                theta.time_tag, self.times[-1]))
        self.times.append(theta.time_tag)
        self.steps.append(step)
        self.thetas.append(theta)
        if velocity is None:
            self.velocities.append(None)
        else:
            self.velocities.append(tuple(
                spectral.PhysicalField(self.grid, v, theta.time_tag) for v in velocity))

    def fail(self, message):
        self.state = RunState.FAILED
        self.message = message

    def scalar_array(self, name):
        return np.asarray(self.scalars[name])

    def snapshot_index(self, t, rtol=1e-9):
        """Index of the snapshot at time t"""
        times = np.asarray(self.times)
        if t < 0 or t > times[-1] * (1 + rtol) + rtol:
            raise SolverError('t={} outside trajectory [0, {}]'.format(t, times[-1]))
        index = int(np.argmin(np.abs(times - t)))
        if abs(times[index] - t) > rtol * max(1.0, abs(t)):
            raise SolverError('No snapshot at t={} (nearest {})'.format(t, times[index]))
        return index

    def window(self, t1, t2):
        """Snapshot indices with t1 <= time <= t2"""
        times = np.asarray(self.times)
        eps = 1e-12 * max(1.0, abs(t2))
        return np.nonzero((times >= t1 - eps) & (times <= t2 + eps))[0]

    def rows(self):
        return zip(*(self.scalars[name] for name in SCALAR_NAMES))

    # persistence

    def metadata(self):
        return {
            'dims': list(self.grid.dims),
            'lengths': list(self.grid.lengths),
            'beta': self.beta,
            'kappa': self.kappa,
            'dealias': self.dealias,
            'drift_mode': self.drift_mode.name.lower(),
            'state': self.state.name.lower(),
            'message': self.message,
            'steps': list(self.steps),
        }

    def save(self, directory):
        """Snapshots as SQGF files, scalars as CSV. Returns the written file names"""
        os.makedirs(directory, exist_ok=True)
        written = []
        for step, theta, velocity in zip(self.steps, self.thetas, self.velocities):
            name = 'theta_{}.sqgf'.format(step)
            messaging.write_snapshot(os.path.join(directory, name), theta)
            written.append(name)
            if velocity is not None:
                for j, component in enumerate(velocity, start=1):
                    name = 'u{}_{}.sqgf'.format(j, step)
                    messaging.write_snapshot(os.path.join(directory, name), component)
                    written.append(name)
        with open(os.path.join(directory, DIAGNOSTICS_CSV), 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(SCALAR_NAMES)
            for row in self.rows():
                writer.writerow([repr(float(value)) for value in row])
        written.append(DIAGNOSTICS_CSV)
        with open(os.path.join(directory, TRAJECTORY_META), 'w') as f:
            json.dump(self.metadata(), f, indent=2, sort_keys=True)
        written.append(TRAJECTORY_META)
        return written

    @classmethod
    def load(cls, directory):
        path = os.path.join(directory, TRAJECTORY_META)
        if not os.path.isfile(path):
            raise SolverError('No trajectory found in {}'.format(directory))
        with open(path) as f:
            meta = json.load(f)
        grid = spectral.Grid(meta['dims'], meta['lengths'])
        traj = cls(grid, meta['beta'], meta['kappa'], dealias=meta['dealias'],
                   drift_mode=DriftMode[meta['drift_mode'].upper()])
        traj.state = RunState[meta['state'].upper()]
        traj.message = meta.get('message', '')
        for step in meta['steps']:
            theta = messaging.read_snapshot(os.path.join(directory, 'theta_{}.sqgf'.format(step)))
            if theta.grid != grid:
                raise GridError('Snapshot grid {} does not match {}'.format(theta.grid, grid))
            velocity = None
            first = os.path.join(directory, 'u1_{}.sqgf'.format(step))
            if os.path.isfile(first):
                velocity = tuple(
                    messaging.read_snapshot(os.path.join(directory, 'u{}_{}.sqgf'.format(j, step))).values
                    for j in range(1, grid.ndim + 1))
            traj.add_snapshot(step, theta, velocity)
        csv_path = os.path.join(directory, DIAGNOSTICS_CSV)
        if os.path.isfile(csv_path):
            with open(csv_path, newline='') as f:
                reader = csv.reader(f)
                header = next(reader)
                if tuple(header) != SCALAR_NAMES:
                    raise SolverError('Unexpected diagnostics header {}'.format(header))
                for row in reader:
                    for name, value in zip(SCALAR_NAMES, row):
                        traj.scalars[name].append(float(value))
        return traj


def _snap_to_end(t, t_end, dt):
    if t_end - t <= 1e-9 * dt:
        return t_end
    return t


def run(config, integrator=None):
    """Integrate to config.t_end. Blow-ups and CFL failures return a FAILED partial trajectory"""
    if integrator is None:
        integrator = Integrator.from_config(config)
    theta0 = make_initial_condition(config.grid, config.initial_condition)
    state = integrator.initial_state(theta0)
    traj = Trajectory.from_config(config)
    traj.record(state, integrator, snapshot=True)
    log_info('Run start: grid {} beta={} kappa={} drift={} t_end={}'.format(
        config.grid.dims, config.beta, config.kappa,
        DriftMode(config.drift.mode).name.lower(), config.t_end))
    try:
        while state.time < config.t_end:
            remaining = config.t_end - state.time
            if config.dt == AUTO:
                dt = integrator.auto_dt(state, remaining)
            else:
                dt = min(float(config.dt), remaining)
            log_debug('step {} t={:.6g} dt={:.6g} umax={:.6g}'.format(
                state.step, state.time, dt, state.umax))
            state = integrator.step(state, dt)
            time = _snap_to_end(state.time, config.t_end, dt)
            if time != state.time:
                state = state._replace(time=time)
            last = state.time >= config.t_end
            traj.record(state, integrator, snapshot=last or state.step % config.snapshot_stride == 0)
    except (CFLError, BlowUpError) as e:
        log_error('Run aborted at t={:.6g}: {}'.format(state.time, e))
        traj.fail(str(e))
        if traj.steps[-1] != state.step:
            traj.add_snapshot(state.step, spectral.PhysicalField(
                config.grid, scipy.fft.ifftn(state.coeffs, norm='forward').real, state.time),
                state.velocity)
    else:
        traj.state = RunState.COMPLETED
        log_info('Run complete: {} steps, {} snapshots'.format(state.step, len(traj)))
    return traj


def duhamel_residual(traj, t, stride=1):
    """
    max |theta(t) - [S(t) theta_0 - integral_0^t S(t-s) div(u theta)(s) ds]|
    with S the semigroup of -kappa Lambda^beta. The flux is taken linear between
    the snapshots used (every ``stride``-th) and integrated exactly against S.
    """
    if stride < 1:
        raise SolverError('stride must be >= 1, got {}'.format(stride))
    index = traj.snapshot_index(t)
    if index == 0:
        return 0.0
    grid = traj.grid
    used = list(range(0, index + 1, stride))
    if used[-1] != index:
        used.append(index)
    symbol = traj.kappa * spectral.wavenumber_norm(grid) ** traj.beta
    mask = spectral.dealias_mask(grid) if traj.dealias else None
    ik = [spectral.derivative_multiplier(grid, axis) for axis in range(grid.ndim)]
    t_final = traj.times[index]

    def flux(i):
        velocity = traj.velocities[i]
        if velocity is None:
            return None
        theta = traj.thetas[i].values
        total = np.zeros(grid.shape, dtype=np.complex128)
        for mult, v in zip(ik, velocity):
            total += mult * scipy.fft.fftn(v.values * theta, norm='forward')
        if mask is not None:
            total = np.where(mask, total, 0.0)
        return total

    theta0 = scipy.fft.fftn(traj.thetas[0].values, norm='forward')
    representation = np.exp(-symbol * t_final) * theta0
    previous = flux(used[0])
    for a, b in zip(used[:-1], used[1:]):
        current = flux(b)
        if previous is not None or current is not None:
            ta, tb = traj.times[a], traj.times[b]
            w_a, w_b = quadrature.exponential_weights(symbol, tb - ta)
            integral = 0.0
            if previous is not None:
                integral = integral + w_a * previous
            if current is not None:
                integral = integral + w_b * current
            representation = representation - np.exp(-symbol * (t_final - tb)) * integral
        previous = current
    values = scipy.fft.ifftn(representation, norm='forward').real
    return float(np.max(np.abs(traj.thetas[index].values - values)))
