"""
Level-set diagnostics over trajectories: truncations, truncation energies and
their recursion, the L2 -> Linf decay, the pointwise convexity inequality for
Lambda, the local energy inequality on the extension and BMO of the drift.

Truncations (theta - level)_+ are not band limited. Every spectral quantity of
a truncation is measured after spectral upsampling of theta (``refine``, default 2).
"""
import collections
import logging
import math

from enum import IntEnum

import numba
import numpy as np
import scipy.fft
import scipy.integrate

from sqglab import extension, spectral
from sqglab.exception import CheckError, ConvexityError, SupportError


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


REFINE = 2
LEVEL_SET_RTOL = 1e-5
CORDOBA_RTOL = 1e-8
RESOLUTION_TOL = 1e-3
MIN_WINDOW = 3
PHI_FLOOR = 1e-3


class CheckStatus(IntEnum):
    PASS = 0
    FAIL = 1
    INCONCLUSIVE = 2


CheckResult = collections.namedtuple(
    'CheckResult', ['name', 'status', 'residual', 'tolerance', 'anchor', 'provenance', 'details'])
CheckResult.__new__.__defaults__ = ('', '', {})

LevelSetLedger = collections.namedtuple(
    'LevelSetLedger', ['M', 't0', 'levels', 'times', 'energies', 'tails', 't_end'])

ConvexFunction = collections.namedtuple('ConvexFunction', ['name', 'value', 'derivative'])

CordobaResidual = collections.namedtuple('CordobaResidual', ['field', 'tolerance', 'result'])

BMO = collections.namedtuple('BMO', ['seminorm', 'mean_term'])


class DiagnosticsReport:
    """Named check results, flattened to key/value pairs for the JSON report"""

    def __init__(self, provenance=None):
        self.results = collections.OrderedDict()
        self.provenance = provenance or {}

    def add(self, result):
        self.results[result.name] = result
        return result

    def __iter__(self):
        return iter(self.results.values())

    def __len__(self):
        return len(self.results)

    @property
    def failed(self):
        return [r.name for r in self if r.status == CheckStatus.FAIL]

    @property
    def passed(self):
        return not self.failed

    def to_flat_dict(self):
        flat = collections.OrderedDict()
        for key, value in sorted(self.provenance.items()):
            flat['provenance.{}'.format(key)] = _plain(value)
        for r in self:
            flat['{}.status'.format(r.name)] = r.status.name.lower()
            flat['{}.residual'.format(r.name)] = _plain(r.residual)
            flat['{}.tolerance'.format(r.name)] = _plain(r.tolerance)
            flat['{}.anchor'.format(r.name)] = r.anchor
            if r.provenance:
                flat['{}.provenance'.format(r.name)] = r.provenance
            for key, value in r.details.items():
                flat['{}.{}'.format(r.name, key)] = _plain(value)
        flat['summary.checks'] = len(self)
        flat['summary.failed'] = len(self.failed)
        flat['summary.passed'] = self.passed
        return flat


def _plain(value):
    """JSON friendly scalars; non-finite floats become strings"""
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    return value


def status_of(ok):
    return CheckStatus.PASS if ok else CheckStatus.FAIL


def _time_integral(times, values):
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.size < 2:
        return 0.0
    if times.size == 2:
        return float(scipy.integrate.trapezoid(values, times))
    return float(scipy.integrate.simpson(values, x=times))


def _refined(theta, refine):
    if refine <= 1:
        return theta
    return spectral.upsample(theta, refine)


# Truncation

def truncate(theta, level):
    """(theta - level)_+; level = -inf leaves theta untouched"""
    if np.isneginf(level):
        return theta.with_values(theta.values.copy())
    return theta.with_values(np.maximum(theta.values - level, 0.0))


def truncation_energies(theta, level, beta=1.0, refine=REFINE):
    """(||gamma||^2, ||Lambda^(beta/2) gamma||^2) of gamma = (theta - level)_+ on the refined grid"""
    gamma = truncate(_refined(theta, refine), level)
    energy = spectral.l2_norm_squared(gamma)
    if energy == 0.0:
        return 0.0, 0.0
    dissipation = spectral.sobolev_seminorm(spectral.forward(gamma), 0.5 * beta)
    return energy, dissipation


def _window(traj, t1, t2):
    if not t1 < t2:
        raise CheckError('Need t1 < t2, got {} and {}'.format(t1, t2))
    if t1 < traj.times[0] - 1e-12 or t2 > traj.times[-1] * (1 + 1e-12) + 1e-12:
        raise CheckError('Window [{}, {}] outside trajectory [{}, {}]'.format(
            t1, t2, traj.times[0], traj.times[-1]))
    return traj.window(t1, t2)


def _level_set_terms(traj, level, index, refine):
    energies = []
    dissipations = []
    for i in index:
        energy, dissipation = truncation_energies(traj.thetas[i], level, traj.beta, refine)
        energies.append(energy)
        dissipations.append(dissipation)
    times = np.asarray(traj.times)[index]
    return times, np.asarray(energies), np.asarray(dissipations)


def level_set_energy_check(traj, level, t1, t2, rtol=LEVEL_SET_RTOL, refine=REFINE):
    """
    ||gamma(t2)||^2 + 2 kappa int ||Lambda^(beta/2) gamma||^2 - ||gamma(t1)||^2 for
    gamma = (theta - level)_+, time integral by Simpson over the snapshots.
    """
    index = _window(traj, t1, t2)
    name = 'level_set[{}]'.format(level_name(level))
    scale = spectral.l2_norm_squared(traj.theta0)
    tolerance = rtol * max(scale, 1e-300)
    anchor = 'level-set energy inequality'
    if index.size < MIN_WINDOW:
        return CheckResult(name, CheckStatus.INCONCLUSIVE, math.nan, tolerance, anchor,
                           details={'reason': 'only {} snapshots in window'.format(index.size)})
    times, energy, dissipation = _level_set_terms(traj, level, index, refine)
    integral = _time_integral(times, dissipation)
    lhs = energy[-1] + 2.0 * traj.kappa * integral
    rhs = energy[0]
    residual = lhs - rhs
    return CheckResult(name, status_of(residual <= tolerance), residual, tolerance, anchor,
                       details={'level': level, 't1': float(times[0]), 't2': float(times[-1]),
                                'lhs': lhs, 'rhs': rhs})


def level_name(level):
    if np.isneginf(level):
        return '-inf'
    return '{:.6g}'.format(level)


def level_grid(traj, count=16):
    """``count`` levels spanning [min theta, max theta] over the run"""
    lo = min(float(theta.values.min()) for theta in traj.thetas)
    hi = max(float(theta.values.max()) for theta in traj.thetas)
    return np.linspace(lo, hi, count)


# Truncation energy sequence

def uk_sequence(traj, M, t0, K, refine=REFINE):
    """
    U_k = sup_{t >= T_k} ||theta_k(t)||^2 + 2 kappa int_{T_k}^{t_end} ||Lambda^(beta/2) theta_k||^2
    with theta_k = (theta - C_k)_+, C_k = M (1 - 2^-k), T_k = t0 (1 - 2^-k).

    The dissipation past t_end is at most ||theta_k(t_end)||^2 by the level-set
    inequality; ``tails`` holds that bound, so U_k lies in [energies, energies + tails].
    """
    t_end = traj.times[-1]
    if not 0 < t0 < t_end:
        raise CheckError('Need 0 < t0 < t_end, got t0={} t_end={}'.format(t0, t_end))
    if M <= 0:
        raise CheckError('M must be positive, got {}'.format(M))
    if K < 1:
        raise CheckError('K must be >= 1, got {}'.format(K))
    times = np.asarray(traj.times)
    ks = np.arange(K + 1)
    levels = M * (1.0 - 2.0 ** -ks)
    starts = t0 * (1.0 - 2.0 ** -ks)
    energies = []
    tails = []
    for level, start in zip(levels, starts):
        _, energy, dissipation = _level_set_terms(traj, level, np.arange(times.size), refine)
        after = times > start
        # values at T_k interpolated
        window_t = np.concatenate([[start], times[after]])
        window_e = np.concatenate([[np.interp(start, times, energy)], energy[after]])
        window_d = np.concatenate([[np.interp(start, times, dissipation)], dissipation[after]])
        dissipated = 2.0 * traj.kappa * _time_integral(window_t, window_d)
        energies.append(max(0.0, float(np.max(window_e)) + dissipated))
        tails.append(max(0.0, float(energy[-1])))
    return LevelSetLedger(M, t0, levels, starts, np.asarray(energies), np.asarray(tails), t_end)


def uk_interval(ledger):
    """[lower, upper] bounds on each U_k, the upper one adding the dissipation tail past t_end"""
    return np.stack([ledger.energies, ledger.energies + ledger.tails], axis=1)


def uk_recursion_check(ledger, N, ratio_tol=1.0):
    """
    Smallest C_hat with U_k <= C_hat 2^((N+2)k/N) U_{k-1}^((N+1)/N) for all k,
    reported also as C_hat t0 M^(2/N). U_{k-1} = 0 with U_k > 0 is a hard failure.
    """
    U = np.asarray(ledger.energies)
    if U.size < 4:
        raise CheckError('Recursion check needs K >= 3, got K={}'.format(U.size - 1))
    alpha = 1.0 / N
    growth = 2.0 ** ((N + 2.0) / N)
    c_hat = 0.0
    broken = []
    for k in range(1, U.size):
        if U[k - 1] <= 0:
            if U[k] > 0:
                broken.append(k)
            continue
        c_hat = max(c_hat, U[k] / (growth ** k * U[k - 1] ** (1.0 + alpha)))
    ratios = [U[k] / U[k - 1] for k in range(1, U.size) if U[k - 1] > 0]
    geometric_ratio = max(ratios) if ratios else 0.0
    if c_hat > 0:
        threshold = c_hat ** (-1.0 / alpha) * growth ** (-1.0 / alpha ** 2)
    else:
        threshold = math.inf
    details = {
        'c_hat': c_hat,
        'normalized_constant': c_hat * ledger.t0 * ledger.M ** (2.0 / N),
        'geometric_ratio': geometric_ratio,
        'geometric_decay': bool(geometric_ratio < ratio_tol),
        'threshold': threshold,
        'below_threshold': bool(U[0] <= threshold),
        'energies': list(U),
    }
    if broken:
        details['broken_levels'] = broken
    status = status_of(not broken and math.isfinite(c_hat))
    return CheckResult('uk_recursion', status, c_hat, math.inf, 'truncation energy recursion',
                       details=details)


def chebyshev_check(traj, M, k, N, refine=REFINE):
    """|{theta_k > 0}| <= int (2^k theta_{k-1} / M)^(2/N) at every snapshot"""
    if k < 1:
        raise CheckError('Chebyshev step needs k >= 1, got {}'.format(k))
    c_prev = M * (1.0 - 2.0 ** -(k - 1))
    c_k = M * (1.0 - 2.0 ** -k)
    worst = -math.inf
    for theta in traj.thetas:
        fine = _refined(theta, refine)
        cell = fine.grid.cell_volume
        measure = np.count_nonzero(fine.values > c_k) * cell
        bound = float(np.sum((2.0 ** k * np.maximum(fine.values - c_prev, 0.0) / M) ** (2.0 / N)) * cell)
        worst = max(worst, measure - bound)
    return CheckResult('chebyshev[{}]'.format(k), status_of(worst <= 0.0), worst, 0.0,
                       'level-set Chebyshev step', details={'M': M, 'k': k})


# Decay

def resolution_fraction(theta):
    """Energy fraction in the top quarter of the retained band"""
    s = spectral.forward(theta)
    power = np.abs(s.coeffs) ** 2
    total = float(power.sum())
    if total == 0:
        return 0.0
    outer = np.zeros(theta.grid.shape, dtype=bool)
    for k, n in zip(spectral.integer_wavenumbers(theta.grid), theta.grid.dims):
        outer = outer | (np.abs(k) > 0.75 * n / 3.0)
    return float(power[outer].sum()) / total


def linf_decay_constant(traj, t_min=0.1, t_max=None):
    """sup over T in [t_min, t_max] of T^(N/2) ||theta(T)||_inf / ||theta_0||_L2"""
    norm0 = math.sqrt(spectral.l2_norm_squared(traj.theta0))
    if norm0 == 0:
        return 0.0
    n = traj.grid.ndim
    t_max = traj.times[-1] if t_max is None else t_max
    best = 0.0
    for t, theta in zip(traj.times, traj.thetas):
        if t_min <= t <= t_max:
            best = max(best, t ** (n / 2.0) * float(np.max(np.abs(theta.values))) / norm0)
    return best


def linf_decay_check(traj, t_min=0.1, t_max=None, reference=None, factor=2.0):
    """Decay constant, compared against a refined-grid ``reference`` run when given"""
    constant = linf_decay_constant(traj, t_min, t_max)
    details = {'t_min': t_min, 't_max': traj.times[-1] if t_max is None else t_max}
    worst = max(resolution_fraction(theta) for theta in traj.thetas)
    details['resolution_fraction'] = worst
    anchor = 'L2 to Linf decay'
    if worst > RESOLUTION_TOL:
        return CheckResult('linf_decay', CheckStatus.INCONCLUSIVE, constant, math.inf, anchor,
                           details=dict(details, reason='under-resolved run'))
    if reference is not None:
        other = linf_decay_constant(reference, t_min, t_max)
        details['reference_constant'] = other
        stable = constant == other == 0 or (
            other > 0 and constant > 0 and max(constant / other, other / constant) < factor)
        details['stable'] = stable
        return CheckResult('linf_decay', status_of(math.isfinite(constant) and stable), constant,
                           math.inf, anchor, details=details)
    return CheckResult('linf_decay', status_of(math.isfinite(constant)), constant, math.inf, anchor,
                       details=details)


def decay_level(traj, t0, t_min=None):
    """M = 2 C ||theta_0|| / t0^(N/2) from the measured decay constant C"""
    constant = linf_decay_constant(traj, t0 if t_min is None else t_min)
    norm0 = math.sqrt(spectral.l2_norm_squared(traj.theta0))
    return 2.0 * constant * norm0 / t0 ** (traj.grid.ndim / 2.0)


# Pointwise inequality for Lambda

def linear(slope=1.0, offset=0.0):
    return ConvexFunction('linear', lambda s: slope * s + offset, lambda s: slope * np.ones_like(s))


def square():
    return ConvexFunction('square', lambda s: s * s, lambda s: 2.0 * s)


def smoothed_positive_part(level=0.0, width=0.1):
    """width * log(1 + exp((s - level)/width)), a C-infinity convex mollification of (s - level)_+"""
    def value(s):
        return width * np.logaddexp(0.0, (s - level) / width)

    def derivative(s):
        return 0.5 * (1.0 + np.tanh(0.5 * (s - level) / width))

    return ConvexFunction('smoothed_positive_part', value, derivative)


def check_convex(phi, lo, hi, samples=257):
    if hi <= lo:
        hi = lo + 1.0
    s = np.linspace(lo, hi, samples)
    values = phi.value(s)
    second = values[2:] - 2.0 * values[1:-1] + values[:-2]
    tol = 1e-10 * max(1.0, float(np.max(np.abs(values))))
    if np.min(second) < -tol:
        raise ConvexityError("'{}' is not convex on [{}, {}]".format(phi.name, lo, hi))
    deriv = phi.derivative(s)
    if np.any(np.diff(deriv) < -tol):
        raise ConvexityError("'{}' has a decreasing derivative".format(phi.name))


def cordoba_pointwise_check(theta, phi, refine=REFINE, rtol=CORDOBA_RTOL):
    """
    r = phi'(theta) Lambda theta - Lambda(phi(theta)) on the refined grid; the
    inequality is r >= 0. The tolerance adds sum |k| |c_k| over the outer half of
    the refined spectrum of phi(theta) for aliasing.
    """
    check_convex(phi, float(theta.values.min()), float(theta.values.max()))
    fine = _refined(theta, refine)
    lam_theta = spectral.inverse(spectral.fractional_laplacian(spectral.forward(fine), 1.0)).values
    composed = fine.with_values(phi.value(fine.values))
    spec = spectral.forward(composed)
    lam_phi = spectral.inverse(spectral.fractional_laplacian(spec, 1.0)).values
    slope = phi.derivative(fine.values)
    residual = slope * lam_theta - lam_phi
    outer = np.zeros(fine.grid.shape, dtype=bool)
    for k, n in zip(spectral.integer_wavenumbers(fine.grid), fine.grid.dims):
        outer = outer | (np.abs(k) > n // 4)
    allowance = float(np.sum((spectral.wavenumber_norm(fine.grid) * np.abs(spec.coeffs))[outer]))
    scale = max(1.0, float(np.max(np.abs(slope))) * float(np.max(np.abs(lam_theta))))
    tolerance = rtol * scale + allowance
    minimum = float(residual.min())
    result = CheckResult('cordoba[{}]'.format(phi.name), status_of(minimum >= -tolerance), minimum,
                         tolerance, 'pointwise convexity inequality for Lambda',
                         details={'allowance': allowance})
    return CordobaResidual(fine.with_values(residual), tolerance, result)


def corollary_chain_check(traj, level, t1, t2, rtol=LEVEL_SET_RTOL, refine=REFINE):
    """
    Rebuilds the level-set residual from its parts: the transport term
    int gamma v . grad theta (zero by skew symmetry) and the convexity gap
    int gamma Lambda^beta theta - ||Lambda^(beta/2) gamma||^2 (nonnegative):

        residual = -2 int transport - 2 kappa int gap
    """
    direct = level_set_energy_check(traj, level, t1, t2, rtol, refine)
    if direct.status == CheckStatus.INCONCLUSIVE:
        return direct._replace(name='chain[{}]'.format(level_name(level)))
    index = _window(traj, t1, t2)
    transport = []
    gap = []
    for i in index:
        theta = traj.thetas[i]
        fine = _refined(theta, refine)
        gamma = truncate(fine, level).values
        s = spectral.forward(fine)
        lam = spectral.inverse(spectral.fractional_laplacian(s, traj.beta)).values
        cell = fine.grid.cell_volume
        gamma_s = spectral.forward(fine.with_values(gamma))
        gap.append(float(np.sum(gamma * lam) * cell)
                   - spectral.sobolev_seminorm(gamma_s, 0.5 * traj.beta))
        velocity = traj.velocities[i]
        if velocity is None:
            transport.append(0.0)
            continue
        # the product as the integrator forms it: coarse grid, then dealiased
        coarse = spectral.forward(theta)
        advection = np.zeros(theta.grid.shape)
        for j, component in enumerate(velocity, start=1):
            advection += component.values * spectral.inverse(spectral.derivative(coarse, j)).values
        product = spectral.forward(theta.with_values(advection))
        if traj.dealias:
            product = spectral.dealias(product)
        advection = _refined(spectral.inverse(product), refine).values
        transport.append(float(np.sum(gamma * advection) * cell))
    times = np.asarray(traj.times)[index]
    transport_integral = _time_integral(times, transport)
    gap_integral = _time_integral(times, gap)
    chained = -2.0 * transport_integral - 2.0 * traj.kappa * gap_integral
    residual = abs(direct.residual - chained)
    tolerance = 2.0 * direct.tolerance
    ok = residual <= tolerance and gap_integral >= -direct.tolerance
    return CheckResult('chain[{}]'.format(level_name(level)), status_of(ok), residual, tolerance,
                       'per-level energy balance from the pointwise inequality',
                       details={'direct': direct.residual, 'chained': chained,
                                'transport': transport_integral, 'gap': gap_integral})


# Local energy inequality on the extension

def _bump(s):
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def make_cutoff(grid, z_levels, radius, center=None):
    """
    Smooth eta(x, z) = bump(|x - center|/radius) bump(z/radius), supported in
    B_radius x [0, radius). Values on grid x z_levels, z-major.
    """
    z_levels = np.asarray(z_levels, dtype=np.float64)
    if center is None:
        center = [0.5 * length for length in grid.lengths]
    if radius >= 0.5 * min(grid.lengths):
        raise SupportError('Cutoff radius {} escapes the periodic cell {}'.format(radius, grid.lengths))
    if radius >= z_levels[-1]:
        raise SupportError('Cutoff height {} exceeds z range {}'.format(radius, z_levels[-1]))
    r2 = np.zeros(grid.shape)
    for x, c, length in zip(grid.coordinates(), center, grid.lengths):
        d = np.mod(x - c + 0.5 * length, length) - 0.5 * length
        r2 = r2 + d * d
    horizontal = _bump(np.sqrt(r2) / radius)
    vertical = _bump(z_levels / radius)
    return vertical.reshape((-1,) + (1,) * grid.ndim) * horizontal[None]


def bmo_seminorm(u, min_cells=2):
    """
    Max over aligned dyadic cubes (side >= min_cells cells) of the mean of
    |u - cube mean|. The domain mean is reported separately.
    """
    values = u.values
    dims = u.grid.dims
    best = 0.0
    side = min(dims)
    while side >= min_cells:
        shape = []
        for n in dims:
            shape += [n // side, side]
        blocks = values.reshape(shape)
        inner = tuple(range(1, 2 * len(dims), 2))
        means = blocks.mean(axis=inner, keepdims=True)
        oscillation = np.abs(blocks - means).mean(axis=inner)
        best = max(best, float(oscillation.max()))
        side //= 2
    return BMO(best, abs(float(values.mean())))


@numba.njit(cache=True)
def _translate_oscillation(values, s1, s2, s3):
    n1, n2, n3 = values.shape
    count = s1 * s2 * s3
    best = 0.0
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                total = 0.0
                for a in range(s1):
                    for b in range(s2):
                        for c in range(s3):
                            total += values[(i + a) % n1, (j + b) % n2, (k + c) % n3]
                mean = total / count
                dev = 0.0
                for a in range(s1):
                    for b in range(s2):
                        for c in range(s3):
                            dev += abs(values[(i + a) % n1, (j + b) % n2, (k + c) % n3] - mean)
                dev /= count
                if dev > best:
                    best = dev
    return best


def bmo_seminorm_bruteforce(u, min_cells=2):
    """Same quantity over every periodic translate of every dyadic cube"""
    ndim = u.grid.ndim
    values = np.ascontiguousarray(u.values.reshape(u.grid.dims + (1,) * (3 - ndim)))
    best = 0.0
    side = min(u.grid.dims)
    while side >= min_cells:
        sides = [side] * ndim + [1] * (3 - ndim)
        best = max(best, _translate_oscillation(values, sides[0], sides[1], sides[2]))
        side //= 2
    return BMO(best, abs(float(u.values.mean())))


def _extension_terms(theta, eta, z_levels, level):
    ext = extension.harmonic_extension(theta, z_levels)
    terms = extension.extension_energy_terms(ext, eta, level)
    positive = np.maximum(theta.values - level, 0.0)
    eta0 = eta[0]
    boundary = float(np.sum((eta0 * positive) ** 2) * theta.grid.cell_volume)
    grad_eta0 = spectral.gradient(spectral.PhysicalField(theta.grid, eta0))
    grad2 = sum(g.values ** 2 for g in grad_eta0)
    flux = float(np.sum(grad2 * positive ** 2) * theta.grid.cell_volume)
    # extension energy = cutoff + gradient + cross; the gradient term is int (|grad eta| theta*_+)^2
    return terms.total, terms.gradient_term, boundary, flux


def local_energy_check(traj, t1, t2, radius=None, z_levels=None, level=0.0, t1_samples=None):
    """
    kappa int A + B(t2)/2 <= B(t1)/2 + kappa int E + Phi int D with
    A = int |grad(eta theta*_+)|^2, E = int (|grad eta| theta*_+)^2 over the extension,
    B = int (eta theta_+)^2 and D = int (|grad eta| theta_+)^2 on the boundary.
    Phi_hat is the smallest Phi for which the inequality holds from every sampled
    start t1 (t1_samples, default t1 alone).
    """
    if traj.beta != 1.0:
        raise CheckError('Local energy inequality needs beta=1, trajectory has beta={}'.format(traj.beta))
    grid = traj.grid
    if z_levels is None:
        z_levels = extension.default_z_levels()
    if radius is None:
        radius = 0.25 * min(grid.lengths)
    eta = make_cutoff(grid, z_levels, radius)
    starts = [t1] if t1_samples is None else list(t1_samples)
    index = _window(traj, min(starts), t2)
    if index.size < MIN_WINDOW:
        return CheckResult('local_energy', CheckStatus.INCONCLUSIVE, math.nan, math.inf,
                           'local energy inequality',
                           details={'reason': 'only {} snapshots in window'.format(index.size)})
    times = np.asarray(traj.times)[index]
    terms = np.array([_extension_terms(traj.thetas[i], eta, z_levels, level) for i in index])
    bmo = 0.0
    for i in index:
        if traj.velocities[i] is not None:
            bmo = max(bmo, max(bmo_seminorm(v).seminorm for v in traj.velocities[i]))
    estimates = []
    residuals = []
    for start in starts:
        sel = times >= start - 1e-12 * max(1.0, abs(start))
        if np.count_nonzero(sel) < MIN_WINDOW:
            continue
        window = terms[sel]
        t = times[sel]
        lhs = traj.kappa * _time_integral(t, window[:, 0]) + 0.5 * window[-1, 2]
        rhs = 0.5 * window[0, 2] + traj.kappa * _time_integral(t, window[:, 1])
        flux = _time_integral(t, window[:, 3])
        excess = lhs - rhs
        residuals.append(excess)
        if excess <= 0:
            estimates.append(0.0)
        elif flux > 0:
            estimates.append(excess / flux)
        else:
            estimates.append(math.inf)
    if not estimates:
        return CheckResult('local_energy', CheckStatus.INCONCLUSIVE, math.nan, math.inf,
                           'local energy inequality', details={'reason': 'no usable t1 sample'})
    phi_hat = float(np.max(estimates))
    return CheckResult('local_energy', status_of(math.isfinite(phi_hat)), float(np.max(residuals)),
                       math.inf, 'local energy inequality',
                       details={'phi_hat': phi_hat, 'radius': radius, 'bmo': bmo,
                                't1_samples': len(estimates)})


def local_energy_refinement_check(traj, t1, t2, refined=None, radius=None, z_levels=None, level=0.0,
                                  factor=2.0, floor=PHI_FLOOR):
    """
    Phi_hat on ``traj``, again with the z spacing halved and, when given, on a
    ``refined`` run of the same experiment. Passes when every estimate is finite
    and the largest is within ``factor`` of the smallest or below ``floor``.
    """
    if z_levels is None:
        z_levels = extension.default_z_levels()
    runs = [('base', traj, z_levels), ('dz', traj, extension.halve_z_spacing(z_levels))]
    if refined is not None:
        runs.append(('dt', refined, z_levels))
    estimates = {}
    for key, run, z in runs:
        result = local_energy_check(run, t1, min(t2, run.times[-1]), radius, z, level)
        if result.status == CheckStatus.INCONCLUSIVE:
            return result._replace(details=dict(result.details, refinement=key))
        estimates[key] = result.details['phi_hat']
    values = list(estimates.values())
    finite = all(math.isfinite(v) for v in values)
    spread = max(values) - min(values)
    stable = finite and (max(values) <= floor or max(values) <= factor * min(values))
    details = {'phi_hat': estimates['base'], 'stable': stable}
    details.update(('phi_hat_{}'.format(key), value) for key, value in estimates.items() if key != 'base')
    log_debug('Local energy estimates {}'.format(estimates))
    return CheckResult('local_energy', status_of(stable), spread if finite else math.inf, math.inf,
                       'local energy inequality under refinement', details=details)


# Registry for the CLI; each entry builds jobs from a trajectory and options

def default_levels(traj, count=16):
    return list(level_grid(traj, count))


def build_jobs(traj, names, options):
    """(name, callable) pairs; callables take no arguments and return CheckResults"""
    t_start = traj.times[0]
    t_final = traj.times[-1]
    jobs = []
    selected = set(names)

    def want(name):
        return 'all' in selected or name in selected

    if want('level_set'):
        for level in default_levels(traj, options.get('levels', 16)) + [-np.inf]:
            jobs.append(('level_set[{}]'.format(level_name(level)),
                         lambda level=level: level_set_energy_check(
                             traj, level, t_start, t_final, options.get('rtol', LEVEL_SET_RTOL))))
    if want('uk'):
        def uk_job():
            t0 = options.get('t0', 0.5 * t_final)
            M = options.get('M') or decay_level(traj, t0)
            if M <= 0:
                return CheckResult('uk_recursion', CheckStatus.INCONCLUSIVE, math.nan, math.inf,
                                   'truncation energy recursion', details={'reason': 'zero data'})
            ledger = uk_sequence(traj, M, t0, options.get('K', 6))
            result = uk_recursion_check(ledger, traj.grid.ndim)
            norm0 = spectral.l2_norm_squared(traj.theta0)
            u0_bound = bool(ledger.energies[0] <= norm0 * (1.0 + LEVEL_SET_RTOL))
            details = dict(result.details, M=M, t0=t0, u0_bound=u0_bound, tails=list(ledger.tails),
                           interval=uk_interval(ledger).tolist())
            return result._replace(details=details)
        jobs.append(('uk_recursion', uk_job))
    if want('linf_decay'):
        jobs.append(('linf_decay', lambda: linf_decay_check(
            traj, options.get('t_min', 0.1), reference=options.get('reference'))))
    if want('cordoba'):
        for i in (0, len(traj) - 1):
            theta = traj.thetas[i]
            for phi in (square(), smoothed_positive_part(0.0, options.get('width', 0.1))):
                name = 'cordoba[{}@{}]'.format(phi.name, i)
                jobs.append((name, lambda theta=theta, phi=phi, name=name:
                             cordoba_pointwise_check(theta, phi).result._replace(name=name)))
    if want('chain'):
        level = float(np.median(default_levels(traj, 5)))
        jobs.append(('chain', lambda: corollary_chain_check(traj, level, t_start, t_final)))
    if want('local_energy'):
        if traj.beta == 1.0:
            jobs.append(('local_energy', lambda: local_energy_refinement_check(
                traj, t_start, t_final, refined=options.get('reference'))))
    if want('bmo') and traj.velocities[0] is not None:
        def bmo_job():
            values = [bmo_seminorm(v) for v in traj.velocities[-1]]
            seminorm = max(b.seminorm for b in values)
            bound = 2.0 * max(float(np.max(np.abs(v.values))) for v in traj.velocities[-1])
            return CheckResult('bmo', status_of(seminorm <= bound + 1e-12), seminorm, bound,
                               'BMO bound on the drift',
                               details={'mean_term': max(b.mean_term for b in values)})
        jobs.append(('bmo', bmo_job))
    return jobs
