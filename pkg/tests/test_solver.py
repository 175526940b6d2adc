import dataclasses
import math

import numpy as np
import pytest

from sqglab import solver, spectral
from sqglab.exception import CFLError, DriftError, SolverError

from conftest import make_config, sine


def test_velocity_of_modes(grid2d):
    x1, x2 = grid2d.coordinates()
    u1, u2 = solver.velocity_from_theta(sine(grid2d, (1,)))
    assert np.max(np.abs(u1.values)) < 1e-12
    assert np.max(np.abs(u2.values - np.cos(x1))) < 1e-12
    u1, u2 = solver.velocity_from_theta(sine(grid2d, (0, 1)))
    assert np.max(np.abs(u1.values + np.cos(x2))) < 1e-12
    assert np.max(np.abs(u2.values)) < 1e-12


def test_velocity_is_isometry(band_field):
    u1, u2 = solver.velocity_from_theta(band_field)
    total = spectral.l2_norm_squared(u1) + spectral.l2_norm_squared(u2)
    assert total == pytest.approx(spectral.l2_norm_squared(band_field), rel=1e-12)


def test_velocity_needs_two_dimensions():
    with pytest.raises(SolverError):
        solver.velocity_from_theta(sine(spectral.Grid((16,)), (1,)))


def test_rhs_pure_diffusion(grid2d):
    f = sine(grid2d, (1,))
    zero = (np.zeros(grid2d.shape),) * 2
    assert np.max(np.abs(solver.rhs(f, zero, 1.0, 1.0).values + f.values)) < 1e-12
    assert np.max(np.abs(solver.rhs(f, zero, 1.0, 0.0).values)) < 1e-14


def test_rhs_transport_is_skew(grid2d, band_field):
    v = solver.prescribed_drift(grid2d, solver.DriftSpec(solver.DriftMode.PRESCRIBED, 'cellular', {}))
    out = solver.rhs(band_field, v, 1.0, 0.0)
    assert abs(np.sum(band_field.values * out.values) * grid2d.cell_volume) < 1e-10


def test_rhs_rejects_compressible_drift(grid2d, band_field):
    x1 = grid2d.coordinates()[0]
    with pytest.raises(DriftError):
        solver.rhs(band_field, (np.sin(x1), np.zeros(grid2d.shape)), 1.0, 1.0)


def test_step_pure_diffusion_is_exact(grid2d):
    integrator = solver.Integrator(grid2d, 1.0, 0.5, solver.DriftSpec(solver.DriftMode.ZERO))
    f = sine(grid2d, (3,))
    state = integrator.initial_state(f)
    for _ in range(4):
        state = integrator.step(state, 0.05)
    theta = np.fft.ifftn(state.coeffs).real * f.grid.npoints
    assert np.max(np.abs(theta - math.exp(-0.5 * 3 * 0.2) * f.values)) < 1e-12


def test_step_rejects_cfl_violation(grid2d, band_field):
    integrator = solver.Integrator(grid2d, 1.0, 1.0, solver.DriftSpec(solver.DriftMode.SQG))
    state = integrator.initial_state(band_field.with_values(10 * band_field.values))
    with pytest.raises(CFLError) as excinfo:
        integrator.step(state, 1.0)
    assert excinfo.value.dt == 1.0


def test_diffusion_run_matches_closed_form(diffusion_traj):
    theta0 = spectral.forward(diffusion_traj.theta0)
    norms = spectral.wavenumber_norm(theta0.grid)
    for t, l2 in zip(diffusion_traj.scalars['time'], diffusion_traj.scalars['l2']):
        exact = math.sqrt(np.sum(np.abs(theta0.coeffs * np.exp(-norms * t)) ** 2) * theta0.grid.volume)
        assert l2 == pytest.approx(exact, rel=1e-10)


def test_diffusion_run_layout(diffusion_traj):
    assert diffusion_traj.state == solver.RunState.COMPLETED
    assert len(diffusion_traj) == 51
    assert diffusion_traj.times[-1] == 0.5
    assert all(v is None for v in diffusion_traj.velocities)
    assert len(diffusion_traj.scalars['time']) == 51


def test_zero_initial_condition():
    config = make_config(dims=(16, 16), drift=solver.DriftMode.SQG, t_end=0.05)
    config = dataclasses.replace(config, initial_condition=solver.InitialCondition('zero'))
    traj = solver.run(config)
    assert traj.state == solver.RunState.COMPLETED
    assert all(np.max(np.abs(theta.values)) == 0.0 for theta in traj.thetas)


def test_mean_is_conserved(sqg_traj):
    for theta in sqg_traj.thetas:
        assert abs(theta.mean()) < 1e-14


def test_l2_norm_decreases(sqg_traj):
    l2 = sqg_traj.scalar_array('l2')
    assert np.all(np.diff(l2) <= 1e-14)


def test_max_norm_does_not_grow(sqg_traj):
    peaks = [float(np.max(np.abs(spectral.upsample(theta, 4).values))) for theta in sqg_traj.thetas]
    assert np.all(np.diff(peaks) <= 1e-3 * peaks[0])


def test_sqg_velocity_divergence_free(sqg_traj):
    for velocity in sqg_traj.velocities:
        assert solver.divergence_residual([v.values for v in velocity], sqg_traj.grid) < 1e-12


def test_energy_residual_converges():
    residuals = []
    for dt in (0.04, 0.02):
        traj = solver.run(make_config(drift=solver.DriftMode.SQG, dt=dt, t_end=0.4))
        residuals.append(abs(traj.scalars['energy_residual'][-1]))
    assert residuals[1] < 1e-4 * spectral.l2_norm_squared(traj.theta0)
    assert residuals[0] / residuals[1] >= 8.0


def test_time_convergence_order():
    finals = []
    for dt in (0.04, 0.02, 0.01):
        traj = solver.run(make_config(drift=solver.DriftMode.SQG, dt=dt, t_end=0.4, stride=1000))
        finals.append(traj.thetas[-1].values)
    ratio = np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2]))
    assert math.log2(ratio) >= 3.5


def test_duhamel_zero_drift(diffusion_traj):
    assert solver.duhamel_residual(diffusion_traj, 0.0) == 0.0
    assert solver.duhamel_residual(diffusion_traj, 0.5) < 1e-10


def test_duhamel_converges_with_snapshot_spacing(sqg_traj):
    fine = solver.duhamel_residual(sqg_traj, 0.4, stride=1)
    coarse = solver.duhamel_residual(sqg_traj, 0.4, stride=2)
    assert coarse / fine >= 2.0


def test_snapshot_stride():
    traj = solver.run(make_config(dims=(16, 16), t_end=0.1, stride=10))
    assert traj.steps == [0, 10]
    assert len(traj.scalars['time']) == 11


def test_snapshot_index(diffusion_traj):
    assert diffusion_traj.snapshot_index(0.25) == 25
    with pytest.raises(SolverError):
        diffusion_traj.snapshot_index(0.7)
    with pytest.raises(SolverError):
        diffusion_traj.snapshot_index(0.255)


def test_cfl_failure_returns_partial_trajectory():
    traj = solver.run(make_config(drift=solver.DriftMode.SQG, dt=0.1, t_end=0.5, amplitude=10.0))
    assert traj.state == solver.RunState.FAILED
    assert 'CFL' in traj.message
    assert len(traj) >= 1


def test_config_validation(grid2d):
    with pytest.raises(SolverError):
        solver.SolverConfig(grid=grid2d, beta=3.0)
    with pytest.raises(SolverError):
        solver.SolverConfig(grid=grid2d, dt=-1.0)
    with pytest.raises(SolverError):
        solver.SolverConfig(grid=spectral.Grid((16,)))


def test_save_and_load(tmp_path, sqg_traj):
    written = sqg_traj.save(str(tmp_path))
    assert solver.DIAGNOSTICS_CSV in written
    back = solver.Trajectory.load(str(tmp_path))
    assert back.times == sqg_traj.times
    assert back.steps == sqg_traj.steps
    assert back.state == sqg_traj.state
    for a, b in zip(back.thetas, sqg_traj.thetas):
        assert np.array_equal(a.values, b.values)
    for a, b in zip(back.velocities, sqg_traj.velocities):
        assert np.array_equal(a[0].values, b[0].values)
    assert back.scalars == sqg_traj.scalars


def test_load_missing_directory(tmp_path):
    with pytest.raises(SolverError):
        solver.Trajectory.load(str(tmp_path / 'nothing'))


def test_diffusion_rescaling(grid2d):
    # theta(M t, M x) solves the same equation; on the torus take M = 2
    f = spectral.random_band_field(grid2d, 1, 3, 1.0, seed=2)
    index = (2 * np.arange(grid2d.dims[0])) % grid2d.dims[0]
    scaled = f.with_values(f.values[np.ix_(index, index)])
    integrator = solver.Integrator(grid2d, 1.0, 1.0, solver.DriftSpec(solver.DriftMode.ZERO))
    original = integrator.initial_state(f)
    rescaled = integrator.initial_state(scaled)
    for _ in range(20):
        original = integrator.step(original, 0.02)
    for _ in range(10):
        rescaled = integrator.step(rescaled, 0.02)
    a = np.fft.ifftn(original.coeffs).real * grid2d.npoints
    b = np.fft.ifftn(rescaled.coeffs).real * grid2d.npoints
    assert np.max(np.abs(b - a[np.ix_(index, index)])) < 1e-12
