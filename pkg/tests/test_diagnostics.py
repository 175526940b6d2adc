import math

import numpy as np
import pytest
import scipy.integrate

from sqglab import diagnostics, solver, spectral
from sqglab.diagnostics import CheckStatus
from sqglab.exception import CheckError, ConvexityError, SupportError

from conftest import TWO_PI, make_config, sine, static_trajectory


def test_truncate(band_field):
    top = float(band_field.values.max())
    assert np.max(diagnostics.truncate(band_field, top).values) == 0.0
    assert np.array_equal(diagnostics.truncate(band_field, -np.inf).values, band_field.values)
    low = diagnostics.truncate(band_field, 0.1).values
    high = diagnostics.truncate(band_field, 0.3).values
    assert np.all(high <= low)


def test_level_set_checks_pass_for_diffusion(diffusion_traj):
    levels = list(diagnostics.level_grid(diffusion_traj)) + [-np.inf]
    for level in levels:
        result = diagnostics.level_set_energy_check(diffusion_traj, level, 0.0, 0.5)
        assert result.status == CheckStatus.PASS, result


def test_level_above_maximum_is_zero(diffusion_traj):
    top = max(float(theta.values.max()) for theta in diffusion_traj.thetas)
    result = diagnostics.level_set_energy_check(diffusion_traj, top + 1.0, 0.0, 0.5)
    assert result.residual == 0.0
    assert result.status == CheckStatus.PASS


def test_level_set_energy_law(diffusion_traj):
    result = diagnostics.level_set_energy_check(diffusion_traj, -np.inf, 0.0, 0.5)
    assert abs(result.residual) <= result.tolerance


def test_level_set_window(diffusion_traj):
    with pytest.raises(CheckError):
        diagnostics.level_set_energy_check(diffusion_traj, 0.0, 0.3, 0.2)
    with pytest.raises(CheckError):
        diagnostics.level_set_energy_check(diffusion_traj, 0.0, 0.0, 0.9)
    result = diagnostics.level_set_energy_check(diffusion_traj, 0.0, 0.2, 0.21)
    assert result.status == CheckStatus.INCONCLUSIVE


def test_level_set_checks_pass_for_sqg(sqg_traj):
    for level in list(diagnostics.level_grid(sqg_traj, 8)) + [-np.inf]:
        result = diagnostics.level_set_energy_check(sqg_traj, level, 0.0, 0.4)
        assert result.status == CheckStatus.PASS, result


def test_uk_sequence(diffusion_traj):
    M = diagnostics.decay_level(diffusion_traj, 0.25)
    ledger = diagnostics.uk_sequence(diffusion_traj, M, 0.25, 5)
    positive0 = diagnostics.truncation_energies(diffusion_traj.theta0, 0.0)[0]
    assert positive0 < ledger.energies[0] <= 2.0 * positive0 * (1.0 + 1e-5)
    assert np.all(np.diff(ledger.energies) <= 1e-3 * ledger.energies[0])
    assert np.all(np.diff(ledger.levels) > 0)
    assert ledger.times[-1] < 0.25


def test_uk_carries_the_dissipation(diffusion_traj):
    M = diagnostics.decay_level(diffusion_traj, 0.25)
    ledger = diagnostics.uk_sequence(diffusion_traj, M, 0.25, 3)
    times = np.asarray(diffusion_traj.times)
    terms = np.array([diagnostics.truncation_energies(theta, 0.0) for theta in diffusion_traj.thetas])
    expected = terms[:, 0].max() + 2.0 * diffusion_traj.kappa * scipy.integrate.simpson(terms[:, 1], x=times)
    assert ledger.energies[0] == pytest.approx(expected, rel=1e-12)
    interval = diagnostics.uk_interval(ledger)
    assert np.array_equal(interval[:, 0], ledger.energies)
    assert np.all(interval[:, 1] >= interval[:, 0])
    assert interval[0, 1] - interval[0, 0] == pytest.approx(terms[-1, 0])


def test_uk_sequence_input_validation(diffusion_traj):
    with pytest.raises(CheckError):
        diagnostics.uk_sequence(diffusion_traj, 1.0, 0.0, 3)
    with pytest.raises(CheckError):
        diagnostics.uk_sequence(diffusion_traj, -1.0, 0.2, 3)


def _ledger(energies):
    energies = np.asarray(energies, dtype=np.float64)
    K = energies.size - 1
    levels = 1.0 - 2.0 ** -np.arange(K + 1)
    return diagnostics.LevelSetLedger(1.0, 1.0, levels, levels, energies, np.zeros_like(energies), 2.0)


def test_recursion_needs_three_levels():
    with pytest.raises(CheckError):
        diagnostics.uk_recursion_check(_ledger([1.0, 0.5, 0.1]), 2)


def test_recursion_all_zero():
    result = diagnostics.uk_recursion_check(_ledger([0.0] * 5), 2)
    assert result.status == CheckStatus.PASS
    assert result.details['c_hat'] == 0.0


def test_recursion_broken_level():
    result = diagnostics.uk_recursion_check(_ledger([1.0, 0.0, 0.5, 0.0]), 2)
    assert result.status == CheckStatus.FAIL
    assert result.details['broken_levels'] == [2]


def test_recursion_on_diffusion(diffusion_traj):
    M = diagnostics.decay_level(diffusion_traj, 0.25)
    ledger = diagnostics.uk_sequence(diffusion_traj, M, 0.25, 5)
    result = diagnostics.uk_recursion_check(ledger, 2)
    assert result.status != CheckStatus.FAIL
    assert math.isfinite(result.details['c_hat'])


def test_recursion_decays_on_sqg(sqg_traj):
    M = diagnostics.decay_level(sqg_traj, 0.2)
    ledger = diagnostics.uk_sequence(sqg_traj, M, 0.2, 6)
    result = diagnostics.uk_recursion_check(ledger, 2)
    assert result.status == CheckStatus.PASS
    assert result.details['geometric_decay']
    assert result.details['geometric_ratio'] < 1.0


def test_chebyshev_step(diffusion_traj):
    M = diagnostics.decay_level(diffusion_traj, 0.25)
    for k in (1, 2, 3):
        assert diagnostics.chebyshev_check(diffusion_traj, M, k, 2).status == CheckStatus.PASS


def test_linf_decay(diffusion_traj):
    result = diagnostics.linf_decay_check(diffusion_traj)
    assert result.status == CheckStatus.PASS
    assert 0 < result.residual < math.inf
    assert result.details['resolution_fraction'] <= diagnostics.RESOLUTION_TOL


def test_linf_decay_against_refined_run(diffusion_traj):
    fine = solver.run(make_config(dims=(64, 64), k_min=4, k_max=8))
    result = diagnostics.linf_decay_check(diffusion_traj, reference=fine)
    assert result.status == CheckStatus.PASS
    assert result.details['stable']
    assert result.details['reference_constant'] == pytest.approx(result.residual, rel=5e-2)


def test_linf_decay_against_mismatched_run(diffusion_traj, grid2d):
    flat = static_trajectory(spectral.PhysicalField(grid2d, np.zeros(grid2d.shape)))
    result = diagnostics.linf_decay_check(diffusion_traj, reference=flat)
    assert result.status == CheckStatus.FAIL
    assert not result.details['stable']


def test_linf_decay_of_zero_data(grid2d):
    traj = static_trajectory(spectral.PhysicalField(grid2d, np.zeros(grid2d.shape)))
    assert diagnostics.linf_decay_constant(traj) == 0.0


def test_resolution_fraction(grid2d):
    assert diagnostics.resolution_fraction(sine(grid2d, (2,))) == 0.0
    assert diagnostics.resolution_fraction(sine(grid2d, (10,))) == pytest.approx(1.0)


def test_cordoba_linear_function(band_field):
    check = diagnostics.cordoba_pointwise_check(band_field, diagnostics.linear(2.0, 1.0))
    assert np.max(np.abs(check.field.values)) < 1e-10
    assert check.result.status == CheckStatus.PASS


def test_cordoba_square_of_sine(grid2d):
    check = diagnostics.cordoba_pointwise_check(sine(grid2d, (1,)), diagnostics.square())
    assert np.max(np.abs(check.field.values - 1.0)) < 1e-10
    assert check.result.status == CheckStatus.PASS


def test_cordoba_random_fields():
    grid = spectral.Grid((32, 32))
    phi = diagnostics.smoothed_positive_part(0.0, 0.3)
    for seed in range(50):
        theta = spectral.random_band_field(grid, 1, 3, 1.0, seed)
        check = diagnostics.cordoba_pointwise_check(theta, phi)
        assert check.result.status == CheckStatus.PASS, seed


def test_cordoba_rejects_concave(band_field):
    cube = diagnostics.ConvexFunction('cube', lambda s: s ** 3, lambda s: 3 * s ** 2)
    with pytest.raises(ConvexityError):
        diagnostics.cordoba_pointwise_check(band_field, cube)


def test_chain_matches_direct(sqg_traj):
    level = float(np.median(diagnostics.level_grid(sqg_traj, 5)))
    result = diagnostics.corollary_chain_check(sqg_traj, level, 0.0, 0.4)
    assert result.status == CheckStatus.PASS, result
    assert result.details['gap'] >= 0


def test_chain_without_drift(diffusion_traj):
    result = diagnostics.corollary_chain_check(diffusion_traj, 0.0, 0.0, 0.5)
    assert result.details['transport'] == 0.0
    assert result.status == CheckStatus.PASS


def test_cutoff_support(grid2d):
    z = np.linspace(0.0, 4.0, 9)
    eta = diagnostics.make_cutoff(grid2d, z, 1.0)
    assert eta.shape == (9, 32, 32)
    assert eta.max() == pytest.approx(1.0)
    assert np.all(eta[z >= 1.0] == 0.0)
    with pytest.raises(SupportError):
        diagnostics.make_cutoff(grid2d, z, 4.0)
    with pytest.raises(SupportError):
        diagnostics.make_cutoff(grid2d, z[:3], 1.0)


def test_local_energy_without_drift(local_energy_traj):
    result = diagnostics.local_energy_check(local_energy_traj, 0.0, 0.2)
    assert result.status == CheckStatus.PASS
    assert result.details['bmo'] == 0.0
    scale = spectral.l2_norm_squared(local_energy_traj.theta0)
    assert abs(result.residual) <= 1e-2 * scale


def test_local_energy_covers_every_start(sqg_traj):
    starts = [0.0, 0.1, 0.2]
    combined = diagnostics.local_energy_check(sqg_traj, 0.0, 0.4, t1_samples=starts)
    single = [diagnostics.local_energy_check(sqg_traj, t1, 0.4).details['phi_hat'] for t1 in starts]
    assert combined.details['t1_samples'] == 3
    assert combined.details['phi_hat'] == pytest.approx(max(single), rel=1e-12, abs=1e-300)


def test_local_energy_under_refinement(sqg_traj):
    refined = solver.run(make_config(drift=solver.DriftMode.SQG, dt=0.01, t_end=0.4))
    result = diagnostics.local_energy_refinement_check(sqg_traj, 0.0, 0.4, refined=refined)
    assert result.status == CheckStatus.PASS, result
    assert result.details['stable']
    assert {'phi_hat', 'phi_hat_dz', 'phi_hat_dt'} <= set(result.details)


def test_local_energy_of_negative_field(grid2d):
    traj = static_trajectory(spectral.PhysicalField(grid2d, np.full(grid2d.shape, -1.0)))
    result = diagnostics.local_energy_check(traj, 0.0, 10.0)
    assert result.details['phi_hat'] == 0.0
    assert result.residual == 0.0


def test_local_energy_needs_beta_one(sqg_traj):
    traj = solver.Trajectory(sqg_traj.grid, 0.5, 1.0)
    traj.thetas, traj.times, traj.velocities = sqg_traj.thetas, sqg_traj.times, sqg_traj.velocities
    with pytest.raises(CheckError):
        diagnostics.local_energy_check(traj, 0.0, 0.4)


def test_bmo_of_constant(grid2d):
    u = spectral.PhysicalField(grid2d, np.full(grid2d.shape, 4.0))
    bmo = diagnostics.bmo_seminorm(u)
    assert bmo.seminorm == 0.0
    assert bmo.mean_term == 4.0


def test_bmo_bounds(band_field):
    bmo = diagnostics.bmo_seminorm(band_field).seminorm
    shifted = diagnostics.bmo_seminorm(band_field.with_values(band_field.values + 3.0)).seminorm
    assert bmo <= 2.0 * np.max(np.abs(band_field.values))
    assert shifted == pytest.approx(bmo, rel=1e-12)


@pytest.mark.parametrize('n', [32, 64])
def test_bmo_dyadic_close_to_bruteforce(n):
    grid = spectral.Grid((n, n))
    x1 = grid.coordinates()[0]
    u = spectral.PhysicalField(grid, np.tanh(np.sin(x1 - 0.375 * TWO_PI) / 0.1))
    dyadic = diagnostics.bmo_seminorm(u).seminorm
    brute = diagnostics.bmo_seminorm_bruteforce(u).seminorm
    assert brute >= dyadic - 1e-12
    assert dyadic >= 0.9 * brute


def test_report_flattening(diffusion_traj):
    report = diagnostics.DiagnosticsReport({'trajectory': 'x'})
    report.add(diagnostics.level_set_energy_check(diffusion_traj, 0.0, 0.0, 0.5))
    report.add(diagnostics.CheckResult('never', CheckStatus.FAIL, math.inf, 1.0, 'anchor'))
    flat = report.to_flat_dict()
    assert flat['provenance.trajectory'] == 'x'
    assert flat['level_set[0].status'] == 'pass'
    assert flat['never.residual'] == 'inf'
    assert flat['summary.failed'] == 1
    assert report.failed == ['never']
    assert not report.passed


def test_build_jobs(diffusion_traj, sqg_traj):
    names = [name for name, _ in diagnostics.build_jobs(diffusion_traj, ['all'], {})]
    assert names.count('level_set[-inf]') == 1
    assert len([n for n in names if n.startswith('level_set')]) == 17
    assert 'bmo' not in names
    assert 'local_energy' in names
    sqg_names = [name for name, _ in diagnostics.build_jobs(sqg_traj, ['bmo'], {})]
    assert sqg_names == ['bmo']
