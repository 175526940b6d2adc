import math

import numpy as np
import pytest

from sqglab import solver, spectral


def make_config(dims=(32, 32), drift=solver.DriftMode.ZERO, dt=0.01, t_end=0.5, seed=3,
                k_min=2, k_max=6, amplitude=1.0, stride=1, **kwargs):
    return solver.SolverConfig(
        grid=spectral.Grid(dims),
        dt=dt,
        t_end=t_end,
        initial_condition=solver.InitialCondition(
            'random_band', {'k_min': k_min, 'k_max': k_max, 'amplitude': amplitude}, seed),
        drift=solver.DriftSpec(drift),
        snapshot_stride=stride,
        **kwargs)


def static_trajectory(field, times=(0.0, 5.0, 10.0), velocity=None):
    """The same field held at every time"""
    traj = solver.Trajectory(field.grid, 1.0, 1.0, drift_mode=solver.DriftMode.ZERO)
    for step, t in enumerate(times):
        v = None if velocity is None else tuple(np.asarray(c) for c in velocity)
        traj.add_snapshot(step, field._replace(time_tag=t), v)
    return traj


def sine(grid, k=(1,), amplitude=1.0):
    k = tuple(k) + (0,) * (grid.ndim - len(k))
    x = grid.coordinates()
    return spectral.PhysicalField(grid, amplitude * np.sin(sum(kj * xj for kj, xj in zip(k, x))))


@pytest.fixture(scope='function')
def grid2d():
    yield spectral.Grid((32, 32))


@pytest.fixture(scope='function')
def band_field(grid2d):
    yield spectral.random_band_field(grid2d, 2, 6, 1.0, seed=11)


@pytest.fixture(scope='module')
def diffusion_traj():
    yield solver.run(make_config(k_min=4, k_max=8))


@pytest.fixture(scope='module')
def sqg_traj():
    yield solver.run(make_config(drift=solver.DriftMode.SQG, dt=0.02, t_end=0.4))


@pytest.fixture(scope='module')
def local_energy_traj():
    yield solver.run(make_config(dims=(64, 64), dt=0.02, t_end=0.2))


@pytest.fixture(scope='function')
def write_config(tmp_path):
    def write(text, name='experiment.cfg'):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    yield write


TWO_PI = 2.0 * math.pi
