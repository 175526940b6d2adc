import json
import os

import pytest

from sqglab import cli, solver


SMALL = """version = 1
[grid]
dims = 16, 16
[solver]
t_end = 0.1
dt = 0.01
[initial]
seed = 5
"""

DIFFUSION = """version = 1
[grid]
dims = 32, 32
[solver]
t_end = 0.5
dt = 0.01
[initial]
k_min = 4
k_max = 8
seed = 3
[drift]
mode = zero
"""

LEMMAS = """version = 1
[grid]
dims = 16, 16
[solver]
t_end = 0.1
dt = 0.01
[initial]
seed = 5
[lemmas]
corpus_count = 12
holdout_count = 30
corpus_points = 32
corpus_seed = 7
holdout_seed = 8
"""


@pytest.fixture(scope='function')
def run_dir(tmp_path, write_config):
    def run(text, name='traj'):
        out = str(tmp_path / name)
        assert cli.main(['--config', write_config(text), '--out', out, 'run']) == cli.EXIT_OK
        return out
    yield run


def test_run_writes_trajectory(run_dir):
    out = run_dir(SMALL)
    names = set(os.listdir(out))
    assert {'theta_0.sqgf', 'theta_10.sqgf', 'u1_0.sqgf', 'u2_10.sqgf', cli.MANIFEST,
            solver.DIAGNOSTICS_CSV, solver.TRAJECTORY_META} <= names
    with open(os.path.join(out, cli.MANIFEST)) as f:
        manifest = json.load(f)
    assert manifest['command'] == 'run'
    assert manifest['state'] == 'completed'
    assert len(manifest['config_sha256']) == 64


def test_run_is_deterministic(run_dir):
    manifests = []
    for name in ('first', 'second'):
        with open(os.path.join(run_dir(SMALL, name), cli.MANIFEST)) as f:
            manifests.append(json.load(f))
    assert manifests[0]['files'] == manifests[1]['files']


def test_run_with_missing_key(tmp_path, write_config):
    path = write_config(SMALL.replace('dt = 0.01\n', ''))
    assert cli.main(['--config', path, '--out', str(tmp_path / 'x'), 'run']) == cli.EXIT_USAGE


def test_run_needs_config(tmp_path):
    assert cli.main(['--out', str(tmp_path / 'x'), 'run']) == cli.EXIT_USAGE


def test_failed_run_exit_code(tmp_path, write_config):
    path = write_config(SMALL.replace('seed = 5', 'seed = 5\namplitude = 10').replace('dt = 0.01', 'dt = 0.1'))
    assert cli.main(['--config', path, '--out', str(tmp_path / 'x'), 'run']) == cli.EXIT_RUNTIME
    with open(str(tmp_path / 'x' / cli.MANIFEST)) as f:
        assert json.load(f)['state'] == 'failed'


def test_diagnose(run_dir, tmp_path):
    traj = run_dir(DIFFUSION)
    report = str(tmp_path / 'report.json')
    code = cli.main(['--out', report, 'diagnose', '--traj', traj, '--checks', 'level_set,linf_decay'])
    assert code == cli.EXIT_OK
    with open(report) as f:
        flat = json.load(f)
    assert flat['linf_decay.status'] == 'pass'
    assert flat['summary.failed'] == 0
    assert os.path.isfile(cli.report_manifest_path(report))


def test_diagnose_against_reference(run_dir, tmp_path):
    traj = run_dir(DIFFUSION)
    fine = run_dir(DIFFUSION.replace('dims = 32, 32', 'dims = 64, 64'), 'fine')
    report = str(tmp_path / 'report.json')
    code = cli.main(['--out', report, 'diagnose', '--traj', traj, '--checks', 'linf_decay', '--reference', fine])
    assert code == cli.EXIT_OK
    with open(report) as f:
        flat = json.load(f)
    assert flat['linf_decay.stable'] is True
    assert flat['provenance.reference'] == fine
    missing = str(tmp_path / 'nothing')
    code = cli.main(['--out', report, 'diagnose', '--traj', traj, '--checks', 'linf_decay', '--reference', missing])
    assert code == cli.EXIT_USAGE


def test_diagnose_unknown_check(run_dir, tmp_path):
    traj = run_dir(SMALL)
    report = str(tmp_path / 'report.json')
    assert cli.main(['--out', report, 'diagnose', '--traj', traj, '--checks', 'nonsense']) == cli.EXIT_USAGE


def test_diagnose_bad_snapshot(run_dir, tmp_path):
    traj = run_dir(SMALL)
    path = os.path.join(traj, 'theta_0.sqgf')
    with open(path, 'r+b') as f:
        f.write(b'XXXX')
    report = str(tmp_path / 'report.json')
    assert cli.main(['--out', report, 'diagnose', '--traj', traj]) == cli.EXIT_USAGE


def test_diagnose_missing_trajectory(tmp_path):
    report = str(tmp_path / 'report.json')
    code = cli.main(['--out', report, 'diagnose', '--traj', str(tmp_path / 'nothing')])
    assert code == cli.EXIT_USAGE


def test_lemmas_isoperimetric_is_deterministic(tmp_path, write_config):
    path = write_config(LEMMAS)
    reports = []
    for name in ('a.json', 'b.json'):
        out = str(tmp_path / name)
        code = cli.main(['--config', path, '--out', out, 'lemmas', '--check', 'isoperimetric'])
        assert code in (cli.EXIT_OK, cli.EXIT_CHECK_FAILED)
        with open(out) as f:
            reports.append(json.load(f))
    assert reports[0] == reports[1]
    assert reports[0]['isoperimetric.c_hat'] > 0


def test_lemmas_need_seeds(tmp_path):
    out = str(tmp_path / 'lemmas.json')
    assert cli.main(['--out', out, 'lemmas', '--check', 'isoperimetric']) == cli.EXIT_USAGE
    assert cli.main(['--out', out, 'lemmas', '--check', 'barrier']) == cli.EXIT_USAGE


def test_lemmas_b2(tmp_path):
    out = str(tmp_path / 'lemmas.json')
    assert cli.main(['--out', out, 'lemmas', '--check', 'b2']) == cli.EXIT_OK
    with open(out) as f:
        flat = json.load(f)
    assert flat['b2_series.status'] == 'pass'
    assert flat['b2_decay.status'] == 'pass'


def test_threads_validation(tmp_path, monkeypatch):
    out = str(tmp_path / 'lemmas.json')
    assert cli.main(['--threads', '0', '--out', out, 'lemmas', '--check', 'b2']) == cli.EXIT_USAGE
    monkeypatch.setenv(cli.THREADS_ENV, 'many')
    assert cli.main(['--out', out, 'lemmas', '--check', 'b2']) == cli.EXIT_USAGE


HOLDER = """version = 1
[grid]
dims = 256, 256
[solver]
t_end = 1.6
dt = 0.1
[initial]
k_min = 1
k_max = 3
seed = 4
[drift]
mode = zero
"""


def test_holder(run_dir, tmp_path):
    traj = run_dir(HOLDER)
    points = tmp_path / 'points.txt'
    points.write_text('# t x1 x2\n1.6 3.0 3.0\n1.6 1.0 5.0\n')
    report = str(tmp_path / 'holder.json')
    code = cli.main(['--out', report, 'holder', '--traj', traj, '--points', str(points)])
    assert code == cli.EXIT_OK
    with open(report) as f:
        flat = json.load(f)
    assert flat['summary.checks'] == 2
    assert flat['holder[0].t'] == 1.6


def test_holder_input_errors(run_dir, tmp_path):
    traj = run_dir(SMALL)
    report = str(tmp_path / 'holder.json')
    assert cli.main(['--out', report, 'holder', '--traj', traj]) == cli.EXIT_USAGE
    assert cli.main(['--out', report, 'holder', '--traj', traj, '--points', 'random:x']) == cli.EXIT_USAGE
    # cylinders of the default radii do not fit a 16 point grid
    assert cli.main(['--out', report, 'holder', '--traj', traj, '--points', 'random:3:1']) == cli.EXIT_USAGE


def test_galerkin(tmp_path, write_config):
    path = write_config(SMALL + '[galerkin]\nk_max = 8\nt_end = 0.1\ndt = 1e-3\n')
    report = str(tmp_path / 'galerkin.json')
    assert cli.main(['--config', path, '--out', report, 'galerkin']) in (cli.EXIT_OK, cli.EXIT_CHECK_FAILED)
    with open(report) as f:
        flat = json.load(f)
    assert flat['galerkin_antisymmetry.status'] == 'pass'
    assert flat['provenance.k_max'] == 8


def test_bench(tmp_path):
    out = str(tmp_path / 'bench.csv')
    assert cli.main(['--out', out, 'bench']) == cli.EXIT_OK
    with open(out) as f:
        lines = f.read().splitlines()
    assert lines[0] == ','.join(cli.BENCH_HEADER)
    assert len(lines) == 13


DESK = os.path.join(os.path.dirname(__file__), os.pardir, 'configs', 'desk_sqg.cfg')


def test_holder_on_desk_grid(run_dir, tmp_path):
    # the desk grid and run length with a cheap zero drift run in place of SQG
    with open(DESK) as f:
        text = f.read()
    text = text.replace('mode = sqg', 'mode = zero').replace('dt = auto', 'dt = 0.25')
    text = text.replace('snapshot_stride = 4', 'snapshot_stride = 1')
    traj = run_dir(text)
    config_path = str(tmp_path / 'desk.cfg')
    with open(config_path, 'w') as f:
        f.write(text)
    report = str(tmp_path / 'holder.json')
    code = cli.main(['--config', config_path, '--out', report, 'holder', '--traj', traj])
    assert code == cli.EXIT_OK
    with open(report) as f:
        flat = json.load(f)
    assert flat['summary.checks'] == 10
    assert all(flat['holder[{}].t'.format(i)] >= 1.5 for i in range(10))
