"""
Command line entry point:

    sqglab [--config FILE] [--out PATH] [--seed-override N] [--threads N] [-v] COMMAND ...

``run`` writes a trajectory directory at --out. The report commands write a flat
JSON report at --out. Exit codes: 0 pass, 1 check failure, 2 usage or input
error, 3 runtime failure.
"""
import argparse
import asyncio
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time

import numpy as np
import scipy.fft

import sqglab
from sqglab import (
    barriers, config as config_module, diagnostics, extension, galerkin, regularity, runner,
    solver, spectral)
from sqglab.exception import ConfigError, SolverError, SqglabError


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
THREADS_ENV = 'SQGLAB_THREADS'
MANIFEST = 'manifest.json'
DEFAULT_OUT = 'sqglab-out'

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

CHECK_NAMES = ('level_set', 'uk', 'linf_decay', 'cordoba', 'chain', 'local_energy', 'bmo')
LEMMA_NAMES = ('b1', 'b2', 'constants', 'isoperimetric')


class UsageError(SqglabError):
    """Bad command line input"""


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(path, command, files, cfg=None, args=None, extra=None):
    """Everything needed to repeat the command; no timestamps"""
    base = os.path.dirname(path)
    manifest = {
        'command': command,
        'version': sqglab.__version__,
        'config_sha256': cfg.digest if cfg is not None else None,
        'config_path': args.config if args is not None else None,
        'seed_override': args.seed_override if args is not None else None,
        'files': {name: sha256_file(os.path.join(base, name)) for name in sorted(files)},
    }
    if extra:
        manifest.update(extra)
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def write_report(path, report):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(report.to_flat_dict(), f, indent=2)


def report_manifest_path(path):
    stem, _ = os.path.splitext(path)
    return stem + '.' + MANIFEST


def _load_config(args, required=False):
    if args.config is None:
        if required:
            raise UsageError('--config is required for this command')
        return None
    cfg = config_module.load_config(args.config)
    if args.seed_override is not None:
        cfg.override_seeds(args.seed_override)
    return cfg


def _section(cfg, name):
    return cfg.section(name) if cfg is not None else {}


def _out(args, cfg, default):
    if args.out:
        return args.out
    directory = _section(cfg, 'output').get('directory', DEFAULT_OUT)
    return os.path.join(directory, default) if default else directory


def _load_trajectory(args, cfg):
    path = args.traj or _out(args, cfg, None)
    if not os.path.isdir(path):
        raise UsageError('Trajectory directory {} not found'.format(path))
    return solver.Trajectory.load(path), path


def _run_jobs(args, jobs, provenance):
    return asyncio.run(runner.collect_report(jobs, threads=args.threads, provenance=provenance))


def _finish_report(args, cfg, report, path, command):
    write_report(path, report)
    write_manifest(report_manifest_path(path), command, [os.path.basename(path)], cfg, args)
    for name in report.failed:
        log_warning("Check '{}' failed".format(name))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# Commands

def cmd_run(args):
    cfg = _load_config(args, required=True)
    solver_config = cfg.solver_config()
    out = _out(args, cfg, None)
    traj = solver.run(solver_config)
    files = traj.save(out)
    write_manifest(os.path.join(out, MANIFEST), 'run', files, cfg, args,
                   extra={'state': traj.state.name.lower(), 'message': traj.message})
    log_info('Wrote {} files to {}'.format(len(files), out))
    if traj.failed:
        log_error('Run failed: {}'.format(traj.message))
        return EXIT_RUNTIME
    return EXIT_OK


def _split(value):
    return [item.strip() for item in value.split(',') if item.strip()]


def cmd_diagnose(args):
    cfg = _load_config(args)
    traj, path = _load_trajectory(args, cfg)
    options = dict(_section(cfg, 'diagnostics'))
    reference = args.reference or options.pop('reference', None)
    names = _split(args.checks) if args.checks else list(options.get('checks', ('all',)))
    unknown = [n for n in names if n != 'all' and n not in CHECK_NAMES]
    if unknown:
        raise UsageError('Unknown checks {}; choose from {}'.format(unknown, ', '.join(CHECK_NAMES)))
    provenance = {}
    if reference is not None:
        if not os.path.isdir(reference):
            raise UsageError('Reference trajectory {} not found'.format(reference))
        options['reference'] = solver.Trajectory.load(reference)
        provenance['reference'] = reference
    jobs = diagnostics.build_jobs(traj, names, options)
    provenance.update(trajectory=path, snapshots=len(traj), state=traj.state.name.lower())
    report = _run_jobs(args, jobs, provenance)
    return _finish_report(args, cfg, report, _out(args, cfg, 'diagnose.json'), 'diagnose')


def _b2_results(settings):
    b = barriers.BarrierB2(settings.get('p_max', barriers.B2_P_MAX))
    x, z, oracle = barriers.b2_laplace_oracle(boundary_value=b.boundary_value)
    h = x[1] - x[0]
    worst = 0.0
    for xv in (0.5, 1.0, 2.0):
        for zv in (0.25, 0.5, 0.75):
            ix = int(round(xv / h))
            iz = int(round(zv / h))
            worst = max(worst, abs(float(b.eval(xv, zv)) - oracle[ix, iz]))
    tolerance = 1e-3
    yield diagnostics.CheckResult(
        'b2_series', diagnostics.status_of(worst <= tolerance), worst, tolerance,
        'separated barrier against a five point Laplace solve', details={'h': h, 'p_max': b.p_max})
    scan = barriers.barrier_b2_decay_check(b, np.linspace(0.1, 5.0, 50))
    at3 = float(np.max(np.abs(b.eval(3.0, np.linspace(0, 1, 257))))) * math.exp(3.0 * math.pi)
    gap = abs(at3 - scan.limit) / scan.limit
    yield diagnostics.CheckResult(
        'b2_decay', diagnostics.status_of(math.isfinite(scan.c_bar) and gap <= 0.01), gap, 0.01,
        'exponential decay of the barrier', details={'c_bar': scan.c_bar, 'limit': scan.limit})


def _b1_solutions(settings):
    resolution = settings.get('b1_resolution', 128)
    return barriers.solve_barrier_b1(resolution // 2), barriers.solve_barrier_b1(resolution)


def _b1_results(settings):
    coarse, fine = _b1_solutions(settings)
    gap = abs(coarse.lam - fine.lam) / fine.lam
    bounded = bool(fine.values.min() >= -1e-12 and fine.values.max() <= 2.0 + 1e-12)
    yield diagnostics.CheckResult(
        'b1', diagnostics.status_of(fine.lam > 0 and gap <= 0.05 and bounded), gap, 0.05,
        'harmonic barrier in the box', details={'lambda': fine.lam, 'lambda_coarse': coarse.lam})


def _constants_results(settings):
    _, fine = _b1_solutions(settings)
    ledger = barriers.constants_ledger_build(
        fine.lam, 2, settings.get('energy_constant', 1.0))
    worst = max(ledger.margins.values())
    yield diagnostics.CheckResult(
        'constants', diagnostics.status_of(worst <= 1e-12), worst, 1e-12,
        'constants lemma inequalities',
        details=dict(ledger.margins, delta=ledger.delta, M=ledger.M, c0=ledger.c0,
                     lam=ledger.lam, p_norm=ledger.p_norm, c_bar=ledger.c_bar))


def _isoperimetric_results(settings):
    if 'corpus_seed' not in settings or 'holdout_seed' not in settings:
        raise UsageError('isoperimetric corpus needs corpus_seed and holdout_seed in [lemmas]')
    n = settings.get('corpus_points', 64)
    count = settings.get('corpus_count', 200)
    grid = barriers.box_grid(n)
    x = barriers.box_coordinates(grid)
    ramp = barriers.isoperimetric_check(
        spectral.PhysicalField(grid, np.clip(x[0] / 0.5, 0.0, 1.0)))
    yield diagnostics.CheckResult(
        'isoperimetric_ramp', diagnostics.status_of(abs(ramp.ratio - 1.0) <= 0.05),
        ramp.ratio, 1.0, 'isoperimetric ramp', details=ramp._asdict())
    coarse = barriers.isoperimetric_constant(grid, count, settings['corpus_seed'])
    fine_grid = barriers.box_grid(2 * n)
    fine = barriers.isoperimetric_constant(fine_grid, count, settings['corpus_seed'])
    drift = abs(fine - coarse) / fine
    fraction = barriers.isoperimetric_holdout_fraction(
        fine, fine_grid, settings.get('holdout_count', 1000), settings['holdout_seed'])
    yield diagnostics.CheckResult(
        'isoperimetric', diagnostics.status_of(drift <= 0.1 and fraction >= 0.99), drift, 0.1,
        'isoperimetric constant',
        details={'c_hat': fine, 'c_hat_coarse': coarse, 'holdout_fraction': fraction})


LEMMAS = {
    'b1': _b1_results,
    'b2': _b2_results,
    'constants': _constants_results,
    'isoperimetric': _isoperimetric_results,
}


def _lemma_job(name, settings):
    def job():
        return list(LEMMAS[name](settings))
    return job


def cmd_lemmas(args):
    cfg = _load_config(args)
    settings = _section(cfg, 'lemmas')
    if args.seed_override is not None:
        settings.update(corpus_seed=args.seed_override, holdout_seed=args.seed_override + 1)
    names = _split(args.check) if args.check else list(settings.get('checks', ('all',)))
    if 'all' in names:
        names = list(LEMMA_NAMES)
    unknown = [n for n in names if n not in LEMMAS]
    if unknown:
        raise UsageError('Unknown lemma checks {}; choose from {}'.format(unknown, ', '.join(LEMMA_NAMES)))
    if 'isoperimetric' in names and ('corpus_seed' not in settings or 'holdout_seed' not in settings):
        raise UsageError('isoperimetric corpus needs explicit seeds ([lemmas] or --seed-override)')
    jobs = [(name, _lemma_job(name, settings)) for name in names]
    report = _run_jobs(args, jobs, {'lemmas': ','.join(names)})
    return _finish_report(args, cfg, report, _out(args, cfg, 'lemmas.json'), 'lemmas')


def cmd_galerkin(args):
    cfg = _load_config(args)
    settings = _section(cfg, 'galerkin')
    k_max = settings.get('k_max', 32)
    lengths = settings.get('lengths', (math.pi, math.pi))
    t_end = settings.get('t_end', 1.0)
    dt = settings.get('dt', 1e-3)
    epsilon = settings.get('epsilon', 0.0)
    dissipation = settings.get('dissipation', True)
    basis = galerkin.build_basis(k_max, lengths)
    if basis.ndim >= 2:
        velocity = galerkin.cellular_drift(basis, settings.get('drift_amplitude', 1.0))
    else:
        velocity = galerkin.zero_drift(basis)
    a = galerkin.coupling_matrix(basis, velocity)
    f0 = basis.project(galerkin.analytic_bump(basis))
    traj = galerkin.galerkin_run(basis, f0, a, t_end, dt, epsilon, dissipation)
    report = diagnostics.DiagnosticsReport({'k_max': k_max, 'lengths': list(lengths), 'dt': dt})
    report.add(diagnostics.CheckResult(
        'galerkin_antisymmetry', diagnostics.status_of(a.antisymmetric), a.defect,
        galerkin.ANTISYMMETRY_TOL, 'antisymmetric transport coupling'))
    energy0 = float(np.dot(f0, f0))
    residual = galerkin.galerkin_energy_identity(traj)
    tolerance = 1e-8 * max(energy0, 1e-300)
    report.add(diagnostics.CheckResult(
        'galerkin_energy', diagnostics.status_of(abs(residual) <= tolerance), residual, tolerance,
        'Galerkin energy identity'))
    values = basis.reconstruct(f0)
    levels = list(np.linspace(0.0, float(values.max()), 5)[:-1]) + [-np.inf]
    for level in galerkin.galerkin_truncation_check(traj, basis, levels):
        status = {'pass': diagnostics.CheckStatus.PASS, 'fail': diagnostics.CheckStatus.FAIL,
                  'inconclusive': diagnostics.CheckStatus.INCONCLUSIVE}[level.status]
        report.add(diagnostics.CheckResult(
            'galerkin_level[{}]'.format(diagnostics.level_name(level.level)), status,
            level.residual, level.tolerance, 'Galerkin level-set inequality',
            details={'projection_error': level.projection_error}))
    return _finish_report(args, cfg, report, _out(args, cfg, 'galerkin.json'), 'galerkin')


def _read_points(spec, traj, t_min=None):
    if spec.startswith('random:'):
        try:
            _, count, seed = spec.split(':')
            count, seed = int(count), int(seed)
        except ValueError as e:
            raise UsageError("Points must look like 'random:n:seed', got '{}'".format(spec)) from e
        return regularity.random_points(traj, count, seed, t_min)
    if not os.path.isfile(spec):
        raise UsageError('Points file {} not found'.format(spec))
    points = []
    with open(spec) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split('#', 1)[0].split()
            if not line:
                continue
            try:
                numbers = [float(v) for v in line]
            except ValueError as e:
                raise UsageError('{}:{}: {}'.format(spec, lineno, e)) from e
            if len(numbers) != traj.grid.ndim + 1:
                raise UsageError('{}:{}: expected t and {} coordinates'.format(spec, lineno, traj.grid.ndim))
            points.append((numbers[0], tuple(numbers[1:])))
    return points


def cmd_holder(args):
    cfg = _load_config(args)
    settings = _section(cfg, 'holder')
    traj, path = _load_trajectory(args, cfg)
    spec = args.points or settings.get('points')
    if spec is None:
        raise UsageError('holder needs --points or [holder] points')
    points = _read_points(spec, traj, settings.get('t_min'))
    frame = None
    if any(v is not None for v in traj.velocities):
        frame = regularity.moving_frame(traj)

    def fit_job(i, point):
        def job():
            fit = regularity.holder_exponent_fit(traj, point, frame=frame)
            status = diagnostics.CheckStatus.INCONCLUSIVE if fit.flag == 'clipped' \
                else diagnostics.CheckStatus.PASS
            return diagnostics.CheckResult(
                'holder[{}]'.format(i), status, fit.alpha, math.inf, 'Holder exponent from oscillation decay',
                details={'t': point[0], 'x': list(point[1]), 'r_squared': fit.r_squared,
                         'flag': fit.flag, 'oscillations': list(fit.oscillations)})
        return job

    jobs = [('holder[{}]'.format(i), fit_job(i, p)) for i, p in enumerate(points)]
    report = _run_jobs(args, jobs, {'trajectory': path, 'points': spec})
    return _finish_report(args, cfg, report, _out(args, cfg, 'holder.json'), 'holder')


BENCH_HEADER = ('kind', 'dims', 'points', 'repeats', 'seconds', 'throughput')


def _bench_row(kind, grid, repeats, seconds):
    return (kind, 'x'.join(str(n) for n in grid.dims), grid.npoints, repeats, seconds,
            grid.npoints * repeats / seconds if seconds > 0 else math.inf)


def cmd_bench(args):
    rows = []
    for n in (32, 64, 128):
        grid = spectral.Grid((n, n))
        theta = spectral.random_band_field(grid, 2, 6, 1.0, seed=0)
        integrator = solver.Integrator(grid, 1.0, 1.0, solver.DriftSpec(solver.DriftMode.SQG))
        state = integrator.initial_state(theta)
        dt = integrator.auto_dt(state, 1.0)
        repeats = 10
        start = time.perf_counter()
        for _ in range(repeats):
            state = integrator.step(state, dt)
        rows.append(_bench_row('step', grid, repeats, time.perf_counter() - start))
        start = time.perf_counter()
        extension.harmonic_extension(theta)
        rows.append(_bench_row('harmonic_extension', grid, 1, time.perf_counter() - start))
        start = time.perf_counter()
        diagnostics.truncation_energies(theta, 0.0)
        rows.append(_bench_row('truncation_energy', grid, 1, time.perf_counter() - start))
        start = time.perf_counter()
        diagnostics.cordoba_pointwise_check(theta, diagnostics.square())
        rows.append(_bench_row('cordoba', grid, 1, time.perf_counter() - start))
    out = args.out or 'bench.csv'
    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(out, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(BENCH_HEADER)
        writer.writerows(rows)
    for row in rows:
        log_info('{:<20} {:>8} {:.3e} s'.format(row[0], row[1], row[4]))
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'diagnose': cmd_diagnose,
    'lemmas': cmd_lemmas,
    'galerkin': cmd_galerkin,
    'holder': cmd_holder,
    'bench': cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog='sqglab', description=__doc__.strip().splitlines()[0])
    parser.add_argument('--config', help='experiment config file')
    parser.add_argument('--out', help='output directory (run) or report file')
    parser.add_argument('--seed-override', type=int, help='replace every seed in the config')
    parser.add_argument('--threads', type=int, help='FFT workers and check threads (env {})'.format(THREADS_ENV))
    parser.add_argument('-v', '--verbose', action='count', default=0)
    parser.add_argument('--version', action='version', version=sqglab.__version__)
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('run', help='integrate and write a trajectory')
    diagnose = sub.add_parser('diagnose', help='level-set diagnostics on a trajectory')
    diagnose.add_argument('--traj', help='trajectory directory')
    diagnose.add_argument('--checks', help="'all' or a comma list of {}".format(', '.join(CHECK_NAMES)))
    diagnose.add_argument('--reference', help='refined run of the same experiment for the decay comparison')
    lemmas = sub.add_parser('lemmas', help='barriers, constants and isoperimetric checks')
    lemmas.add_argument('--check', help="'all' or a comma list of {}".format(', '.join(LEMMA_NAMES)))
    sub.add_parser('galerkin', help='Galerkin scheme experiment')
    holder = sub.add_parser('holder', help='Holder exponent fits')
    holder.add_argument('--traj', help='trajectory directory')
    holder.add_argument('--points', help="'random:n:seed' or a file of 't x1 .. xN' lines")
    sub.add_parser('bench', help='throughput table as CSV')
    return parser


def _threads(args):
    if args.threads is not None:
        return args.threads
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return 1
    try:
        return int(value)
    except ValueError:
        raise UsageError('{} must be an integer, got {!r}'.format(THREADS_ENV, value))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format=FORMAT)
    try:
        args.threads = _threads(args)
        if args.threads < 1:
            raise UsageError('--threads must be >= 1, got {}'.format(args.threads))
        with scipy.fft.set_workers(args.threads):
            return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print('sqglab: error: {}'.format(e), file=sys.stderr)
        return EXIT_USAGE
    except SqglabError as e:
        # bad inputs on disk (snapshots, trajectories) are usage errors
        code = EXIT_RUNTIME if isinstance(e, SolverError) and args.command == 'run' else EXIT_USAGE
        print('sqglab: error: {}'.format(e), file=sys.stderr)
        return code


if __name__ == '__main__':
    sys.exit(main())
