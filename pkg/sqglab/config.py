"""Experiment configs: schema, value conversion and construction of solver configs"""
import dataclasses
import hashlib
import logging
import math

from sqglab import parser, solver, spectral
from sqglab.exception import ConfigError, SqglabError


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


VERSION = 1
TOP = ''


def _bool(value):
    lowered = value.lower()
    if lowered in ('true', 'yes', 'on', '1'):
        return True
    if lowered in ('false', 'no', 'off', '0'):
        return False
    raise ValueError("expected a boolean, got '{}'".format(value))


def _list(convert):
    def parse(value):
        return tuple(convert(item.strip()) for item in value.split(',') if item.strip())
    return parse


def _dt(value):
    if value == solver.AUTO:
        return value
    return float(value)


def _finite(value):
    number = float(value)
    if math.isnan(number):
        raise ValueError('NaN is not allowed')
    return number


def _name(value):
    if not value:
        raise ValueError('empty value')
    return value


# section -> key -> converter
SCHEMA = {
    TOP: {'version': int},
    'grid': {'dims': _list(int), 'lengths': _list(_finite)},
    'solver': {
        'beta': _finite, 'kappa': _finite, 'dt': _dt, 't_end': _finite, 'dealias': _bool,
        'snapshot_stride': int, 'cfl': _finite},
    'initial': {
        'name': _name, 'seed': int, 'k_min': _finite, 'k_max': _finite, 'amplitude': _finite,
        'k': _list(int), 'separation': _finite, 'width': _finite},
    'drift': {
        'mode': _name, 'name': _name, 'amplitude': _finite, 'k': int,
        'velocity': _list(_finite), 'paths': _list(str)},
    'diagnostics': {
        'checks': _list(str), 'levels': int, 't0': _finite, 'K': int, 'M': _finite,
        't_min': _finite, 'rtol': _finite, 'width': _finite, 'reference': _name},
    'lemmas': {
        'checks': _list(str), 'p_max': int, 'b1_resolution': int, 'energy_constant': _finite,
        'corpus_count': int, 'holdout_count': int, 'corpus_seed': int, 'holdout_seed': int,
        'corpus_points': int},
    'galerkin': {
        'k_max': int, 'lengths': _list(_finite), 't_end': _finite, 'dt': _finite,
        'epsilon': _finite, 'drift_amplitude': _finite, 'dissipation': _bool},
    'holder': {'points': _name, 't_min': _finite},
    'output': {'directory': _name},
}

REQUIRED = {
    TOP: ('version',),
    'grid': ('dims',),
    'solver': ('t_end',),
}

INITIAL_PARAMS = ('k_min', 'k_max', 'amplitude', 'k', 'separation', 'width')
DRIFT_PARAMS = {'cellular': ('amplitude', 'k'), 'shear': ('amplitude', 'k'),
                'uniform': ('velocity',), 'file': ('paths',)}


class ConfigHandler:
    """Collects parser callbacks into sections, converting and validating as it goes"""

    def __init__(self):
        self.sections = {TOP: {}}
        self.lines = {}
        self._section = TOP

    def on_section(self, name, lineno):
        if name not in SCHEMA or name == TOP:
            raise ConfigError("Unknown section '[{}]'".format(name), lineno)
        if name in self.sections:
            raise ConfigError("Duplicate section '[{}]'".format(name), lineno)
        self._section = name
        self.sections[name] = {}

    def on_item(self, key, value, lineno):
        schema = SCHEMA[self._section]
        where = self._section or 'top level'
        if key not in schema:
            raise ConfigError("Unknown key '{}' in {}".format(key, where), lineno)
        if key in self.sections[self._section]:
            raise ConfigError("Duplicate key '{}' in {}".format(key, where), lineno)
        try:
            converted = schema[key](value)
        except ValueError as e:
            raise ConfigError("Bad value for '{}': {}".format(key, e), lineno) from e
        self.sections[self._section][key] = converted
        self.lines[(self._section, key)] = lineno

    def on_complete(self):
        for section, keys in REQUIRED.items():
            present = self.sections.get(section)
            where = '[{}]'.format(section) if section else 'top level'
            if present is None:
                raise ConfigError('Missing section {}'.format(where))
            for key in keys:
                if key not in present:
                    raise ConfigError("Missing required key '{}' in {}".format(key, where))
        version = self.sections[TOP]['version']
        if version != VERSION:
            raise ConfigError('Unsupported config version {}'.format(version),
                              self.lines[(TOP, 'version')])


@dataclasses.dataclass
class ExperimentConfig:
    sections: dict
    lines: dict
    digest: str

    def section(self, name):
        return dict(self.sections.get(name, {}))

    def lineno(self, section, key):
        return self.lines.get((section, key))

    def grid(self):
        grid = self.section('grid')
        try:
            return spectral.Grid(grid['dims'], grid.get('lengths'))
        except SqglabError as e:
            raise ConfigError(str(e), self.lineno('grid', 'dims')) from e

    def initial_condition(self):
        initial = self.section('initial')
        name = initial.get('name', 'random_band')
        if name not in solver.INITIAL_CONDITIONS:
            raise ConfigError("Unknown initial condition '{}'".format(name), self.lineno('initial', 'name'))
        if name == 'random_band' and 'seed' not in initial:
            raise ConfigError('random_band needs an explicit seed in [initial]')
        params = {key: initial[key] for key in INITIAL_PARAMS if key in initial}
        return solver.InitialCondition(name, params, initial.get('seed'))

    def drift(self):
        drift = self.section('drift')
        mode_name = drift.get('mode', 'sqg')
        try:
            mode = solver.DriftMode[mode_name.upper()]
        except KeyError:
            raise ConfigError("Unknown drift mode '{}'".format(mode_name), self.lineno('drift', 'mode'))
        if mode != solver.DriftMode.PRESCRIBED:
            return solver.DriftSpec(mode)
        name = drift.get('name')
        if name not in DRIFT_PARAMS:
            raise ConfigError("Prescribed drift needs a name in {}".format(sorted(DRIFT_PARAMS)),
                              self.lineno('drift', 'name'))
        params = {key: drift[key] for key in DRIFT_PARAMS[name] if key in drift}
        return solver.DriftSpec(mode, name, params)

    def solver_config(self):
        settings = self.section('solver')
        try:
            return solver.SolverConfig(
                grid=self.grid(),
                beta=settings.get('beta', 1.0),
                kappa=settings.get('kappa', 1.0),
                dt=settings.get('dt', solver.AUTO),
                t_end=settings['t_end'],
                initial_condition=self.initial_condition(),
                drift=self.drift(),
                dealias=settings.get('dealias', True),
                snapshot_stride=settings.get('snapshot_stride', 1),
                cfl=settings.get('cfl', solver.CFL))
        except ConfigError:
            raise
        except SqglabError as e:
            raise ConfigError(str(e)) from e

    def override_seeds(self, seed):
        """Replace every seed in the config"""
        initial = self.sections.setdefault('initial', {})
        if 'seed' in initial or initial.get('name', 'random_band') == 'random_band':
            initial['seed'] = seed
        lemmas = self.sections.get('lemmas')
        if lemmas is not None:
            lemmas['corpus_seed'] = seed
            lemmas['holdout_seed'] = seed + 1
        holder = self.sections.get('holder')
        if holder is not None and holder.get('points', '').startswith('random:'):
            _, count, _ = holder['points'].split(':')
            holder['points'] = 'random:{}:{}'.format(count, seed)
        self.digest = hashlib.sha256('{}|seed={}'.format(self.digest, seed).encode()).hexdigest()


def parse_config(text):
    handler = ConfigHandler()
    parser.ConfigParser(handler).feed_data(text)
    digest = hashlib.sha256(text.encode('utf-8') if isinstance(text, str) else bytes(text)).hexdigest()
    config = ExperimentConfig(handler.sections, handler.lines, digest)
    lemmas = config.sections.get('lemmas')
    if lemmas is not None:
        for key in ('corpus_seed', 'holdout_seed'):
            if key not in lemmas:
                raise ConfigError("Missing required key '{}' in [lemmas]".format(key))
    log_debug('Parsed config with sections {}'.format(sorted(k for k in config.sections if k)))
    return config


def load_config(path):
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError('Cannot read config {}: {}'.format(path, e)) from e
    return parse_config(text)
