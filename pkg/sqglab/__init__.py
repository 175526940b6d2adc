from sqglab.spectral import (
    Grid, PhysicalField, SpectralField, forward, inverse, fractional_laplacian, riesz_transform)
from sqglab.extension import ExtensionField, harmonic_extension, normal_derivative_at_boundary
from sqglab.messaging import deserialize_snapshot, read_snapshot, serialize_field, write_snapshot
from sqglab.parser import ConfigParser
from sqglab.solver import SolverConfig, Trajectory, run, velocity_from_theta
from sqglab.diagnostics import CheckResult, CheckStatus, DiagnosticsReport


__version__ = '0.1.0'
