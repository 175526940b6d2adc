class SqglabError(Exception):
    """Base sqglab error"""


# Snapshot codec
class SnapshotError(SqglabError):
    """Malformed snapshot file"""


class SnapshotVersionError(SnapshotError):
    """Unsupported snapshot format version"""


class BufferError(SnapshotError):
    """Error on buffer operation"""


# Fields and operators
class GridError(SqglabError):
    """Invalid grid or field shape"""


class NonFiniteError(SqglabError):
    """Field holds NaN or infinite values"""


class OperatorError(SqglabError):
    """Operator called outside its domain"""


# Time integration
class SolverError(SqglabError):
    """Invalid solver configuration or state"""


class CFLError(SolverError):
    """Time step violates the CFL condition"""

    def __init__(self, umax, dt, limit):
        self.umax = umax
        self.dt = dt
        self.limit = limit
        super().__init__(
            'CFL violated: max|u|={:.6g}, dt={:.6g} exceeds limit {:.6g}'.format(umax, dt, limit))


class BlowUpError(SolverError):
    """Non-finite values appeared during a run"""


class DriftError(SolverError):
    """Drift is not divergence free"""

    def __init__(self, residual, tol):
        self.residual = residual
        self.tol = tol
        super().__init__(
            'Drift divergence residual {:.3e} exceeds {:.1e}'.format(residual, tol))


class GalerkinError(SqglabError):
    """Invalid Galerkin basis or quadrature"""


class StabilityError(GalerkinError):
    """Galerkin integration is unstable"""


# Diagnostics
class CheckError(SqglabError):
    """Invalid input to a diagnostic check"""


class ConvexityError(CheckError):
    """Scalar function is not convex"""


class SupportError(CheckError):
    """Cutoff support escapes the sampled region"""


class CylinderRangeError(CheckError):
    """Cylinder lies outside the trajectory"""


class RenormalizationError(CheckError):
    """Field exceeds the renormalization bound"""


class BarrierError(SqglabError):
    """Barrier construction failed"""


class ConfigError(SqglabError):
    """Invalid experiment configuration"""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = 'line {}: {}'.format(lineno, message)
        super().__init__(message)
