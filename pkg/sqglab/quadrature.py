"""Time quadratures shared by the solver and the Galerkin scheme"""
import numpy as np


SERIES_CUTOFF = 1e-2


def hermite_trapezoid_steps(times, values, derivatives):
    """
    Per-interval integrals h/2 (f_a + f_b) + h^2/12 (f'_a - f'_b). Fourth order
    when the derivative samples are exact.
    """
    t = np.asarray(times, dtype=np.float64)
    f = np.asarray(values, dtype=np.float64)
    df = np.asarray(derivatives, dtype=np.float64)
    h = np.diff(t)
    return 0.5 * h * (f[:-1] + f[1:]) + h * h / 12.0 * (df[:-1] - df[1:])


def hermite_trapezoid(times, values, derivatives):
    if len(times) < 2:
        return 0.0
    return float(np.sum(hermite_trapezoid_steps(times, values, derivatives)))


def exponential_weights(rate, h):
    """
    Weights (w_a, w_b) with
        integral_0^h exp(-rate (h - s)) G(s) ds = w_a G(0) + w_b G(h)
    exactly for G linear. ``rate`` may be an array; a series is used where
    rate * h is small.
    """
    z = np.asarray(rate, dtype=np.float64) * h
    small = np.abs(z) < SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    em1 = np.expm1(-safe)
    i0 = np.where(small, 1.0 - z / 2.0 + z ** 2 / 6.0 - z ** 3 / 24.0 + z ** 4 / 120.0,
                  -em1 / safe)
    i1 = np.where(small, 0.5 - z / 6.0 + z ** 2 / 24.0 - z ** 3 / 120.0 + z ** 4 / 720.0,
                  (safe + em1) / safe ** 2)
    return h * (i0 - i1), h * i1
