"""Smooth cutoff functions on the half-line.

phi(x) = 1 for x <= 1/2 and 0 for x >= 1, with the smooth bump blend
g(2-2x)/(g(2-2x)+g(2x-1)), g(t) = exp(-1/t) for t > 0.  The companions
phi0(x) = phi(x/2) and phi1(x) = phi(2x) satisfy phi*phi0 = phi and
phi*phi1 = phi1 identically (not just approximately), because phi0 = 1
wherever phi != 0 and phi = 1 wherever phi1 != 0.

psi grades the compressed covariable: psi(x) = x for x <= 1/2, 1 for
x >= 1, blended monotonically in between as psi = x*phi + (1 - phi).
"""
from __future__ import annotations

import numpy as np


def _g(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def _blend(x):
    """The transition profile on (1/2, 1); equals phi there."""
    gu = _g(2.0 - 2.0 * x)
    gv = _g(2.0 * x - 1.0)
    return gu / (gu + gv)


def phi(x):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.ones_like(x)
    out[x >= 1.0] = 0.0
    mid = (x > 0.5) & (x < 1.0)
    if np.any(mid):
        out[mid] = _blend(x[mid])
    return out[0] if scalar else out


def phi_prime(x):
    """Analytic derivative of phi (zero outside (1/2, 1))."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.zeros_like(x)
    mid = (x > 0.5) & (x < 1.0)
    if np.any(mid):
        u = 2.0 - 2.0 * x[mid]
        v = 2.0 * x[mid] - 1.0
        gu, gv = _g(u), _g(v)
        # g'(t) = g(t)/t^2
        gpu = gu / u ** 2
        gpv = gv / v ** 2
        out[mid] = -2.0 * (gpu * gv + gu * gpv) / (gu + gv) ** 2
    return out[0] if scalar else out


def phi0(x):
    return phi(np.asarray(x, dtype=float) / 2.0)


def phi1(x):
    return phi(2.0 * np.asarray(x, dtype=float))


def psi(x):
    x = np.asarray(x, dtype=float)
    p = phi(x)
    return x * p + (1.0 - p)


def psi_prime(x):
    x = np.asarray(x, dtype=float)
    return phi(x) + (x - 1.0) * phi_prime(x)
