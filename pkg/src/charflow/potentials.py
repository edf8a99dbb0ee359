"""Potential operators: reconstruction of asymptotic terms from traces.

(Gamma_pk w)(x, y) = (-1)^k/k! * F^-1{phi(x<eta>) w_hat(eta)} x^{-p} log^k x.

The mode-wise cutoff phi(x<eta>) (rather than a plain phi(x) tensor
factor) is what makes the term land in the right weighted space when w
has only finite Sobolev regularity; the difference between the two is one
order flatter, which `flatness_check` probes numerically.

Values at x = 0 are defined as limits: 0 whenever Re p < 0, w(y) for the
pair (p, k) = (0, 0) (returned as the raw samples so that boundary-row
data evaluation involves no FFT round-trip), and an error otherwise.
"""
from __future__ import annotations

import math

import numpy as np

from .cutoffs import phi, phi_prime
from .errors import ShapeMismatchError, SingularAtZeroError
from .grids import YGrid, fourier_coeffs, fourier_values
from .mellin import k_norm

#: exponents with |p| below this are treated as exactly zero at x = 0
_P_ZERO_TOL = 1e-14


def _norm_factor(k: int) -> float:
    return (-1.0) ** k / math.factorial(k)


def _as_modes(w, ygrid: YGrid) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    if w.ndim == 0:
        w = w.reshape(1)
    if w.shape[0] != ygrid.n_points:
        raise ShapeMismatchError("w does not match the y-grid")
    return w


def _singular_factor(p: complex, k: int, x_pos: np.ndarray) -> np.ndarray:
    return x_pos ** (-p) * np.log(x_pos) ** k


def _limit_at_zero(p: complex, k: int, w: np.ndarray, what_is_zero: str):
    if p.real < -_P_ZERO_TOL:
        return np.zeros_like(w)
    if abs(p) <= _P_ZERO_TOL and k == 0:
        return w.copy() if what_is_zero == "value" else np.zeros_like(w)
    raise SingularAtZeroError(
        f"x^(-p) log^k x with p={p}, k={k} has no limit at x = 0")


def potential_op(p: complex, k: int, w, x_nodes, ygrid: YGrid) -> np.ndarray:
    """Gamma_pk applied to y-grid samples w; returns (nx, ny[, N]) values."""
    p = complex(p)
    w = _as_modes(w, ygrid)
    x = np.asarray(x_nodes, dtype=float)
    out = np.zeros((len(x),) + w.shape, dtype=complex)
    pos = x > 0
    if np.any(pos):
        what = fourier_coeffs(w, axis=0)
        br = ygrid.bracket()
        cut = phi(np.multiply.outer(x[pos], br))          # (nxpos, nmode)
        sing = _norm_factor(k) * _singular_factor(p, k, x[pos])
        shape = cut.shape + (1,) * (w.ndim - 1)
        modes = cut.reshape(shape) * what[None, ...]
        out[pos] = fourier_values(modes, axis=1) * sing.reshape((-1,) + (1,) * w.ndim)
    if np.any(~pos):
        out[~pos] = _limit_at_zero(p, k, w, "value")
    return out


def xdx_potential_op(p: complex, k: int, w, x_nodes, ygrid: YGrid) -> np.ndarray:
    """Exact x d/dx of Gamma_pk w on the grid (no finite differences).

    x d/dx hits both the mode cutoff and the singular factor:
      x<eta> phi'(x<eta>) x^{-p} log^k x
      + phi(x<eta>) (-p x^{-p} log^k x + k x^{-p} log^{k-1} x).
    """
    p = complex(p)
    w = _as_modes(w, ygrid)
    x = np.asarray(x_nodes, dtype=float)
    out = np.zeros((len(x),) + w.shape, dtype=complex)
    pos = x > 0
    if np.any(pos):
        what = fourier_coeffs(w, axis=0)
        br = ygrid.bracket()
        arg = np.multiply.outer(x[pos], br)
        cut = phi(arg)
        dcut = arg * phi_prime(arg)
        c = _norm_factor(k)
        sing = c * _singular_factor(p, k, x[pos])
        low = c * k * _singular_factor(p, k - 1, x[pos]) if k > 0 else 0.0
        term = dcut * sing[:, None] + cut * (-p * sing + low)[:, None]
        shape = term.shape + (1,) * (w.ndim - 1)
        modes = term.reshape(shape) * what[None, ...]
        out[pos] = fourier_values(modes, axis=1)
    if np.any(~pos):
        out[~pos] = _limit_at_zero(p, k, w, "derivative")
    return out


def tensor_term(p: complex, k: int, w, x_nodes, ygrid: YGrid) -> np.ndarray:
    """The naive tensor-product term (-1)^k/k! phi(x) x^{-p} log^k x * w(y)."""
    w = _as_modes(w, ygrid)
    x = np.asarray(x_nodes, dtype=float)
    out = np.zeros((len(x),) + w.shape, dtype=complex)
    pos = x > 0
    fac = _norm_factor(k) * phi(x[pos]) * _singular_factor(complex(p), k, x[pos])
    out[pos] = fac.reshape((-1,) + (1,) * w.ndim) * w[None, ...]
    if np.any(~pos):
        out[~pos] = _limit_at_zero(complex(p), k, w, "value")
    return out


def fit_leading_coefficient(p: complex, k: int, field, x_nodes, ygrid: YGrid,
                            window=(1e-4, 0.02)) -> np.ndarray:
    """Least-squares fit of the (p, k) coefficient of a field near x = 0.

    Fits mode-wise against the basis phi(x<eta>) (-1)^k/k! x^{-p} log^k x
    on window nodes; recovers w for fields produced by potential_op.
    """
    x = np.asarray(x_nodes, dtype=float)
    sel = (x >= window[0]) & (x <= window[1])
    xs = x[sel]
    field = np.asarray(field, dtype=complex)
    vec = field.ndim == 3
    fhat = fourier_coeffs(field[sel], axis=1)      # (nsel, nmode[, N])
    br = ygrid.bracket()
    basis = phi(np.multiply.outer(xs, br)) * (
        _norm_factor(k) * _singular_factor(complex(p), k, xs))[:, None]
    if vec:
        num = np.einsum("xm,xmn->mn", np.conj(basis), fhat)
    else:
        num = np.einsum("xm,xm->m", np.conj(basis), fhat)
    den = np.sum(np.abs(basis) ** 2, axis=0)
    den = np.where(den > 0, den, 1.0)
    coef = num / (den[:, None] if vec else den)
    return fourier_values(coef, axis=0)


def flatness_check(p: complex, k: int, w, ygrid: YGrid, s: float,
                   eps_values=(0.1, 0.05), x_min: float = 1e-6,
                   x_max: float = 4.0, n_points: int = 1024,
                   n_refine: int = 3) -> dict:
    """Probe the extra flatness of Gamma_pk w minus its tensor-product term.

    Computes the cone norm of the remainder at orders (s - eps,
    1/2 - Re p + eps) on grids with x_min refined by factors of 4.  A
    bounded (or decreasing) sequence indicates membership in the
    intersection space; the boolean verdicts use a 5% slack.
    """
    p = complex(p)
    results = {}
    for eps in eps_values:
        values = []
        xm = x_min
        for _ in range(n_refine):
            extra = int(np.ceil(np.log(x_min / xm) / np.log(x_max / x_min) * n_points))
            x = np.exp(np.linspace(np.log(xm), np.log(x_max), n_points + max(extra, 0)))
            rem = potential_op(p, k, w, x, ygrid) - tensor_term(p, k, w, x, ygrid)
            values.append(k_norm(rem, x, ygrid, max(s - eps, 0.0), 0.5 - p.real + eps))
            xm /= 4.0
        bounded = all(v <= values[0] * 1.05 + 1e-12 for v in values)
        results[eps] = {"values": values, "bounded": bool(bounded)}
    return results
