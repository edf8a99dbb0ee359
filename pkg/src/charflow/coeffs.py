"""Exact coefficient algebra for operator calculus.

Coefficients of the cone operators live in the closed expression set
{polynomials in t} x {trigonometric polynomials in y} with complex matrix
(or vector) values.  Elements are stored in the Fourier basis

    C(t, y) = sum_{(j, m)} c_{jm} t^j e^{i m y},

i.e. as a dict mapping (t_power, harmonic) -> ndarray.  Sums, products,
y-derivatives and pointwise Hermitian adjoints stay inside the set, which
is what makes the symbol identities machine-precision testable.

For d = 0 only the harmonic m = 0 occurs.
"""
from __future__ import annotations

import numpy as np


class CoeffExpr:
    """t-polynomial / y-trigonometric-polynomial with ndarray values.

    All values in `terms` must share one shape, e.g. (N, N) for matrix
    coefficients or (N,) for data profiles.
    """

    __slots__ = ("terms", "shape")

    def __init__(self, terms: dict, shape: tuple):
        self.terms = {}
        self.shape = tuple(shape)
        for key, val in terms.items():
            arr = np.asarray(val, dtype=complex)
            if arr.shape != self.shape:
                raise ValueError(f"coefficient shape {arr.shape} != {self.shape}")
            if np.any(arr != 0):
                self.terms[(int(key[0]), int(key[1]))] = arr

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, shape) -> "CoeffExpr":
        return cls({}, shape)

    @classmethod
    def const(cls, value) -> "CoeffExpr":
        value = np.asarray(value, dtype=complex)
        return cls({(0, 0): value}, value.shape)

    @classmethod
    def harmonic(cls, m: int, value) -> "CoeffExpr":
        """value * e^{i m y}"""
        value = np.asarray(value, dtype=complex)
        return cls({(0, m): value}, value.shape)

    @classmethod
    def cos(cls, m: int, value) -> "CoeffExpr":
        value = np.asarray(value, dtype=complex)
        if m == 0:
            return cls({(0, 0): value}, value.shape)
        return cls({(0, m): value / 2, (0, -m): value / 2}, value.shape)

    @classmethod
    def sin(cls, m: int, value) -> "CoeffExpr":
        value = np.asarray(value, dtype=complex)
        if m == 0:
            return cls({}, value.shape)
        return cls({(0, m): value / (2j), (0, -m): -value / (2j)}, value.shape)

    @classmethod
    def tpoly(cls, coeffs) -> "CoeffExpr":
        """sum_j coeffs[j] * t^j with ndarray entries."""
        coeffs = [np.asarray(c, dtype=complex) for c in coeffs]
        shape = coeffs[0].shape
        return cls({(j, 0): c for j, c in enumerate(coeffs)}, shape)

    # -- algebra ------------------------------------------------------------

    def __add__(self, other: "CoeffExpr") -> "CoeffExpr":
        terms = {k: v.copy() for k, v in self.terms.items()}
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return CoeffExpr(terms, self.shape)

    def __sub__(self, other: "CoeffExpr") -> "CoeffExpr":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "CoeffExpr":
        if c == 0:
            return CoeffExpr.zero(self.shape)
        return CoeffExpr({k: c * v for k, v in self.terms.items()}, self.shape)

    def matmul(self, other: "CoeffExpr") -> "CoeffExpr":
        """Pointwise product (matrix product of the values)."""
        out_shape = (np.zeros(self.shape) @ np.zeros(other.shape)).shape
        terms: dict = {}
        for (j1, m1), a in self.terms.items():
            for (j2, m2), b in other.terms.items():
                key = (j1 + j2, m1 + m2)
                prod = a @ b
                terms[key] = terms[key] + prod if key in terms else prod
        return CoeffExpr(terms, out_shape)

    def dy(self) -> "CoeffExpr":
        """Derivative in y (harmonic m picks up the factor i*m)."""
        return CoeffExpr(
            {(j, m): 1j * m * v for (j, m), v in self.terms.items() if m != 0},
            self.shape,
        )

    def conj_transpose(self) -> "CoeffExpr":
        """Pointwise Hermitian adjoint as a function of (t, y) (t, y real)."""
        terms = {}
        for (j, m), v in self.terms.items():
            terms[(j, -m)] = np.conj(v).swapaxes(-1, -2) if v.ndim == 2 else np.conj(v)
        return CoeffExpr(terms, self.shape)

    # -- queries ------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        if not self.terms:
            return 0.0
        return max(float(np.max(np.abs(v))) for v in self.terms.values())

    def distance(self, other: "CoeffExpr") -> float:
        return (self - other).max_abs()

    def is_hermitian(self, tol: float = 0.0) -> bool:
        return self.distance(self.conj_transpose()) <= tol

    def is_real_valued(self, tol: float = 0.0) -> bool:
        terms = {}
        for (j, m), v in self.terms.items():
            terms[(j, -m)] = np.conj(v)
        return self.distance(CoeffExpr(terms, self.shape)) <= tol

    def max_harmonic(self) -> int:
        return max((abs(m) for (_, m) in self.terms), default=0)

    # -- evaluation -----------------------------------------------------------

    def eval(self, t: float, y) -> np.ndarray:
        """Evaluate at time t on y (scalar or 1-d array).

        Returns an array of shape y.shape + self.shape.  For d = 0 pass
        y = 0.0 (all stored harmonics are then 0).
        """
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape + self.shape, dtype=complex)
        for (j, m), v in self.terms.items():
            factor = (t ** j) * np.exp(1j * m * y)
            out += factor.reshape(y.shape + (1,) * len(self.shape)) * v
        return out


def expr_from_terms(shape, term_list) -> CoeffExpr:
    """Build a CoeffExpr from config-style term records.

    Each record: {"tpow": int, "m": int, "kind": "cos"|"sin"|"exp", "value": array}.
    """
    acc = CoeffExpr.zero(shape)
    for rec in term_list:
        tpow = int(rec.get("tpow", 0))
        m = int(rec.get("m", 0))
        kind = rec.get("kind", "cos")
        value = np.asarray(rec["value"], dtype=complex)
        if kind == "cos":
            base = CoeffExpr.cos(m, value)
        elif kind == "sin":
            base = CoeffExpr.sin(m, value)
        elif kind == "exp":
            base = CoeffExpr.harmonic(m, value)
        else:
            raise ValueError(f"unknown coefficient kind {kind!r}")
        if tpow:
            base = CoeffExpr({(j + tpow, mm): v for (j, mm), v in base.terms.items()}, base.shape)
        acc = acc + base
    return acc
