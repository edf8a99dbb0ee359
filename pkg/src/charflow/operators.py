"""Cone-degenerate first-order differential operators and their algebra.

A ConeOperator holds the coefficient data of

    L u = d_t u + x A(t,x,y) d_x u + sum_j A_j(t,x,y) d_{y_j} u + B(t,x,y) u,

with every coefficient a finite x-Taylor polynomial whose coefficients
live in the exact expression algebra of :mod:`charflow.coeffs`.

For oracle purposes the module also implements the full (associative)
algebra of cone-differential operators sum x^m C_{m,a,alpha}(t,y)
(x d_x)^a d_y^alpha.  Composing two first-order operators there and
re-reading Taylor coefficients gives an independent check of the symbolic
composition formula; everything is exact because x d_x * x^m =
x^m (x d_x + m).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .coeffs import CoeffExpr
from .grids import YGrid
from .potentials import potential_op, xdx_potential_op
from .grids import spectral_dy


@dataclass
class ConeOperator:
    """Coefficient data (A, A_1..A_d, B) plus problem metadata."""

    N: int
    d: int
    delta: float
    T: float
    a_taylor: list            # x-Taylor coefficients of A, CoeffExpr (N,N)
    ay_taylor: list           # per y-direction: list of CoeffExpr (N,N); [] for d=0
    b_taylor: list
    symmetric: bool = False   # declared symmetric-hyperbolic (A, A_j Hermitian)
    name: str = "operator"

    @property
    def taylor_order(self) -> int:
        orders = [len(self.a_taylor), len(self.b_taylor)]
        orders += [len(t) for t in self.ay_taylor]
        return max(orders) - 1

    def _taylor_eval(self, taylor, t, x, y) -> np.ndarray:
        """Evaluate a Taylor family at (t, x-array, y-array) -> (nx, ny, N, N)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros((len(x), len(y), self.N, self.N), dtype=complex)
        for m, c in enumerate(taylor):
            if c.is_zero():
                continue
            out += (x ** m)[:, None, None, None] * c.eval(t, y)[None, ...]
        return out

    def eval_a(self, t, x, y):
        return self._taylor_eval(self.a_taylor, t, x, y)

    def eval_ay(self, j, t, x, y):
        return self._taylor_eval(self.ay_taylor[j], t, x, y)

    def eval_b(self, t, x, y):
        return self._taylor_eval(self.b_taylor, t, x, y)

    def taylor_coeff(self, which: str, m: int) -> CoeffExpr:
        table = {"a": self.a_taylor, "b": self.b_taylor}.get(which)
        if table is None:
            table = self.ay_taylor[int(which[2:])]
        if m < len(table):
            return table[m]
        return CoeffExpr.zero((self.N, self.N))

    def is_coeff_real(self, tol: float = 0.0) -> bool:
        families = [self.a_taylor, self.b_taylor, *self.ay_taylor]
        return all(c.is_real_valued(tol) for fam in families for c in fam)

    def max_harmonic(self) -> int:
        families = [self.a_taylor, self.b_taylor, *self.ay_taylor]
        return max((c.max_harmonic() for fam in families for c in fam), default=0)


def constant_operator(N, d, delta, T, A, Ay=None, B=None, A1_lin=None,
                      B1_lin=None, symmetric=False, name="operator") -> ConeOperator:
    """Operator with constant matrices plus optional linear-in-x parts."""
    zero = np.zeros((N, N))
    a_tay = [CoeffExpr.const(A)]
    if A1_lin is not None:
        a_tay.append(CoeffExpr.const(A1_lin))
    b_tay = [CoeffExpr.const(B if B is not None else zero)]
    if B1_lin is not None:
        b_tay.append(CoeffExpr.const(B1_lin))
    ay = [[CoeffExpr.const(Ay)]] if (d == 1 and Ay is not None) else ([[
        CoeffExpr.const(zero)]] if d == 1 else [])
    return ConeOperator(N, d, float(delta), float(T), a_tay, ay, b_tay,
                        symmetric=symmetric, name=name)


# -- exact cone-differential-operator algebra (oracle) ----------------------


class ConeDiffOp:
    """sum over (m, a, alpha) of x^m C(t,y) (x d_x)^a d_y^alpha."""

    def __init__(self, N: int, terms: dict | None = None):
        self.N = N
        self.terms: dict = {}
        for key, c in (terms or {}).items():
            self._add(key, c)

    def _add(self, key, c: CoeffExpr):
        if c.is_zero():
            return
        if key in self.terms:
            s = self.terms[key] + c
            if s.is_zero():
                del self.terms[key]
            else:
                self.terms[key] = s
        else:
            self.terms[key] = c

    def __add__(self, other: "ConeDiffOp") -> "ConeDiffOp":
        out = ConeDiffOp(self.N, dict(self.terms))
        for key, c in other.terms.items():
            out._add(key, c)
        return out

    def compose(self, other: "ConeDiffOp") -> "ConeDiffOp":
        out = ConeDiffOp(self.N)
        for (m1, a1, al1), c1 in self.terms.items():
            for (m2, a2, al2), c2 in other.terms.items():
                for q in range(al1 + 1):
                    dc2 = c2
                    for _ in range(q):
                        dc2 = dc2.dy()
                    cy = c1.matmul(dc2).scale(comb(al1, q))
                    for i in range(a1 + 1):
                        fac = comb(a1, i) * (m2 ** (a1 - i) if a1 - i else 1)
                        out._add((m1 + m2, i + a2, al1 - q + al2), cy.scale(fac))
        return out

    def distance(self, other: "ConeDiffOp") -> float:
        keys = set(self.terms) | set(other.terms)
        dist = 0.0
        zero = CoeffExpr.zero((self.N, self.N))
        for key in keys:
            a = self.terms.get(key, zero)
            b = other.terms.get(key, zero)
            dist = max(dist, a.distance(b))
        return dist


def cone_diff_op(op: ConeOperator) -> ConeDiffOp:
    """The first-order ConeDiffOp of the spatial part x A d_x + sum A_j d_j + B."""
    out = ConeDiffOp(op.N)
    for m, c in enumerate(op.a_taylor):
        out._add((m, 1, 0), c)
    for tay in op.ay_taylor:
        for m, c in enumerate(tay):
            out._add((m, 0, 1), c)
    for m, c in enumerate(op.b_taylor):
        out._add((m, 0, 0), c)
    return out


# -- grid application --------------------------------------------------------


def apply_operator(op: ConeOperator, t: float, u: np.ndarray, x_nodes,
                   ygrid: YGrid, xdx_u: np.ndarray) -> np.ndarray:
    """Evaluate x A d_x u + sum_j A_j d_j u + B u given exact x d_x u.

    u, xdx_u: arrays (nx, ny, N).  The y-derivative is spectral.
    """
    x = np.asarray(x_nodes, dtype=float)
    y = ygrid.nodes
    out = np.einsum("xyij,xyj->xyi", op.eval_a(t, x, y), xdx_u)
    if op.d == 1:
        du = spectral_dy(u, ygrid, axis=1)
        out += np.einsum("xyij,xyj->xyi", op.eval_ay(0, t, x, y), du)
    out += np.einsum("xyij,xyj->xyi", op.eval_b(t, x, y), u)
    return out


def apply_to_potential(op: ConeOperator, t: float, p: complex, k: int, w,
                       x_nodes, ygrid: YGrid) -> np.ndarray:
    """Apply the spatial operator to Gamma_pk w exactly on the grid.

    Uses the closed-form x d/dx of the potential term, so the result is
    quadrature-free and serves as an oracle for the conormal-symbol action.
    """
    w = np.asarray(w, dtype=complex)
    if w.ndim == 0:
        w = w.reshape(1)
    if w.ndim == 1 and op.N > 1:
        raise ValueError("vector operator needs trace data of shape (ny, N)")
    u = potential_op(p, k, w, x_nodes, ygrid)
    xdx = xdx_potential_op(p, k, w, x_nodes, ygrid)
    if u.ndim == 2:  # scalar field
        u = u[..., None]
        xdx = xdx[..., None]
    return apply_operator(op, t, u, x_nodes, ygrid, xdx)


# -- random operators for the seeded verification suites ---------------------


def random_coeff(rng: np.random.Generator, N: int, d: int, *, scale=0.5,
                 hermitian=False, real=False, max_tpow=1, max_m=2) -> CoeffExpr:
    acc = CoeffExpr.zero((N, N))
    n_terms = int(rng.integers(1, 4))
    for _ in range(n_terms):
        tp = int(rng.integers(0, max_tpow + 1))
        m = int(rng.integers(0, max_m + 1)) if d == 1 else 0
        mat = rng.normal(size=(N, N)) * scale
        if not real:
            mat = mat + 1j * rng.normal(size=(N, N)) * scale
        if hermitian:
            mat = (mat + np.conj(mat.T)) / 2
        kind = rng.choice(["cos", "sin"]) if m else "cos"
        base = CoeffExpr.cos(m, mat) if kind == "cos" else CoeffExpr.sin(m, mat)
        if tp:
            base = CoeffExpr({(j + tp, mm): v for (j, mm), v in base.terms.items()},
                             base.shape)
        acc = acc + base
    return acc


def random_cone_operator(rng: np.random.Generator, N: int | None = None,
                         d: int | None = None, taylor_order: int = 2,
                         delta: float = 0.0, hermitian=False,
                         x_independent=False) -> ConeOperator:
    N = int(rng.integers(1, 4)) if N is None else N
    d = int(rng.integers(0, 2)) if d is None else d
    M = 0 if x_independent else taylor_order

    def fam():
        return [random_coeff(rng, N, d, hermitian=hermitian) for _ in range(M + 1)]

    ay = [fam()] if d == 1 else []
    return ConeOperator(N, d, delta, 1.0, fam(), ay, fam(),
                        symmetric=hermitian, name="random")
