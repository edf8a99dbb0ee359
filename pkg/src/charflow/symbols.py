"""Conormal symbols, compressed principal symbol, and symmetrizers.

Conventions.  All operators are written with real derivatives, and the
Mellin covariable enters through x d_x <-> -z.  The conormal symbol of
order -j of L = x A d_x + sum_j A_j d_j + B with A = sum_m x^m A^(m) etc.
is therefore the polynomial

    sigma_c^{-j}(z) = -A^(j)(t,y) z + sum_l A_l^(j)(t,y) d_l + B^(j)(t,y),

a z-polynomial whose coefficients are differential operators in y.  The
compressed principal symbol is stored in the same real normalization,

    sigma~(t,x,y,xt,eta) = A(t,x,y) xt + sum_j A_j(t,x,y) eta_j;

multiplying by i converts to the D = -i d convention, which is where the
symmetrizer's skew-Hermitian condition lives: b * (i sigma~) skew-Hermitian
is the same as b * sigma~ Hermitian, and that is the residual we measure.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .coeffs import CoeffExpr
from .errors import (
    MissingSymbolError,
    NonRealEigenvalueError,
    NotStrictlyHyperbolicError,
    TruncationExceededError,
)
from .grids import YGrid, spectral_dy
from .operators import ConeOperator, ConeDiffOp


class ConormalSymbol:
    """Matrix polynomial in z whose coefficients are y-differential operators.

    table maps (z_power, y_order) to a CoeffExpr matrix; first-order
    operators have z-degree and y-order at most 1, compositions at most 2.
    """

    def __init__(self, N: int, table: dict | None = None, j: int = 0):
        self.N = N
        self.j = j
        self.table: dict = {}
        for key, c in (table or {}).items():
            self._add(key, c)

    def _add(self, key, c: CoeffExpr):
        if c.is_zero():
            return
        if key in self.table:
            s = self.table[key] + c
            if s.is_zero():
                del self.table[key]
            else:
                self.table[key] = s
        else:
            self.table[key] = c

    def coeff(self, a: int, alpha: int) -> CoeffExpr:
        return self.table.get((a, alpha), CoeffExpr.zero((self.N, self.N)))

    @property
    def z_degree(self) -> int:
        return max((a for a, _ in self.table), default=0)

    @property
    def y_order(self) -> int:
        return max((al for _, al in self.table), default=0)

    def __add__(self, other: "ConormalSymbol") -> "ConormalSymbol":
        out = ConormalSymbol(self.N, dict(self.table), j=self.j)
        for key, c in other.table.items():
            out._add(key, c)
        return out

    def scale(self, c: complex) -> "ConormalSymbol":
        return ConormalSymbol(self.N, {k: v.scale(c) for k, v in self.table.items()},
                              j=self.j)

    def distance(self, other: "ConormalSymbol") -> float:
        keys = set(self.table) | set(other.table)
        zero = CoeffExpr.zero((self.N, self.N))
        return max((self.table.get(k, zero).distance(other.table.get(k, zero))
                    for k in keys), default=0.0)

    def is_zero(self) -> bool:
        return not self.table

    # -- calculus ---------------------------------------------------------

    def shift_z(self, c: complex) -> "ConormalSymbol":
        """The symbol z |-> S(z - c)."""
        if c == 0:
            return self
        out = ConormalSymbol(self.N, j=self.j)
        for (b, al), coeff in self.table.items():
            for a in range(b + 1):
                out._add((a, al), coeff.scale(comb(b, a) * (-c) ** (b - a)))
        return out

    def dz(self) -> "ConormalSymbol":
        out = ConormalSymbol(self.N, j=self.j)
        for (a, al), coeff in self.table.items():
            if a >= 1:
                out._add((a - 1, al), coeff.scale(a))
        return out

    def compose(self, other: "ConormalSymbol") -> "ConormalSymbol":
        """Operator composition: z-polynomial product, Leibniz in y."""
        out = ConormalSymbol(self.N, j=self.j + other.j)
        for (a1, al1), c1 in self.table.items():
            for (a2, al2), c2 in other.table.items():
                for q in range(al1 + 1):
                    dc2 = c2
                    for _ in range(q):
                        dc2 = dc2.dy()
                    out._add((a1 + a2, al1 - q + al2),
                             c1.matmul(dc2).scale(comb(al1, q)))
        return out

    def formal_adjoint_y(self) -> "ConormalSymbol":
        """Adjoint of the y-differential part only, z untouched.

        (C d^alpha)^* = (-1)^alpha sum_i C(alpha, i) (d^i C^H) d^{alpha-i}.
        """
        out = ConormalSymbol(self.N, j=self.j)
        for (a, al), c in self.table.items():
            ch = c.conj_transpose()
            for i in range(al + 1):
                dch = ch
                for _ in range(i):
                    dch = dch.dy()
                out._add((a, al - i), dch.scale((-1) ** al * comb(al, i)))
        return out

    # -- evaluation ---------------------------------------------------------

    def apply(self, z: complex, t: float, field: np.ndarray, ygrid: YGrid) -> np.ndarray:
        """Apply S(z) at time t to a y-grid field (ny, N)."""
        field = np.asarray(field, dtype=complex)
        if field.ndim == 1:
            field = field[:, None]
        y = ygrid.nodes
        out = np.zeros_like(field)
        for (a, al), c in self.table.items():
            dfield = spectral_dy(field, ygrid, axis=0, order=al)
            out += (z ** a) * np.einsum("yij,yj->yi", c.eval(t, y), dfield)
        return out

    def to_json(self) -> dict:
        rec = {}
        for (a, al), c in sorted(self.table.items()):
            terms = [
                {"tpow": j, "m": m, "re": np.real(v).tolist(), "im": np.imag(v).tolist()}
                for (j, m), v in sorted(c.terms.items())
            ]
            rec[f"z^{a} dy^{al}"] = terms
        return rec


# -- conormal symbols of differential operators ------------------------------


def mellin_symbol(op: ConeOperator, j: int) -> ConormalSymbol:
    """sigma_c^{-j} of the spatial part of the operator (t stays a parameter)."""
    if j < 0 or j > op.taylor_order:
        raise TruncationExceededError(
            f"conormal order {j} beyond Taylor truncation {op.taylor_order}")
    return _symbol_at(op, j)


def _symbol_at(op: ConeOperator, j: int) -> ConormalSymbol:
    sym = ConormalSymbol(op.N, j=j)
    sym._add((1, 0), op.taylor_coeff("a", j).scale(-1.0))
    for l in range(op.d):
        sym._add((0, 1), op.taylor_coeff(f"ay{l}", j))
    sym._add((0, 0), op.taylor_coeff("b", j))
    return sym


def conormal_symbols(op: ConeOperator, j_max: int) -> dict:
    """sigma_c^{-j} for j = 0..j_max; zero beyond the Taylor truncation.

    The coefficients are exact polynomials in x, so higher conormal
    symbols genuinely vanish.
    """
    out = {}
    for j in range(j_max + 1):
        out[j] = _symbol_at(op, j) if j <= op.taylor_order else ConormalSymbol(op.N, j=j)
    return out


def symbol_of_cone_diff_op(dop: ConeDiffOp, j: int) -> ConormalSymbol:
    """Extract sigma_c^{-j} from an exact cone-differential operator.

    The x^j part sum_a C (x d_x)^a d^alpha maps to sum_a C (-z)^a d^alpha.
    """
    sym = ConormalSymbol(dop.N, j=j)
    for (m, a, al), c in dop.terms.items():
        if m == j:
            sym._add((a, al), c.scale((-1.0) ** a))
    return sym


def compose_symbols(a_syms: dict, b_syms: dict, ell: int) -> ConormalSymbol:
    """sigma_c^{-ell}(A o B)(z) = sum_{j+k=ell} sigma_c^{-j}(A)(z-k) sigma_c^{-k}(B)(z)."""
    out = None
    for jj in range(ell + 1):
        kk = ell - jj
        if jj not in a_syms or kk not in b_syms:
            raise MissingSymbolError(f"need symbols of order {jj} and {kk}")
        term = a_syms[jj].shift_z(kk).compose(b_syms[kk])
        out = term if out is None else out + term
    out.j = ell
    return out


def adjoint_symbol(sym: ConormalSymbol, delta: float) -> ConormalSymbol:
    """sigma_c^0(A^*)(z) = sigma_c^0(A)(1 - 2 delta - conj(z))^* as a polynomial.

    For S(z) = sum_a D_a z^a this is sum_a (1 - 2 delta - z)^a D_a^*,
    which is again polynomial (hence entire) in z.
    """
    adj_y = sym.formal_adjoint_y()     # adjoints D_a^*, same z-powers
    out = ConormalSymbol(sym.N, j=sym.j)
    w = 1.0 - 2.0 * delta
    for (a, al), c in adj_y.table.items():
        for i in range(a + 1):
            out._add((i, al), c.scale(comb(a, i) * (w ** (a - i)) * (-1.0) ** i))
    return out


def conormal_principal_symbol(sym: ConormalSymbol, t: float, y, eta, tau):
    """Principal symbol of the boundary operator family, real-normalized.

    For sigma_c^0 = -A z + A_1 d_y + B this is -A(y) tau + A_1(y) eta; B
    does not enter.  y scalar, eta/tau scalars.
    """
    ztop = sym.coeff(1, 0).eval(t, np.asarray(y, dtype=float))
    ytop = sym.coeff(0, 1).eval(t, np.asarray(y, dtype=float))
    return ztop * tau + ytop * eta


# -- compressed principal symbol ---------------------------------------------


@dataclass
class CompressedSymbol:
    """Evaluator of sigma~(t,x,y,xt,eta) = A xt + sum_j A_j eta_j."""

    op: ConeOperator

    def eval(self, t, x, y, xt, eta=0.0) -> np.ndarray:
        a = self.op.eval_a(t, x, y)[0, 0]
        out = xt * a
        if self.op.d == 1:
            out = out + eta * self.op.eval_ay(0, t, x, y)[0, 0]
        return out

    def eval_batch(self, pts) -> np.ndarray:
        """pts: iterable of (t, x, y, xt, eta) -> stacked matrices."""
        return np.stack([self.eval(*pt) for pt in pts])


def compressed_symbol(op: ConeOperator) -> CompressedSymbol:
    return CompressedSymbol(op)


def symbol_lattice(op: ConeOperator, n_t=3, n_x=4, n_y=8, n_angle=16,
                   x_max=2.0):
    """Sample lattice of (t, x, y, xt, eta) with |(xt, eta)| = 1."""
    ts = np.linspace(0.0, op.T, n_t)
    xs = np.array([0.0, 0.3, 1.0, x_max])[:n_x]
    ys = (2.0 * np.pi * np.arange(n_y) / n_y) if op.d == 1 else np.zeros(1)
    if op.d == 1:
        ang = 2.0 * np.pi * np.arange(n_angle) / n_angle
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        dirs = np.array([[1.0, 0.0], [-1.0, 0.0]])
    return [(t, x, y, d[0], d[1]) for t in ts for x in xs for y in ys for d in dirs]


def compatibility_check(op: ConeOperator, n_y=16, n_angle=16, t=None) -> float:
    """Max residual of the boundary compatibility identity.

    Checks sigma~(0, y, xt, eta) against the principal symbol of
    sigma_c^0 evaluated at tau = -xt; exact for differential operators.
    """
    ts = [0.0, op.T] if t is None else [t]
    sym0 = _symbol_at(op, 0)
    comp = compressed_symbol(op)
    ys = (2.0 * np.pi * np.arange(n_y) / n_y) if op.d == 1 else np.zeros(1)
    if op.d == 1:
        ang = 2.0 * np.pi * np.arange(n_angle) / n_angle
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        dirs = np.array([[1.0, 0.0], [-1.0, 0.0]])
    res = 0.0
    for tt in ts:
        for y in ys:
            for xt, eta in dirs:
                lhs = comp.eval(tt, 0.0, y, xt, eta)
                rhs = conormal_principal_symbol(sym0, tt, y, eta, tau=-xt)
                res = max(res, float(np.max(np.abs(lhs - rhs))))
    return res


# -- symbolic symmetrizer -----------------------------------------------------


def _fix_phases(R: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Normalize eigenvector columns: unit length, first sizable entry real > 0."""
    R = R / np.linalg.norm(R, axis=0, keepdims=True)
    N = R.shape[0]
    for col in range(R.shape[1]):
        idx = int(np.argmax(np.abs(R[:, col]) > tol)) if np.any(np.abs(R[:, col]) > tol) else 0
        ph = R[idx, col]
        if abs(ph) > 0:
            R[:, col] = R[:, col] * (np.conj(ph) / abs(ph))
    return R


@dataclass
class SymbolicSymmetrizer:
    """Hermitian positive evaluator b(t,x,y,xt,eta) with b sigma~ Hermitian."""

    op: ConeOperator
    kind: str               # "identity" or "eigen"

    def eval(self, t, x, y, xt, eta=0.0) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.op.N, dtype=complex)
        norm = float(np.hypot(xt, eta))
        if norm == 0.0:
            return np.eye(self.op.N, dtype=complex)
        S = compressed_symbol(self.op).eval(t, x, y, xt / norm, eta / norm)
        lam, R = np.linalg.eig(S)
        if np.max(np.abs(lam.imag)) > 1e-8 * (1.0 + np.max(np.abs(lam.real))):
            raise NonRealEigenvalueError(f"complex eigenvalue at {(t, x, y, xt, eta)}")
        order = np.argsort(lam.real)
        R = _fix_phases(R[:, order])
        Rinv = np.linalg.inv(R)
        return np.conj(Rinv.T) @ Rinv   # (R R^H)^{-1}, Hermitian positive


def build_symmetrizer(op: ConeOperator, lattice=None) -> SymbolicSymmetrizer:
    """Construct b for the two constructive subclasses.

    Declared-symmetric operators get b = I.  Otherwise strict
    hyperbolicity (real, separated eigenvalues of sigma~ on the unit
    sphere lattice) is required and b = (R R^H)^{-1} with phase-fixed
    unit eigenvector columns.
    """
    if op.symmetric:
        hermitian = all(
            c.is_hermitian(1e-14)
            for fam in [op.a_taylor, *op.ay_taylor] for c in fam
        )
        if not hermitian:
            raise NotStrictlyHyperbolicError(
                "operator declared symmetric but A/A_j are not Hermitian")
        return SymbolicSymmetrizer(op, "identity")

    lattice = lattice or symbol_lattice(op)
    comp = compressed_symbol(op)
    for pt in lattice:
        S = comp.eval(*pt)
        lam = np.linalg.eigvals(S)
        scale = 1.0 + float(np.max(np.abs(lam)))
        if np.max(np.abs(lam.imag)) > 1e-8 * scale:
            raise NonRealEigenvalueError(f"complex eigenvalue at {pt}")
        gaps = np.diff(np.sort(lam.real))
        if op.N > 1 and (len(gaps) == 0 or np.min(gaps) < 1e-8 * scale):
            raise NotStrictlyHyperbolicError(f"eigenvalue collision at {pt}")
    return SymbolicSymmetrizer(op, "eigen")


def check_symmetrizer(b: SymbolicSymmetrizer, op: ConeOperator,
                      lattice=None) -> dict:
    """Report {c_min, max_skew_residual, max_continuity_jump} on the lattice.

    The skew residual is |b(i sigma~) + (b(i sigma~))^H| = |b sigma~ -
    (b sigma~)^H|, i.e. the deviation of b sigma~ from Hermitian in the
    real-derivative normalization.
    """
    lattice = lattice or symbol_lattice(op)
    comp = compressed_symbol(op)
    c_min = np.inf
    skew = 0.0
    prev_b = None
    jump = 0.0
    for pt in lattice:
        bmat = b.eval(*pt)
        S = comp.eval(*pt)
        c_min = min(c_min, float(np.min(np.linalg.eigvalsh((bmat + np.conj(bmat.T)) / 2))))
        BS = bmat @ S
        skew = max(skew, float(np.max(np.abs(BS - np.conj(BS.T)))))
        if prev_b is not None:
            jump = max(jump, float(np.max(np.abs(bmat - prev_b))))
        prev_b = bmat
    return {"c_min": float(c_min), "max_skew_residual": float(skew),
            "max_continuity_jump": float(jump)}


def boundary_symmetrizer_check(op: ConeOperator, b: SymbolicSymmetrizer,
                               n_y=8) -> float:
    """Residual of b(t,0,y,0,eta) symmetrizing the boundary family A_1 eta."""
    if op.d == 0:
        return 0.0
    res = 0.0
    ys = 2.0 * np.pi * np.arange(n_y) / n_y
    for t in (0.0, op.T):
        for y in ys:
            for eta in (1.0, -1.0):
                bm = b.eval(t, 0.0, y, 0.0, eta)
                S = eta * op.eval_ay(0, t, 0.0, y)[0, 0]
                BS = bm @ S
                res = max(res, float(np.max(np.abs(BS - np.conj(BS.T)))))
    return res
