"""Scenario configuration: operator + asymptotics + grids + data.

Data for u0 and f are sums of (a) asymptotic generators realized through
the potential operators (optionally with a plain tensor cutoff phi(c x)
instead of the mode-wise one) and (b) flat closed-form terms
phi(c x) x^a log^j x * w(t, y) whose conormal order lies beyond the
truncation window, so they carry no trace.

Builtin scenarios double as the acceptance fixtures; each records which
oracle validates it.  Config files (TOML or JSON) either select a builtin
by name (overriding grids/times) or spell out a custom operator in the
same closed coefficient format.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import asymtypes
from .asymtypes import EXPONENT_TOL, AsymptoticType
from .coeffs import CoeffExpr, expr_from_terms
from .cutoffs import phi
from .errors import ConfigError, ValidationError
from .grids import LogGrid, SpaceGrid, WeightLine, YGrid
from .operators import ConeOperator, constant_operator
from .potentials import potential_op
from .symbols import build_symmetrizer, check_symmetrizer


@dataclass
class AsymGenerator:
    """One asymptotic data term at (p, k) with y-profile w (CoeffExpr, (N,))."""

    p: complex
    k: int
    w: CoeffExpr
    cutoff_scale: float | None = None   # None: mode cutoff phi(x<eta>)

    def field(self, t: float, x_nodes, ygrid: YGrid) -> np.ndarray:
        w = self.w.eval(t, ygrid.nodes)          # (ny, N)
        if self.cutoff_scale is None:
            return potential_op(self.p, self.k, w, x_nodes, ygrid)
        x = np.asarray(x_nodes, dtype=float)
        out = np.zeros((len(x),) + w.shape, dtype=complex)
        pos = x > 0
        from .potentials import _norm_factor, _singular_factor
        fac = _norm_factor(self.k) * phi(self.cutoff_scale * x[pos]) * \
            _singular_factor(complex(self.p), self.k, x[pos])
        out[pos] = fac[:, None, None] * w[None, :, :]
        if np.any(~pos):
            from .potentials import _limit_at_zero
            out[~pos] = _limit_at_zero(complex(self.p), self.k, w, "value")
        return out


@dataclass
class FlatTerm:
    """phi(c x) x^a log^j x * w(t, y); must be flat past the trace window."""

    a: float
    w: CoeffExpr
    c: float = 1.0
    logk: int = 0

    def field(self, t: float, x_nodes, ygrid: YGrid) -> np.ndarray:
        w = self.w.eval(t, ygrid.nodes)
        x = np.asarray(x_nodes, dtype=float)
        out = np.zeros((len(x),) + w.shape, dtype=complex)
        pos = x > 0
        fac = phi(self.c * x[pos]) * x[pos] ** self.a * np.log(x[pos]) ** self.logk
        out[pos] = fac[:, None, None] * w[None, :, :]
        if self.a == 0.0 and self.logk == 0:
            out[~pos] = w[None, :, :]
        return out


@dataclass
class DataSpec:
    """Sum of asymptotic generators and flat closed-form terms."""

    N: int
    generators: list = field(default_factory=list)
    flats: list = field(default_factory=list)

    def is_zero(self) -> bool:
        return not self.generators and not self.flats

    def eval_grid(self, t: float, x_nodes, ygrid: YGrid) -> np.ndarray:
        out = np.zeros((len(np.asarray(x_nodes)), ygrid.n_points, self.N),
                       dtype=complex)
        for gen in self.generators:
            out = out + gen.field(t, x_nodes, ygrid)
        for flat in self.flats:
            out = out + flat.field(t, x_nodes, ygrid)
        return out

    def trace(self, pair, t: float, ygrid: YGrid) -> np.ndarray:
        """gamma_pk of the data: the matching generator's profile, else 0."""
        p, k = pair
        for gen in self.generators:
            if abs(gen.p - p) <= EXPONENT_TOL and gen.k == k:
                return gen.w.eval(t, ygrid.nodes)
        return np.zeros((ygrid.n_points, self.N), dtype=complex)

    def traces(self, P: AsymptoticType, t: float, ygrid: YGrid) -> dict:
        return {(complex(p), k): self.trace((p, k), t, ygrid)
                for p, k in P.pairs()}


@dataclass
class Scenario:
    name: str
    op: ConeOperator
    P: AsymptoticType
    grid: SpaceGrid
    u0: DataSpec
    f: DataSpec | None = None
    T: float | None = None
    dt: float | None = None              # None: CFL-determined
    snapshot_times: list | None = None
    fit_window: tuple | None = None
    real_mode: bool = False
    log_grid: LogGrid = field(default_factory=lambda: LogGrid(1e-8, 40.0, 4096))
    weight_line: WeightLine = field(default_factory=lambda: WeightLine(0.5, 200.0, 0.05))
    flip_cascade_sign: bool = False
    perturb_adjoint: bool = False
    workers: int = 0                     # 0: use the physical core count
    exact_family: str | None = None      # set by validation when available
    oracle_note: str = ""

    def worker_count(self) -> int:
        import os
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    @property
    def horizon(self) -> float:
        return self.op.T if self.T is None else self.T

    def u0_values(self) -> np.ndarray:
        return self.u0.eval_grid(0.0, self.grid.x_nodes, self.grid.ygrid)

    def forcing_fn(self):
        if self.f is None or self.f.is_zero():
            return None
        x, yg = self.grid.x_nodes, self.grid.ygrid

        def fn(t):
            return self.f.eval_grid(t, x, yg)
        return fn

    def f_trace_fn(self):
        if self.f is None or self.f.is_zero():
            return None
        yg = self.grid.ygrid

        def fn(pair, t):
            return self.f.trace(pair, t, yg)
        return fn

    def snapshot_schedule(self) -> list:
        if self.snapshot_times:
            return list(self.snapshot_times)
        return list(np.linspace(0.0, self.horizon, 9))


def _is_scalar_multiple_of_identity(expr: CoeffExpr, N: int):
    if len(expr.terms) != 1 or (0, 0) not in expr.terms:
        return None
    mat = expr.terms[(0, 0)]
    if np.allclose(mat, mat[0, 0] * np.eye(N), atol=1e-15):
        return complex(mat[0, 0])
    return None


def detect_exact_family(sc: Scenario) -> str | None:
    """Closed-form families: d=0 with A = a*I, or d=1 with A = a*I and
    constant A_1, B (Fourier-diagonalizable).  Needs f = 0."""
    op = sc.op
    if sc.f is not None and not sc.f.is_zero():
        return None
    if len(op.a_taylor) != 1:
        return None
    a = _is_scalar_multiple_of_identity(op.a_taylor[0], op.N)
    if a is None or abs(a.imag) > 1e-14:
        return None
    if len(op.b_taylor) != 1 or list(op.b_taylor[0].terms) not in ([(0, 0)], []):
        return None
    if op.d == 0:
        return "dilation_d0"
    ay = op.ay_taylor[0]
    if len(ay) != 1 or list(ay[0].terms) not in ([(0, 0)], []):
        return None
    return "dilation_d1"


def validate_scenario(sc: Scenario) -> Scenario:
    """Cross-field checks; returns the scenario with exact_family set."""
    op, P = sc.op, sc.P
    if op.d != sc.grid.ygrid.d:
        raise ValidationError("operator and grid dimension mismatch")
    if abs(op.delta - P.delta) > 1e-12:
        raise ValidationError("operator delta and asymptotic-type delta differ")
    lower = 0.5 - P.delta - P.theta
    for data, tag in ((sc.u0, "u0"), (sc.f, "f")):
        if data is None:
            continue
        if data.N != op.N:
            raise ValidationError(f"{tag} component count != N")
        for gen in data.generators:
            if P.multiplicity(gen.p) <= gen.k:
                raise ValidationError(
                    f"{tag} generator ({gen.p}, {gen.k}) not admissible for the type")
        for flat in data.flats:
            if -flat.a > lower - 1e-9:
                raise ValidationError(
                    f"{tag} flat term x^{flat.a} reaches into the trace window")
    if sc.real_mode:
        if not P.is_conjugation_closed():
            raise ValidationError("real mode requires conjugation-closed type")
        if not op.is_coeff_real(1e-14):
            raise ValidationError("real mode requires real coefficients")
    if op.symmetric:
        rep = check_symmetrizer(build_symmetrizer(op), op)
        if rep["c_min"] <= 0 or rep["max_skew_residual"] > 1e-10:
            raise ValidationError(f"declared symmetrizer fails checks: {rep}")
    return replace(sc, exact_family=detect_exact_family(sc))


# -- builtin scenario library -------------------------------------------------


def _vec(vals) -> CoeffExpr:
    return CoeffExpr.const(np.asarray(vals, dtype=complex))


def _builtin_taylor_d0(nx=256, **kw) -> Scenario:
    op = constant_operator(1, 0, 0.0, 1.0, np.array([[0.8]]), B=np.array([[0.25]]),
                           symmetric=True, name="taylor_d0")
    P = asymtypes.taylor_type(4, delta=0.0)
    gens = [AsymGenerator(complex(-l), 0, _vec([w]))
            for l, w in enumerate((0.9, 0.5, -0.3, 0.2))]
    return Scenario(
        name="taylor_d0", op=op, P=P,
        grid=SpaceGrid(nx, 2.0, 6.0, YGrid(0)),
        u0=DataSpec(1, gens), T=1.0, real_mode=True,
        oracle_note="exact dilation solution by characteristics",
    )


def _builtin_power_d0(nx=512, **kw) -> Scenario:
    op = constant_operator(1, 0, 0.0, 1.0, np.array([[1.0]]), B=np.array([[0.3]]),
                           symmetric=True, name="power_d0")
    P = asymtypes.validate({complex(-0.5): 1}, 0.0, 1.4)
    u0 = DataSpec(1, [AsymGenerator(complex(-0.5), 0, _vec([1.0]), cutoff_scale=1.0)])
    return Scenario(
        name="power_d0", op=op, P=P, grid=SpaceGrid(nx, 2.0, 6.0, YGrid(0)),
        u0=u0, T=1.0, real_mode=True,
        oracle_note="exact characteristics solution u0(x e^{-at}) e^{-bt}",
    )


def _builtin_log_pair_d0(nx=192, **kw) -> Scenario:
    op = constant_operator(1, 0, 0.0, 1.0, np.array([[1.0]]), B=np.array([[0.3]]),
                           symmetric=True, name="log_pair_d0")
    P = asymtypes.validate({complex(-0.5): 2}, 0.0, 1.5)
    u0 = DataSpec(1, [AsymGenerator(complex(-0.5), 0, _vec([0.7])),
                      AsymGenerator(complex(-0.5), 1, _vec([0.4]))])
    return Scenario(
        name="log_pair_d0", op=op, P=P, grid=SpaceGrid(nx, 2.0, 6.0, YGrid(0)),
        u0=u0, T=0.8, real_mode=True,
        oracle_note="triangular ODE pair with dz-coupling, exact exponential",
    )


def _builtin_taylor_d1_symmetric(nx=128, ny=16, **kw) -> Scenario:
    N = 2
    A0 = np.array([[0.8, 0.2], [0.2, 0.3]])
    A1x = np.array([[0.3, -0.1], [-0.1, 0.5]])
    Ay = np.array([[0.6, 0.15], [0.15, -0.4]])
    B0 = np.array([[0.1, 0.05], [-0.3, 0.2]])
    B1x = np.array([[0.0, 0.4], [0.1, -0.1]])
    a_tay = [CoeffExpr.const(A0), CoeffExpr.const(A1x)]
    ay = [[CoeffExpr.const(Ay) + CoeffExpr.cos(1, 0.2 * np.eye(N))]]
    b_tay = [CoeffExpr.const(B0) + CoeffExpr.sin(2, 0.1 * np.eye(N)),
             CoeffExpr.const(B1x)]
    op = ConeOperator(N, 1, 0.0, 0.6, a_tay, ay, b_tay, symmetric=True,
                      name="taylor_d1_symmetric")
    P = asymtypes.taylor_type(3, delta=0.0)
    w0 = CoeffExpr.const([1.0, 0.0]) + CoeffExpr.cos(1, [0.5, 0.0]) + \
        CoeffExpr.sin(1, [0.0, 0.6])
    w1 = CoeffExpr.cos(2, [0.3, -0.2]) + CoeffExpr.const([0.0, 0.4])
    w2 = CoeffExpr.sin(1, [0.2, 0.1])
    u0 = DataSpec(N, [AsymGenerator(0j, 0, w0), AsymGenerator(complex(-1), 0, w1),
                      AsymGenerator(complex(-2), 0, w2)])
    return Scenario(
        name="taylor_d1_symmetric", op=op, P=P,
        grid=SpaceGrid(nx, 2.0, 6.0, YGrid(1, ny)),
        u0=u0, T=0.6, real_mode=True,
        oracle_note="cascade vs interior-trace fit; boundary-row autonomy",
    )


def _builtin_strict_d1(nx=96, ny=16, **kw) -> Scenario:
    A = np.diag([1.0, -1.0])
    Ay = np.array([[0.0, 1.5], [0.6, 0.0]])
    B = np.array([[0.1, 0.0], [0.0, -0.2]])
    op = constant_operator(2, 1, 0.0, 0.5, A, Ay=Ay, B=B, name="strict_d1")
    P = asymtypes.validate({complex(-0.5): 1}, 0.0, 1.4)
    w = CoeffExpr.cos(1, [1.0, 0.0]) + CoeffExpr.sin(1, [0.0, 0.5])
    u0 = DataSpec(2, [AsymGenerator(complex(-0.5), 0, w)])
    return Scenario(
        name="strict_d1", op=op, P=P, grid=SpaceGrid(nx, 2.0, 6.0, YGrid(1, ny)),
        u0=u0, T=0.5, real_mode=True,
        oracle_note="strictly hyperbolic, eigenprojection symmetrizer",
    )


def _builtin_unitary_d1(nx=128, ny=16, **kw) -> Scenario:
    A = -0.4 * np.eye(2)
    Ay = np.array([[0.6, 0.2], [0.2, -0.3]])
    B = np.array([[0.0, 0.5], [-0.5, 0.0]])
    op = constant_operator(2, 1, 0.5, 1.0, A, Ay=Ay, B=B, symmetric=True,
                           name="unitary_d1")
    P = asymtypes.empty_type(delta=0.5)
    w = CoeffExpr.cos(1, [1.0, 0.0]) + CoeffExpr.sin(2, [0.0, 0.8])
    u0 = DataSpec(2, flats=[FlatTerm(1.0, w, c=2.5)])
    return Scenario(
        name="unitary_d1", op=op, P=P, grid=SpaceGrid(nx, 2.0, 6.0, YGrid(1, ny)),
        u0=u0, T=1.0, real_mode=True,
        oracle_note="skew zeroth order, f=0: reference norm conserved",
    )


def _builtin_zero_d0(nx=64, **kw) -> Scenario:
    op = constant_operator(1, 0, 0.0, 0.5, np.array([[0.5]]), symmetric=True,
                           name="zero_d0")
    return Scenario(
        name="zero_d0", op=op, P=asymtypes.empty_type(),
        grid=SpaceGrid(nx, 2.0, 6.0, YGrid(0)),
        u0=DataSpec(1), T=0.5, real_mode=True,
        oracle_note="zero data: everything stays exactly zero",
    )


_BUILTINS = {
    "taylor_d0": _builtin_taylor_d0,
    "power_d0": _builtin_power_d0,
    "log_pair_d0": _builtin_log_pair_d0,
    "taylor_d1_symmetric": _builtin_taylor_d1_symmetric,
    "strict_d1": _builtin_strict_d1,
    "unitary_d1": _builtin_unitary_d1,
    "zero_d0": _builtin_zero_d0,
}


def builtin_names():
    names = sorted(_BUILTINS)
    return names + [f"negcontrol_{n}" for n in ("log_pair_d0", "taylor_d1_symmetric",
                                                "symbols")]


def builtin_scenario(name: str, **kw) -> Scenario:
    if name.startswith("negcontrol_"):
        base = name[len("negcontrol_"):]
        if base == "symbols":
            sc = _BUILTINS["strict_d1"](**kw)
            sc = replace(sc, name=name, perturb_adjoint=True)
        else:
            if base not in _BUILTINS:
                raise ConfigError(f"unknown negative control {name!r}")
            sc = replace(_BUILTINS[base](**kw), name=name, flip_cascade_sign=True)
        return validate_scenario(sc)
    if name not in _BUILTINS:
        raise ConfigError(f"unknown builtin scenario {name!r}; "
                          f"available: {builtin_names()}")
    return validate_scenario(_BUILTINS[name](**kw))


# -- config files -------------------------------------------------------------


def _load_raw(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _matrix_from_record(rec, N) -> np.ndarray:
    re = np.asarray(rec.get("re", np.zeros((N, N))), dtype=float)
    im = np.asarray(rec.get("im", np.zeros((N, N))), dtype=float)
    mat = re + 1j * im
    if mat.shape != (N, N):
        raise ConfigError(f"coefficient matrix shape {mat.shape} != ({N},{N})")
    return mat


def _taylor_from_config(records, N) -> list:
    """records: list of {xpow, tpow, m, kind, re, im} term tables."""
    if not records:
        return [CoeffExpr.zero((N, N))]
    max_x = max(int(r.get("xpow", 0)) for r in records)
    taylor = [CoeffExpr.zero((N, N)) for _ in range(max_x + 1)]
    for r in records:
        xp = int(r.get("xpow", 0))
        term = expr_from_terms((N, N), [{
            "tpow": r.get("tpow", 0), "m": r.get("m", 0),
            "kind": r.get("kind", "cos"), "value": _matrix_from_record(r, N)}])
        taylor[xp] = taylor[xp] + term
    return taylor


def _vector_expr_from_config(records, N) -> CoeffExpr:
    acc = CoeffExpr.zero((N,))
    for r in records:
        re = np.asarray(r.get("re", np.zeros(N)), dtype=float)
        im = np.asarray(r.get("im", np.zeros(N)), dtype=float)
        acc = acc + expr_from_terms((N,), [{
            "tpow": r.get("tpow", 0), "m": r.get("m", 0),
            "kind": r.get("kind", "cos"), "value": re + 1j * im}])
    return acc


def _data_from_config(cfg: dict | None, N: int) -> DataSpec:
    if not cfg:
        return DataSpec(N)
    gens = []
    for g in cfg.get("generators", []):
        gens.append(AsymGenerator(
            complex(float(g["re"]), float(g.get("im", 0.0))), int(g.get("k", 0)),
            _vector_expr_from_config(g.get("terms", []), N),
            cutoff_scale=g.get("cutoff_scale")))
    flats = []
    for f in cfg.get("flats", []):
        flats.append(FlatTerm(float(f["a"]),
                              _vector_expr_from_config(f.get("terms", []), N),
                              c=float(f.get("c", 1.0)), logk=int(f.get("logk", 0))))
    return DataSpec(N, gens, flats)


def scenario_from_config(path) -> Scenario:
    raw = _load_raw(path)
    try:
        sc_cfg = raw.get("scenario", {})
        grid_cfg = raw.get("grid", {})
        kw = {}
        if "n_x" in grid_cfg:
            kw["nx"] = int(grid_cfg["n_x"])
        if "n_y" in grid_cfg:
            kw["ny"] = int(grid_cfg["n_y"])

        if "builtin" in sc_cfg:
            sc = builtin_scenario(sc_cfg["builtin"], **kw)
        else:
            op_cfg = raw.get("operator")
            if op_cfg is None:
                raise ConfigError("config needs [scenario].builtin or [operator]")
            N = int(op_cfg["N"])
            d = int(op_cfg.get("d", 0))
            delta = float(op_cfg.get("delta", 0.0))
            T = float(op_cfg.get("T", 1.0))
            op = ConeOperator(
                N, d, delta, T,
                _taylor_from_config(op_cfg.get("A", []), N),
                [_taylor_from_config(op_cfg.get("A1", []), N)] if d == 1 else [],
                _taylor_from_config(op_cfg.get("B", []), N),
                symmetric=bool(op_cfg.get("symmetric", False)),
                name=str(sc_cfg.get("name", "custom")))
            P = asymtypes.from_config(raw.get("asymptotics", {"delta": delta,
                                                              "theta": 0.0,
                                                              "entries": []}))
            data = raw.get("data", {})
            grid = SpaceGrid(int(grid_cfg.get("n_x", 128)),
                             float(grid_cfg.get("x_max", 2.0)),
                             float(grid_cfg.get("kappa", 6.0)),
                             YGrid(d, int(grid_cfg.get("n_y", 16)) if d == 1 else 1))
            sc = Scenario(name=str(sc_cfg.get("name", "custom")), op=op, P=P,
                          grid=grid, u0=_data_from_config(data.get("u0"), N),
                          f=_data_from_config(data.get("f"), N),
                          real_mode=bool(sc_cfg.get("real_mode", False)))
            sc = validate_scenario(sc)

        # common overrides
        updates = {}
        if "T" in sc_cfg:
            updates["T"] = float(sc_cfg["T"])
        time_cfg = raw.get("time", {})
        if time_cfg.get("dt"):
            updates["dt"] = float(time_cfg["dt"])
        mell = raw.get("mellin", {})
        if mell:
            updates["log_grid"] = LogGrid(float(mell.get("x_min", 1e-8)),
                                          float(mell.get("x_max", 40.0)),
                                          int(mell.get("n", 4096)))
            updates["weight_line"] = WeightLine(0.5,
                                                float(mell.get("tau_max", 200.0)),
                                                float(mell.get("dtau", 0.05)))
        fit = raw.get("fit", {})
        if "window" in fit:
            updates["fit_window"] = tuple(float(v) for v in fit["window"])
        out_cfg = raw.get("output", {})
        if "snapshots" in out_cfg:
            updates["snapshot_times"] = [float(v) for v in out_cfg["snapshots"]]
        dbg = raw.get("debug", {})
        if dbg.get("flip_cascade_sign"):
            updates["flip_cascade_sign"] = True
        if dbg.get("perturb_adjoint"):
            updates["perturb_adjoint"] = True
        run_cfg = raw.get("run", {})
        if "workers" in run_cfg:
            updates["workers"] = int(run_cfg["workers"])
        if updates:
            sc = replace(sc, **updates)
        return sc
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def refined_scenario(sc: Scenario, factor: int = 2) -> Scenario:
    return replace(sc, grid=sc.grid.refined(factor))
