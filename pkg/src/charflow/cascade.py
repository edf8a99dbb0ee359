"""Boundary trace cascade: assembly, successive solve, and trace fitting.

Each admissible pair (p, k) carries a hyperbolic Cauchy problem on the
boundary,

    d_t g + sum_j A_j(t,0,y) d_j g + (-p A(t,0,y) + B(t,0,y)) g
        = (trace of f at (p,k)) + R_pk,

where the coupling R_pk collects the action of the lower-order conormal
symbols on earlier traces:

    R_pk = - sum_{(j,l,r) != (0,k,0), l-r=k} (1/r!)
           d_z^r sigma_c^{-j}(p+j) gamma_{p+j,l}.

Since the symbols of first-order operators have z-degree 1, only r in
{0, 1} contributes and d_z sigma_c^{-j} is the constant matrix -A^(j).
Systems are solved in cascade order; coupling terms are evaluated on the
stage states of the already-solved traces, which makes the successive
solve identical to integrating the block-triangular system at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .asymtypes import AsymptoticType, cascade_order
from .boundary import (
    BoundaryOperator,
    StageSeries,
    boundary_operator_from_cone,
    integrate_boundary_system,
)
from .cutoffs import phi
from .errors import (
    DependencyNotSolvedError,
    IllConditionedBasisError,
    MissingTraceError,
    ValidationError,
)
from .grids import SpaceGrid, YGrid, fourier_coeffs, fourier_values
from .operators import ConeOperator
from .potentials import _norm_factor, _singular_factor
from .symbols import conormal_symbols


@dataclass
class TraceField:
    """gamma_pk u sampled on (time grid) x (boundary y-grid)."""

    pair: tuple
    times: np.ndarray
    values: np.ndarray        # (nt, ny, N)


def _pair_key(p: complex, k: int):
    return (complex(p), int(k))


def _integer_shift(q: complex, p: complex):
    """q - p if it is a nonnegative integer, else None."""
    d = q - p
    if abs(d.imag) > 1e-9:
        return None
    j = int(round(d.real))
    if j < 0 or abs(d.real - j) > 1e-9:
        return None
    return j


def coupling_terms(op: ConeOperator, P: AsymptoticType, pair,
                   include_diagonal: bool = False):
    """The (dep_pair, scale, symbol, z) entries of the sum over (j, l, r).

    Entries evaluate to (1/r!) d_z^r sigma_c^{-j}(p+j) applied to the
    dependency trace; the diagonal (0, k, 0) term is included only on
    request (it belongs to the left-hand side of the system).
    """
    p, k = pair
    j_max = max((_integer_shift(q, p) or 0) for q, _ in P.entries) if P.entries else 0
    syms = conormal_symbols(op, j_max)
    out = []
    for q, m in P.entries:
        j = _integer_shift(q, p)
        if j is None:
            continue
        sym = syms[j]
        for r in range(sym.z_degree + 1):
            l = k + r
            if l >= m:
                continue
            if not include_diagonal and j == 0 and r == 0:
                continue
            s = sym
            for _ in range(r):
                s = s.dz()
            if s.is_zero():
                continue
            out.append(((q, l), 1.0 / factorial(r), s, q))
    return out


def apply_symbols_to_traces(op: ConeOperator, traces: dict, P: AsymptoticType,
                            pair, t: float, ygrid: YGrid) -> np.ndarray:
    """gamma_pk of (spatial operator applied to u), from the traces of u.

    traces maps (q, l) -> (ny, N) arrays; all pairs of P coupling to
    `pair` must be present.
    """
    p, k = pair
    terms = coupling_terms(op, P, pair, include_diagonal=True)
    ny = ygrid.n_points
    out = np.zeros((ny, op.N), dtype=complex)
    for dep, scale, sym, z in terms:
        key = _pair_key(*dep)
        if key not in traces:
            raise MissingTraceError(f"trace {dep} required for {pair}")
        out += scale * sym.apply(z, t, np.asarray(traces[key], dtype=complex), ygrid)
    return out


@dataclass
class BoundarySystem:
    """Assembled boundary Cauchy problem for one pair (p, k)."""

    pair: tuple
    bop: BoundaryOperator
    couplings: list           # entries ((q, l), scale, symbol, z)

    def coupling_rhs(self, t: float, dep_values: dict, ygrid: YGrid) -> np.ndarray:
        out = None
        for dep, scale, sym, z in self.couplings:
            key = _pair_key(*dep)
            if key not in dep_values:
                raise DependencyNotSolvedError(
                    f"trace {dep} not solved before {self.pair}")
            term = -scale * sym.apply(z, t, dep_values[key], ygrid)
            out = term if out is None else out + term
        return out


def assemble_system(op: ConeOperator, P: AsymptoticType, pair, ygrid: YGrid,
                    flip_zeroth_sign: bool = False) -> BoundarySystem:
    p, k = pair
    bop = boundary_operator_from_cone(op, p, ygrid)
    if flip_zeroth_sign:
        bop = BoundaryOperator(bop.N, ygrid, bop.ay_exprs, bop.zero_expr.scale(-1.0))
    return BoundarySystem((complex(p), int(k)), bop,
                          coupling_terms(op, P, pair))


def solve_cascade(op: ConeOperator, P: AsymptoticType, f_trace_fn,
                  u0_traces: dict, ygrid: YGrid, dt: float, n_steps: int,
                  flip_zeroth_sign: bool = False) -> dict:
    """Solve all boundary systems in cascade order.

    f_trace_fn(pair, t) -> (ny, N) or None; u0_traces maps pairs to
    (ny, N) initial values (missing pairs start from zero).  Returns a
    map pair -> StageSeries.
    """
    solved: dict = {}
    for pair in cascade_order(P):
        key = _pair_key(*pair)
        system = assemble_system(op, P, pair, ygrid, flip_zeroth_sign)
        v0 = u0_traces.get(key)
        if v0 is None:
            v0 = np.zeros((ygrid.n_points, op.N), dtype=complex)

        forcing = None
        if f_trace_fn is not None:
            def forcing(t, _pair=pair):
                return f_trace_fn(_pair, t)

        coupling = None
        if system.couplings:
            def coupling(t, step, stage, _sys=system):
                deps = {}
                for dep, _, _, _ in _sys.couplings:
                    dkey = _pair_key(*dep)
                    if dkey not in solved:
                        raise DependencyNotSolvedError(
                            f"trace {dep} not solved before {_sys.pair}")
                    deps[dkey] = solved[dkey].at_stage(step, stage)
                return _sys.coupling_rhs(t, deps, ygrid)

        solved[key] = integrate_boundary_system(
            system.bop, v0, forcing, n_steps, dt, coupling=coupling)
    return solved


def traces_at_times(series: StageSeries, times) -> np.ndarray:
    """Extract accepted states at the given times (must sit on the step grid)."""
    dt = series.times[1] - series.times[0] if len(series.times) > 1 else 1.0
    idx = [int(round((t - series.times[0]) / dt)) for t in times]
    for i, t in zip(idx, times):
        if i < 0 or i >= len(series.times) or abs(series.times[i] - t) > 1e-9 + 1e-6 * dt:
            raise ValidationError(f"time {t} not on the cascade step grid")
    return series.states[idx]


# -- trace extraction from interior snapshots ---------------------------------


def default_window(grid: SpaceGrid) -> tuple:
    return (4.0 * grid.x_nodes[1], 0.2)


def guard_pairs(P: AsymptoticType, levels: int = 2) -> list:
    """Nuisance pairs extending each exponent chain past the window.

    The evolution generates conormal content at the next integer shifts
    of the stored exponents (e.g. the Taylor coefficients just beyond the
    truncation, fed by the coupling); left unmodeled it aliases into the
    fitted coefficients with a grid-independent error.  The guard columns
    absorb it and are discarded after the solve.  Generic flat remainder
    content off the chains stays unmodeled; its bias scales with the
    window size and the distance past the cutoff line.
    """
    out = []
    if levels <= 0:
        return out
    for p, m in P.entries:
        if P.multiplicity(p - 1) > 0:
            continue
        for j in range(1, levels + 1):
            out.extend((p - j, k) for k in range(m))
    return out


def fit_traces(snapshots, P: AsymptoticType, grid: SpaceGrid,
               window: tuple | None = None, cond_limit: float = 1e10,
               min_nodes_factor: int = 8, guard_levels: int = 2,
               workers: int = 1) -> dict:
    """Per-snapshot, per-mode weighted least squares of the singular basis.

    The model for mode eta is sum_(p,k) phi(x <eta>) (-1)^k/k! x^{-p}
    log^k x * w_hat_pk(eta) on the window nodes, with weights
    x^{2(delta+theta)-1} mimicking the remainder metric.  Returns a map
    pair -> TraceField plus a '_report' entry with conditioning data.
    """
    pairs = cascade_order(P)
    if not pairs:
        return {"_report": {"window": window, "condition_number": 0.0, "pairs": []}}
    ghosts = guard_pairs(P, guard_levels)
    all_pairs = pairs + ghosts
    window = window or default_window(grid)
    idx = grid.window_indices(*window)
    if len(idx) < min_nodes_factor * len(all_pairs):
        raise ValidationError(
            f"fit window {window} has {len(idx)} nodes; "
            f"needs >= {min_nodes_factor * len(all_pairs)}")
    xs = grid.x_nodes[idx]
    yg = grid.ygrid
    br = yg.bracket()
    wexp = 2.0 * (P.delta + P.theta) - 1.0

    # Each mode is fitted only where its cutoff phi(x <eta>) is exactly 1,
    # i.e. x <= 1/(2 <eta>): there the model is a pure singular-power sum
    # and the cutoff cannot distort the columns.  Modes whose admissible
    # sub-window is too short for the basis are unidentifiable at this
    # resolution and their coefficients are reported as zero.
    times = np.array([s.t for s in snapshots])
    nt = len(snapshots)
    N = snapshots[0].values.shape[-1]
    coef = np.zeros((nt, len(br), len(all_pairs), N), dtype=complex)
    max_cond = 0.0
    skipped_modes = []
    mode_fits = []
    for mode in range(len(br)):
        mask = xs * br[mode] <= 0.5
        if int(mask.sum()) < len(all_pairs) + 4:
            mode_fits.append(None)
            skipped_modes.append(int(yg.modes[mode]))
            continue
        xm = xs[mask]
        sqw = np.sqrt(xm ** wexp)
        G = np.empty((len(xm), len(all_pairs)), dtype=complex)
        for col, (p, k) in enumerate(all_pairs):
            G[:, col] = _norm_factor(k) * _singular_factor(complex(p), k, xm)
        G = G * sqw[:, None]
        norms = np.linalg.norm(G, axis=0)
        norms = np.where(norms > 0, norms, 1.0)
        Gn = G / norms[None, :]
        sv = np.linalg.svd(Gn, compute_uv=False)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        max_cond = max(max_cond, float(cond))
        if cond > cond_limit:
            raise IllConditionedBasisError(
                f"fit basis condition number {cond:.2e} at mode {yg.modes[mode]}")
        mode_fits.append((mask, sqw, np.linalg.pinv(Gn), norms))
    def _fit_snapshot(it):
        fhat = fourier_coeffs(snapshots[it].values[idx], axis=1)  # (nwin, nmode, N)
        for mode in range(len(br)):
            if mode_fits[mode] is None:
                continue
            mask, sqw, pinv, norms = mode_fits[mode]
            rhs = fhat[mask, mode, :] * sqw[:, None]
            coef[it, mode] = (pinv @ rhs) / norms[:, None]

    if workers > 1 and nt > 1:
        # snapshots are independent and written to disjoint slices, so the
        # result is identical for any degree of parallelism
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_fit_snapshot, range(nt)))
    else:
        for it in range(nt):
            _fit_snapshot(it)

    out = {}
    for col, (p, k) in enumerate(pairs):
        vals = fourier_values(coef[:, :, col, :], axis=1)    # (nt, ny, N)
        out[_pair_key(p, k)] = TraceField((complex(p), int(k)), times, vals)
    out["_report"] = {
        "window": [float(window[0]), float(window[1])],
        "n_window_nodes": int(len(idx)),
        "condition_number": float(max_cond),
        "skipped_modes": skipped_modes,
        "pairs": [[float(p.real), float(p.imag), int(k)] for p, k in pairs],
        "guard_pairs": [[float(p.real), float(p.imag), int(k)] for p, k in ghosts],
    }
    return out


def compare_traces(fitted: dict, solved: dict, P: AsymptoticType,
                   times, ygrid: YGrid) -> dict:
    """Relative (t, y)-L2 mismatch per pair between fit and cascade."""
    report = {}
    for pair in cascade_order(P):
        key = _pair_key(*pair)
        fit = fitted[key].values
        casc = traces_at_times(solved[key], times)
        num = np.sqrt(np.sum(np.abs(fit - casc) ** 2))
        den = np.sqrt(np.sum(np.abs(casc) ** 2))
        report[f"p={pair[0]:.6g} k={pair[1]}"] = {
            "rel_err_l2": float(num / den) if den > 0 else (0.0 if num == 0 else np.inf),
            "cascade_norm": float(den),
        }
    return report
