"""Boundary hyperbolic systems and the shared SSP-RK3 integrator.

The interior solver's x = 0 row and the trace-cascade systems evolve
under operators of the same shape,

    d_t v + sum_j A_j(t, y) d_j v + M(t, y) v = forcing(t, y),

and the two must produce identical arithmetic: the x = 0 row of the
interior scheme is computed through this module, so the discrete
boundary-row dynamics is literally the standalone boundary solve.

The integrator exposes its two intermediate stage states.  Cascade
systems are solved successively; a later system's coupling term must be
evaluated on the earlier system's stage states (not on time interpolants)
for the successive solve to coincide exactly with integrating the
block-triangular system as one stacked ODE.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeffs import CoeffExpr
from .errors import NonfiniteStateError
from .grids import YGrid, spectral_dy


def _is_time_independent(expr: CoeffExpr) -> bool:
    return all(j == 0 for (j, _) in expr.terms)


@dataclass
class BoundaryOperator:
    """Spatial operator sum_j A_j(t,y) d_j + M(t,y) on the boundary grid."""

    N: int
    ygrid: YGrid
    ay_exprs: list            # one CoeffExpr (N, N) per y-direction
    zero_expr: CoeffExpr
    _cache: dict = field(default_factory=dict, repr=False)

    def _matrices(self, t: float):
        static = all(_is_time_independent(e) for e in self.ay_exprs) and \
            _is_time_independent(self.zero_expr)
        key = None if static else float(t)
        if key not in self._cache:
            y = self.ygrid.nodes
            self._cache.clear()
            self._cache[key] = (
                [e.eval(0.0 if static else t, y) for e in self.ay_exprs],
                self.zero_expr.eval(0.0 if static else t, y),
            )
        return self._cache[key]

    def apply(self, t: float, v: np.ndarray) -> np.ndarray:
        """(sum_j A_j d_j + M) v for v of shape (ny, N)."""
        ay, zero = self._matrices(t)
        out = np.einsum("yij,yj->yi", zero, v)
        for mat in ay:
            dv = spectral_dy(v, self.ygrid, axis=0)
            out = out + np.einsum("yij,yj->yi", mat, dv)
        return out


def boundary_operator_from_cone(op, p: complex, ygrid: YGrid) -> BoundaryOperator:
    """Boundary operator with zeroth-order part (-p) A(t,0,y) + B(t,0,y).

    Exact-zero scalar factors are dropped by the coefficient algebra, so
    p = 0 yields bitwise the plain B(t,0,y) of the interior equation.
    """
    a0 = op.taylor_coeff("a", 0)
    b0 = op.taylor_coeff("b", 0)
    zero = a0.scale(-p) + b0
    ay = [op.taylor_coeff(f"ay{l}", 0) for l in range(op.d)]
    return BoundaryOperator(op.N, ygrid, ay, zero)


def ssp_rk3_stage_times(t: float, dt: float):
    return (t, t + dt, t + 0.5 * dt)


def ssp_rk3_step(v: np.ndarray, t: float, dt: float, rhs, step: int):
    """One SSP-RK3 step; rhs(t, v, step, stage) -> dv/dt.

    Returns (v_next, stage1_state, stage2_state); the stage states are
    the intermediate solution values at t + dt and t + dt/2.
    """
    y1 = v + dt * rhs(t, v, step, 0)
    y2 = 0.75 * v + 0.25 * (y1 + dt * rhs(t + dt, y1, step, 1))
    v3 = v / 3.0 + (2.0 / 3.0) * (y2 + dt * rhs(t + 0.5 * dt, y2, step, 2))
    return v3, y1, y2


@dataclass
class StageSeries:
    """Accepted states plus RK stage states of one evolved field."""

    times: np.ndarray          # (n_steps + 1,)
    states: np.ndarray         # (n_steps + 1, ...) accepted solution
    stage1: np.ndarray         # (n_steps, ...) state at t_n + dt
    stage2: np.ndarray         # (n_steps, ...) state at t_n + dt/2

    def at_stage(self, step: int, stage: int) -> np.ndarray:
        if stage == 0:
            return self.states[step]
        return self.stage1[step] if stage == 1 else self.stage2[step]


def integrate_boundary_system(bop: BoundaryOperator, v0: np.ndarray,
                              forcing, n_steps: int, dt: float,
                              t0: float = 0.0, coupling=None) -> StageSeries:
    """Integrate d_t v + L v = forcing + coupling with SSP-RK3.

    forcing(t) -> (ny, N) or None; coupling(t, step, stage) -> (ny, N)
    or None (reads previously solved traces at the matching stage).
    """
    v = np.array(v0, dtype=complex)
    shape = (n_steps + 1,) + v.shape
    series = StageSeries(
        times=t0 + dt * np.arange(n_steps + 1),
        states=np.empty(shape, dtype=complex),
        stage1=np.empty((n_steps,) + v.shape, dtype=complex),
        stage2=np.empty((n_steps,) + v.shape, dtype=complex),
    )
    series.states[0] = v

    def rhs(t, state, step, stage):
        out = -bop.apply(t, state)
        if forcing is not None:
            out = out + forcing(t)
        if coupling is not None:
            extra = coupling(t, step, stage)
            if extra is not None:
                out = out + extra
        return out

    for n in range(n_steps):
        t = t0 + n * dt
        v, y1, y2 = ssp_rk3_step(v, t, dt, rhs, n)
        series.states[n + 1] = v
        series.stage1[n] = y1
        series.stage2[n] = y2
        if n % 16 == 0 and not np.all(np.isfinite(v)):
            raise NonfiniteStateError(f"boundary state non-finite at step {n}")
    if not np.all(np.isfinite(v)):
        raise NonfiniteStateError("boundary state non-finite at final step")
    return series
