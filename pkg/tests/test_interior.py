import numpy as np
import pytest

from charflow import boundary, interior
from charflow import operators as ops
from charflow.coeffs import CoeffExpr
from charflow.cutoffs import phi
from charflow.errors import CFLViolationError, ShapeMismatchError
from charflow.grids import SpaceGrid, YGrid, spectral_dy


def d0_grid(nx=64):
    return SpaceGrid(nx, 2.0, 6.0, YGrid(0))


def d1_grid(nx=48, ny=16):
    return SpaceGrid(nx, 2.0, 6.0, YGrid(1, ny))


def test_rhs_kills_constants():
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[0.8]]))
    g = d0_grid()
    solver = interior.InteriorSolver(op, g)
    u = np.full((g.n_x + 1, 1, 1), 2.5 + 0j)
    rhs = solver.semidiscrete_rhs(u, 0.0)
    assert np.max(np.abs(rhs)) == 0.0


def test_rhs_row0_is_boundary_operator():
    # at x = 0 the degenerate term vanishes; the row must equal
    # f - sum A_j d_j u - B u computed on the row alone
    rng = np.random.default_rng(0)
    A = np.array([[0.6, 0.1], [0.1, 0.2]])
    Ay = np.array([[0.4, 0.0], [0.0, -0.5]])
    B = np.array([[0.1, 0.3], [-0.2, 0.6]])
    op = ops.constant_operator(2, 1, 0.0, 1.0, A, Ay=Ay, B=B, symmetric=True)
    g = d1_grid()
    solver = interior.InteriorSolver(op, g)
    u = rng.normal(size=(g.n_x + 1, 16, 2)) + 1j * rng.normal(size=(g.n_x + 1, 16, 2))
    f = rng.normal(size=u.shape)
    rhs = solver.semidiscrete_rhs(u, 0.0, f)
    du0 = spectral_dy(u[0], YGrid(1, 16), axis=0)
    want = f[0] - np.einsum("ij,yj->yi", Ay, du0) - np.einsum("ij,yj->yi", B, u[0])
    assert np.max(np.abs(rhs[0] - want)) < 1e-12


def test_rhs_shape_mismatch():
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[0.8]]))
    solver = interior.InteriorSolver(op, d0_grid())
    with pytest.raises(ShapeMismatchError):
        solver.semidiscrete_rhs(np.zeros((5, 1, 1), complex), 0.0)


def test_step_zero_data_stays_zero():
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[1.0]]), B=np.array([[0.4]]))
    g = d0_grid()
    solver = interior.InteriorSolver(op, g)
    fld = interior.GridField(np.zeros((g.n_x + 1, 1, 1), complex), 0.0)
    out = solver.step(fld, 1e-3)
    assert np.array_equal(out.values, fld.values)


def test_step_cfl_violation():
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[1.0]]))
    g = d0_grid()
    solver = interior.InteriorSolver(op, g)
    fld = interior.GridField(np.zeros((g.n_x + 1, 1, 1), complex), 0.0)
    dt_max = solver.admissible_dt(1.0)
    with pytest.raises(CFLViolationError):
        solver.step(fld, 10.0 * dt_max)


def test_rk3_order_on_boundary_ode():
    # d = 0, A_j absent: the x = 0 row obeys du/dt = -b u exactly
    b = 0.7
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[0.5]]),
                               B=np.array([[b]]), symmetric=True)
    g = d0_grid(32)
    errs = []
    for n in (20, 40, 80):
        solver = interior.InteriorSolver(op, g)
        fld = interior.GridField(np.ones((g.n_x + 1, 1, 1), complex), 0.0)
        dt = 1.0 / n
        for _ in range(n):
            fld = solver.step(fld, dt)
        errs.append(abs(fld.values[0, 0, 0] - np.exp(-b)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 2.7), (errs, orders)


def test_solve_transport_matches_characteristics():
    # du/dt + a x du/dx = 0, u0 = phi(x) x: exact u(t,x) = u0(x e^{-at});
    # the solver must match to scheme order under refinement
    a = 1.0
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[a]]), symmetric=True)
    errs = []
    for nx in (96, 192, 384):
        g = d0_grid(nx)
        x = g.x_nodes
        u0 = (phi(x) * x)[:, None, None].astype(complex)
        snaps, _ = interior.solve(op, g, u0, None, None, T=1.0,
                                  energy_every=10 ** 9)
        xe = x * np.exp(-a)
        exact = phi(xe) * xe
        errs.append(np.sqrt(
            np.sum(g.x_weights * np.abs(snaps[-1].values[:, 0, 0] - exact) ** 2)
            / np.sum(g.x_weights * exact ** 2)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert errs[-1] < 1e-3
    assert np.min(orders) > 1.7, (errs, orders)


def test_solve_linearity():
    rng = np.random.default_rng(1)
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[0.7]]),
                               B=np.array([[0.2]]), symmetric=True)
    g = d0_grid(32)
    x = g.x_nodes
    shape = (g.n_x + 1, 1, 1)
    u0a = (phi(x) * x)[:, None, None].astype(complex)
    u0b = (phi(2 * x) * x ** 2)[:, None, None].astype(complex)
    al, be = 1.3, -0.4 + 0.2j

    def run(u0):
        snaps, _ = interior.solve(op, g, u0, None, 0.01, T=0.2,
                                  energy_every=10 ** 9)
        return snaps[-1].values

    lhs = run(al * u0a + be * u0b)
    rhs = al * run(u0a) + be * run(u0b)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_energy_verdict_trivial():
    log = interior.EnergyLog(delta=0.0)
    log.record(0.0, 0.0, 0.0)
    log.record(1.0, 0.0, 0.0)
    v = interior.energy_verdict(log)
    assert v["trivial"] and v["pass"]


def test_energy_verdict_groenwall_bound():
    # scalar with B = b > 0, f = 0: |u(t)| <= |u(0)|, so C_fit <= e^{|b|T}
    b = 0.4
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[0.5]]),
                               B=np.array([[b]]), symmetric=True)
    g = d0_grid(48)
    u0 = (phi(g.x_nodes) * g.x_nodes)[:, None, None].astype(complex)
    _, log = interior.solve(op, g, u0, None, None, T=1.0)
    v = interior.energy_verdict(log)
    assert v["C_fit"] <= np.exp(b * 1.0) * 1.01
    assert v["pass"]


def test_tangency_zero_seed_exact():
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[1.0]]), symmetric=True)
    rep = interior.trace_characteristics(op, [0.0], (0.0, 2.0))
    assert rep["max_abs_x_from_zero_seeds"] <= 1e-12


def test_characteristic_exponential_growth():
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[1.0]]), symmetric=True)
    rep = interior.trace_characteristics(op, [1.0], (0.0, 1.0), n_steps=200)
    x_end = rep["curves"][0]["x"][-1]
    assert abs(x_end - np.e) < 1e-8


def test_positive_seeds_stay_positive():
    op = ops.constant_operator(1, 0, 0.0, 1.0, np.array([[-1.5]]), symmetric=True)
    rep = interior.trace_characteristics(op, [1e-3, 0.5], (0.0, 2.0))
    for c in rep["curves"]:
        assert np.min(c["x"]) > 0.0


def test_boundary_autonomy_bitwise():
    # x = 0 row of the interior scheme == standalone boundary solve, step
    # by step, including y-dependent coefficients and forcing
    N = 2
    a_tay = [CoeffExpr.const(np.array([[0.8, 0.2], [0.2, 0.3]])),
             CoeffExpr.const(np.array([[0.3, -0.1], [-0.1, 0.5]]))]
    ay = [[CoeffExpr.const(np.array([[0.6, 0.15], [0.15, -0.4]]))
           + CoeffExpr.cos(1, 0.2 * np.eye(N))]]
    b_tay = [CoeffExpr.const(np.array([[0.1, 0.05], [-0.3, 0.2]]))
             + CoeffExpr.sin(2, 0.1 * np.eye(N))]
    op = ops.ConeOperator(N, 1, 0.0, 1.0, a_tay, ay, b_tay, symmetric=True)
    g = d1_grid(40, 16)
    rng = np.random.default_rng(3)
    u0 = (rng.normal(size=(g.n_x + 1, 16, N))
          * np.exp(-g.x_nodes)[:, None, None]).astype(complex)
    frow = (rng.normal(size=(16, N)) + 1j * rng.normal(size=(16, N)))

    def forcing(t):
        f = np.zeros((g.n_x + 1, 16, N), complex)
        f[0] = (1.0 + 0.5 * t) * frow
        return f

    solver = interior.InteriorSolver(op, g)
    dt_max = solver.admissible_dt(0.4)
    n = max(1, int(np.ceil(0.4 / dt_max)))
    dt = 0.4 / n
    fld = interior.GridField(u0.copy(), 0.0)
    rows = [fld.values[0].copy()]
    for i in range(n):
        fld = solver.step(interior.GridField(fld.values, i * dt), dt, forcing,
                          dt_max=dt_max)
        rows.append(fld.values[0].copy())

    bop = boundary.boundary_operator_from_cone(op, 0.0, g.ygrid)
    series = boundary.integrate_boundary_system(
        bop, u0[0].copy(), lambda t: (1.0 + 0.5 * t) * frow, n, dt)
    for i in range(n + 1):
        assert np.array_equal(rows[i], series.states[i]), i


def test_norm_monotone_for_skew_conservative_case():
    from charflow.scenarios import builtin_scenario
    sc = builtin_scenario("unitary_d1", nx=64, ny=16)
    from charflow.run import solve_scenario
    res = solve_scenario(sc)
    norms = res["log"].u_norms
    assert max(norms) <= norms[0] * (1.0 + 5e-3)
