import json
import subprocess
import sys

import numpy as np
import pytest

from charflow import manufactured, scenarios
from charflow.coeffs import CoeffExpr
from charflow.errors import ConfigError, ValidationError


ALL_BUILTINS = ["taylor_d0", "power_d0", "log_pair_d0", "taylor_d1_symmetric",
                "strict_d1", "unitary_d1", "zero_d0"]


@pytest.mark.parametrize("name", ALL_BUILTINS)
def test_builtins_validate(name):
    sc = scenarios.builtin_scenario(name)
    assert sc.name == name
    assert sc.op.N >= 1


def test_negcontrol_variants():
    sc = scenarios.builtin_scenario("negcontrol_log_pair_d0")
    assert sc.flip_cascade_sign
    sc = scenarios.builtin_scenario("negcontrol_symbols")
    assert sc.perturb_adjoint


def test_unknown_builtin():
    with pytest.raises(ConfigError):
        scenarios.builtin_scenario("nope")


def test_generator_outside_type_rejected():
    sc = scenarios.builtin_scenario("log_pair_d0")
    bad = scenarios.DataSpec(1, [scenarios.AsymGenerator(
        -0.25 + 0j, 0, CoeffExpr.const([1.0]))])
    from dataclasses import replace
    with pytest.raises(ValidationError):
        scenarios.validate_scenario(replace(sc, u0=bad))


def test_flat_term_inside_window_rejected():
    sc = scenarios.builtin_scenario("log_pair_d0")
    bad = scenarios.DataSpec(1, flats=[scenarios.FlatTerm(
        0.3, CoeffExpr.const([1.0]))])  # x^0.3: trace window reaches -1
    from dataclasses import replace
    with pytest.raises(ValidationError):
        scenarios.validate_scenario(replace(sc, u0=bad))


def test_real_mode_requires_conjugation_closed_type():
    from charflow import asymtypes as at
    from dataclasses import replace
    sc = scenarios.builtin_scenario("log_pair_d0")
    P = at.validate({-0.5 + 0.25j: 1}, 0.0, 1.4)
    u0 = scenarios.DataSpec(1, [scenarios.AsymGenerator(
        -0.5 + 0.25j, 0, CoeffExpr.const([1.0]))])
    with pytest.raises(ValidationError):
        scenarios.validate_scenario(replace(sc, P=P, u0=u0, real_mode=True))


def test_manufactured_zero_generators():
    sc = scenarios.builtin_scenario("zero_d0")
    man = manufactured.manufactured(sc)
    assert np.array_equal(man["u0"], np.zeros_like(man["u0"]))
    assert man["forcing"] is None


def test_manufactured_conjugate_pair_real_data():
    from charflow import asymtypes as at
    op = scenarios.builtin_scenario("log_pair_d0").op
    P = at.validate({-0.5 + 0.5j: 1, -0.5 - 0.5j: 1}, 0.0, 1.4)
    gens = [
        scenarios.AsymGenerator(-0.5 + 0.5j, 0, CoeffExpr.const([0.5 - 0.25j])),
        scenarios.AsymGenerator(-0.5 - 0.5j, 0, CoeffExpr.const([0.5 + 0.25j])),
    ]
    sc = scenarios.Scenario(
        name="conj", op=op, P=P,
        grid=scenarios.SpaceGrid(64, 2.0, 6.0, scenarios.YGrid(0)),
        u0=scenarios.DataSpec(1, gens), T=0.3)
    sc = scenarios.validate_scenario(sc)
    u0 = sc.u0_values()
    assert np.max(np.abs(u0.imag)) < 1e-14


def test_manufactured_exact_dilation_d0_matches_trace_formula():
    sc = scenarios.builtin_scenario("power_d0")
    man = manufactured.manufactured(sc)
    assert man["family"] == "dilation_d0"
    sol = man["exact"]
    got = sol.trace((-0.5 + 0j, 0), 0.8)[0, 0]
    want = np.exp((-0.5 * 1.0 - 0.3) * 0.8) * 1.0
    assert abs(got - want) < 1e-14


def test_manufactured_exact_dilation_d1_solves_pde():
    # the closed form must satisfy the PDE: check via small finite diffs
    # (the x-derivative is the second-order FD oracle's accuracy limit)
    sc = scenarios.builtin_scenario("unitary_d1", nx=384, ny=8)
    sol = manufactured.exact_solution(sc)
    g = sc.grid
    t0, dt = 0.4, 1e-5
    up = sol.interior(t0 + dt, g)
    um = sol.interior(t0 - dt, g)
    u = sol.interior(t0, g)
    dudt = (up - um) / (2 * dt)
    from charflow.grids import spectral_dy
    x = g.x_nodes
    du_dy = spectral_dy(u, g.ygrid, axis=1)
    dudx = np.gradient(u, x, axis=0, edge_order=2)
    A = sc.op.eval_a(t0, x, g.ygrid.nodes)
    Ay = sc.op.eval_ay(0, t0, x, g.ygrid.nodes)
    B = sc.op.eval_b(t0, x, g.ygrid.nodes)
    resid = dudt + x[:, None, None] * np.einsum("xyij,xyj->xyi", A, dudx) \
        + np.einsum("xyij,xyj->xyi", Ay, du_dy) \
        + np.einsum("xyij,xyj->xyi", B, u)
    # FD x-derivative is the limiting accuracy; interior nodes only
    core = resid[2:-2]
    assert np.max(np.abs(core)) < 5e-3 * max(np.max(np.abs(u)), 1.0)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_config_toml_and_json(tmp_path):
    toml = _write(tmp_path, "a.toml", """
[scenario]
builtin = "log_pair_d0"
T = 0.4

[grid]
n_x = 64

[fit]
window = [0.002, 0.18]
""")
    sc = scenarios.scenario_from_config(toml)
    assert sc.grid.n_x == 64 and sc.horizon == 0.4
    assert sc.fit_window == (0.002, 0.18)
    js = _write(tmp_path, "a.json", json.dumps(
        {"scenario": {"builtin": "zero_d0"}, "grid": {"n_x": 64}}))
    assert scenarios.scenario_from_config(js).name == "zero_d0"


def test_config_malformed(tmp_path):
    bad = _write(tmp_path, "bad.toml", "[scenario\nbuiltin = oops")
    with pytest.raises(ConfigError):
        scenarios.scenario_from_config(bad)
    with pytest.raises(ConfigError):
        scenarios.scenario_from_config(tmp_path / "missing.toml")


def test_config_custom_operator(tmp_path):
    cfg = _write(tmp_path, "c.toml", """
[scenario]
name = "custom_d0"
real_mode = true

[operator]
N = 1
d = 0
delta = 0.0
T = 0.5
symmetric = true
A = [{re = [[1.0]]}]
B = [{re = [[0.3]]}]

[asymptotics]
delta = 0.0
theta = 1.4
entries = [{re = -0.5, im = 0.0, mult = 1}]

[grid]
n_x = 64

[data.u0]
generators = [{re = -0.5, im = 0.0, k = 0, terms = [{re = [1.0]}]}]
""")
    sc = scenarios.scenario_from_config(cfg)
    assert sc.op.N == 1 and sc.exact_family == "dilation_d0"
    assert len(sc.u0.generators) == 1


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "charflow.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def test_cli_zero_data_scenario(tmp_path):
    cfg = _write(tmp_path, "z.toml", '[scenario]\nbuiltin = "zero_d0"\n')
    out = tmp_path / "out"
    r = _cli(["solve", "--config", str(cfg), "--out", str(out)], tmp_path)
    assert r.returncode == 0, r.stderr
    data = np.load(out / "snapshots.npz")
    assert np.array_equal(data["values"], np.zeros_like(data["values"]))
    rep = json.loads((out / "report.json").read_text())
    assert rep["energy"]["trivial"] and rep["energy"]["pass"]


def test_cli_solve_artifacts_and_determinism(tmp_path):
    cfg = _write(tmp_path, "t.toml",
                 '[scenario]\nbuiltin = "taylor_d0"\n[grid]\nn_x = 96\n')
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    r1 = _cli(["solve", "--config", str(cfg), "--out", str(out1)], tmp_path)
    assert r1.returncode == 0, r1.stderr
    # expected artifact shapes
    rep = json.loads((out1 / "report.json").read_text())
    assert "exact_rel_l2_error" in rep and rep["exact_rel_l2_error"] < 5e-2
    data = np.load(out1 / "snapshots.npz")
    assert data["values"].shape[1] == 97
    assert (out1 / "energy.csv").exists() and (out1 / "plot_stub.py").exists()
    head = (out1 / "snapshot_0000.csv").read_text().splitlines()
    assert head[1].split(",")[:2] == ["x", "y"]
    r2 = _cli(["solve", "--config", str(cfg), "--out", str(out2)], tmp_path)
    assert r2.returncode == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert r1.stdout == r2.stdout


def test_cli_traces_artifacts(tmp_path):
    cfg = _write(tmp_path, "t.toml",
                 '[scenario]\nbuiltin = "log_pair_d0"\n[grid]\nn_x = 64\n')
    out = tmp_path / "tr"
    r = _cli(["traces", "--config", str(cfg), "--out", str(out)], tmp_path)
    assert r.returncode == 0, r.stderr
    files = sorted((out / "traces").glob("*.csv"))
    assert len(files) == 2
    rep = json.loads((out / "report.json").read_text())
    assert max(rep["exact_trace_rel_errors"].values()) < 1e-6


def test_cli_malformed_config_exit_2(tmp_path):
    bad = _write(tmp_path, "bad.toml", "[scenario\nbuiltin = oops")
    r = _cli(["solve", "--config", str(bad)], tmp_path)
    assert r.returncode == 2
    rec = json.loads(r.stderr.splitlines()[-1])
    assert rec["exit_code"] == 2


def test_cli_verify_traces_pass_and_negcontrol(tmp_path):
    cfg = _write(tmp_path, "v.toml",
                 '[scenario]\nbuiltin = "log_pair_d0"\n[grid]\nn_x = 96\n')
    r = _cli(["verify-traces", "--config", str(cfg), "--levels", "1"], tmp_path)
    assert r.returncode == 0, r.stderr

    neg = _write(tmp_path, "n.toml",
                 '[scenario]\nbuiltin = "log_pair_d0"\n[grid]\nn_x = 96\n'
                 '[debug]\nflip_cascade_sign = true\n')
    r = _cli(["verify-traces", "--config", str(neg), "--levels", "1"], tmp_path)
    assert r.returncode == 5


def test_cli_verify_traces_empty_type_vacuous(tmp_path):
    cfg = _write(tmp_path, "e.toml", '[scenario]\nbuiltin = "zero_d0"\n')
    r = _cli(["verify-traces", "--config", str(cfg), "--levels", "1"], tmp_path)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["note"].startswith("empty")


def test_cli_convergence_needs_two_levels(tmp_path):
    cfg = _write(tmp_path, "c.toml", '[scenario]\nbuiltin = "power_d0"\n'
                 '[grid]\nn_x = 64\n')
    r = _cli(["convergence", "--config", str(cfg), "--levels", "1"], tmp_path)
    assert r.returncode == 3


def test_cli_convergence_zero_data_flagged(tmp_path):
    cfg = _write(tmp_path, "c0.toml", '[scenario]\nbuiltin = "zero_d0"\n')
    out = tmp_path / "cz"
    r = _cli(["convergence", "--config", str(cfg), "--levels", "2",
              "--out", str(out)], tmp_path)
    assert r.returncode == 0, r.stderr
    rep = json.loads((out / "report.json").read_text())
    assert rep["note"].startswith("zero data")


def test_cli_symbol_check_negative_control(tmp_path):
    cfg = _write(tmp_path, "s.toml",
                 '[scenario]\nbuiltin = "negcontrol_symbols"\n')
    r = _cli(["symbol-check", "--config", str(cfg), "--seed", "7"], tmp_path)
    assert r.returncode == 5
