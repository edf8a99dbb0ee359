import numpy as np
import pytest

from charflow import cutoffs, potentials
from charflow.errors import SingularAtZeroError
from charflow.grids import LogGrid, YGrid


def test_d0_p_minus_one_is_phi2x_times_x():
    g = LogGrid(1e-6, 4.0, 512)
    yg = YGrid(0)
    out = potentials.potential_op(-1.0, 0, np.array([1.0 + 0j]), g.nodes, yg)
    want = cutoffs.phi(2.0 * g.nodes) * g.nodes
    assert np.max(np.abs(out[:, 0] - want)) < 1e-14


def test_zero_profile_gives_zero():
    g = LogGrid(1e-6, 4.0, 128)
    yg = YGrid(1, 8)
    out = potentials.potential_op(-0.5, 1, np.zeros(8), g.nodes, yg)
    assert np.array_equal(out, np.zeros_like(out))


def test_linearity_in_w():
    g = LogGrid(1e-6, 4.0, 256)
    yg = YGrid(1, 16)
    rng = np.random.default_rng(0)
    w1 = rng.normal(size=16) + 1j * rng.normal(size=16)
    w2 = rng.normal(size=16) + 1j * rng.normal(size=16)
    a, b = 1.7, -0.3 + 0.2j
    lhs = potentials.potential_op(-0.5, 1, a * w1 + b * w2, g.nodes, yg)
    rhs = a * potentials.potential_op(-0.5, 1, w1, g.nodes, yg) + \
        b * potentials.potential_op(-0.5, 1, w2, g.nodes, yg)
    assert np.max(np.abs(lhs - rhs)) < 1e-13


def test_translation_commutes():
    # Gamma_pk is a Fourier multiplier construction in y, so shifting w by
    # one grid step shifts the output by one step
    g = LogGrid(1e-6, 4.0, 64)
    yg = YGrid(1, 16)
    rng = np.random.default_rng(1)
    w = rng.normal(size=16)
    direct = potentials.potential_op(-0.7, 0, np.roll(w, 3), g.nodes, yg)
    rolled = np.roll(potentials.potential_op(-0.7, 0, w, g.nodes, yg), 3, axis=1)
    assert np.max(np.abs(direct - rolled)) < 1e-12


def test_leading_coefficient_fit_recovers_w():
    g = LogGrid(1e-8, 4.0, 2048)
    yg = YGrid(1, 16)
    rng = np.random.default_rng(2)
    f = np.zeros(16, complex)
    f[:3] = rng.normal(size=3) + 1j * rng.normal(size=3)
    w = np.fft.ifft(f) * 16
    for (p, k) in ((-0.5 + 0j, 0), (-1.0 + 0.3j, 2)):
        field = potentials.potential_op(p, k, w, g.nodes, yg)
        got = potentials.fit_leading_coefficient(p, k, field, g.nodes, yg,
                                                 window=(1e-6, 1e-3))
        assert np.max(np.abs(got - w)) < 1e-6


def test_values_at_zero():
    x = np.array([0.0, 0.5])
    yg = YGrid(1, 8)
    w = np.cos(yg.nodes)
    # Re p < 0: limit 0
    out = potentials.potential_op(-0.5, 1, w, x, yg)
    assert np.array_equal(out[0], np.zeros_like(out[0]))
    # (p, k) = (0, 0): the raw samples of w, bitwise
    out = potentials.potential_op(0.0, 0, w, x, yg)
    assert np.array_equal(out[0], w.astype(complex))
    # p = 0, k >= 1: genuinely singular
    with pytest.raises(SingularAtZeroError):
        potentials.potential_op(0.0, 1, w, x, yg)


def test_xdx_matches_finite_difference():
    g = LogGrid(1e-7, 4.0, 4096)
    yg = YGrid(1, 8)
    w = np.cos(yg.nodes) + 0.5
    for (p, k) in ((-0.5 + 0j, 0), (-1.5 + 0j, 1)):
        field = potentials.potential_op(p, k, w, g.nodes, yg)
        xdx = potentials.xdx_potential_op(p, k, w, g.nodes, yg)
        h = g.log_step
        fd = np.gradient(field, h, axis=0, edge_order=2)  # d/d(log x) = x d/dx
        core = slice(2, -2)
        # second-order FD across the cutoff transition limits the agreement
        assert np.max(np.abs((xdx - fd)[core])) < 2e-3 * np.max(np.abs(xdx))


def test_flatness_check_cos_mode_bounded():
    rep = potentials.flatness_check(-0.5, 0, np.cos(YGrid(1, 16).nodes),
                                    YGrid(1, 16), s=1.0)
    for eps, rec in rep.items():
        assert rec["bounded"], (eps, rec)


def test_flatness_check_log_power_bounded():
    yg = YGrid(1, 16)
    w = np.exp(1j * yg.nodes)
    rep = potentials.flatness_check(-0.8, 1, w, yg, s=1.0)
    for eps, rec in rep.items():
        assert rec["bounded"], (eps, rec)


def test_flatness_d0_constant_remainder_compactly_supported():
    # d = 0: remainder = (phi(2x) - phi(x)) * x^{-p} log^k x * w lives in
    # [1/4, 1]; check support and finiteness directly
    g = LogGrid(1e-8, 4.0, 1024)
    yg = YGrid(0)
    w = np.array([1.0 + 0j])
    rem = potentials.potential_op(-0.5, 1, w, g.nodes, yg) - \
        potentials.tensor_term(-0.5, 1, w, g.nodes, yg)
    inside = (g.nodes > 0.26) & (g.nodes < 0.99)
    outside = ~((g.nodes >= 0.25) & (g.nodes <= 1.0))
    assert np.max(np.abs(rem[outside])) == 0.0
    assert np.any(np.abs(rem[inside]) > 0)
    assert np.all(np.isfinite(rem))
