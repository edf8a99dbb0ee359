import numpy as np
import pytest

from charflow.coeffs import CoeffExpr, expr_from_terms


def _rand_expr(rng, N=2, d=1):
    acc = CoeffExpr.zero((N, N))
    for _ in range(3):
        m = int(rng.integers(0, 3)) if d else 0
        mat = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        acc = acc + CoeffExpr({(int(rng.integers(0, 2)), m): mat}, (N, N))
    return acc


def test_eval_matches_direct_formula():
    mat = np.array([[1.0, 2.0], [0.0, -1.0]])
    e = CoeffExpr.cos(2, mat) + CoeffExpr.tpoly([np.zeros((2, 2)), mat])
    y = np.linspace(0, 2 * np.pi, 7)[:-1]
    t = 0.7
    got = e.eval(t, y)
    want = np.cos(2 * y)[:, None, None] * mat + t * mat
    assert np.max(np.abs(got - want)) < 1e-14


def test_product_is_pointwise_product():
    rng = np.random.default_rng(1)
    a, b = _rand_expr(rng), _rand_expr(rng)
    y = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    t = 0.3
    got = a.matmul(b).eval(t, y)
    want = np.einsum("yij,yjk->yik", a.eval(t, y), b.eval(t, y))
    assert np.max(np.abs(got - want)) < 1e-13


def test_dy_matches_spectral_derivative():
    rng = np.random.default_rng(2)
    a = _rand_expr(rng)
    y = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    vals = a.eval(0.4, y)
    dvals = a.dy().eval(0.4, y)
    spec = np.fft.ifft(
        1j * np.fft.fftfreq(32, 1 / 32)[:, None, None] * np.fft.fft(vals, axis=0),
        axis=0)
    assert np.max(np.abs(dvals - spec)) < 1e-12


def test_conj_transpose_pointwise():
    rng = np.random.default_rng(3)
    a = _rand_expr(rng)
    y = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    got = a.conj_transpose().eval(0.9, y)
    want = np.conj(np.swapaxes(a.eval(0.9, y), -1, -2))
    assert np.max(np.abs(got - want)) < 1e-14


def test_hermitian_and_real_detection():
    sym = CoeffExpr.cos(1, np.array([[1.0, 2.0], [2.0, -1.0]]))
    assert sym.is_hermitian()
    assert sym.is_real_valued()
    herm = CoeffExpr.const(np.array([[1.0, 1j], [-1j, 2.0]]))
    assert herm.is_hermitian()
    assert not herm.is_real_valued()
    skew = CoeffExpr.sin(1, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert skew.is_hermitian()  # sin(y) * symmetric real is Hermitian-valued


def test_scale_by_exact_zero_drops_terms():
    a = CoeffExpr.const(np.eye(2))
    assert a.scale(0.0).is_zero()
    # adding the dropped term leaves the other summand bitwise intact
    b = CoeffExpr.const(np.array([[1.0, 0.5], [0.25, -2.0]]))
    s = a.scale(-0.0) + b
    assert np.array_equal(s.terms[(0, 0)], b.terms[(0, 0)])


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        CoeffExpr({(0, 0): np.eye(2), (1, 0): np.zeros(3)}, (2, 2))


def test_expr_from_terms():
    e = expr_from_terms((1,), [
        {"tpow": 1, "m": 2, "kind": "sin", "value": [0.5]},
        {"kind": "cos", "m": 0, "value": [1.0]},
    ])
    y = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    got = e.eval(2.0, y)[:, 0]
    want = 2.0 * np.sin(2 * y) * 0.5 + 1.0
    assert np.max(np.abs(got - want)) < 1e-14
