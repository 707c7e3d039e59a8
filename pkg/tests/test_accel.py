import numpy as np
import pytest

from polyinv import _accel

pytestmark = pytest.mark.skipif(_accel.numba is None, reason="numba not importable")


@pytest.fixture
def both():
    def run(fn):
        prev = _accel.numba_enabled()
        try:
            _accel.set_backend("numba")
            a = fn()
            _accel.set_backend("numpy")
            b = fn()
        finally:
            _accel.set_backend("numba" if prev else "numpy")
        return a, b
    return run


def test_cauchy_far_sum_agrees(both):
    rng = np.random.default_rng(0)
    tx, ty = rng.uniform(-0.5, 0.5, 50), rng.uniform(1, 2, 50)
    sx, sy = rng.uniform(-1, 1, 900), rng.uniform(0.5, 2.5, 900)
    wf = rng.normal(size=900) + 1j * rng.normal(size=900)
    delta = np.full(50, 0.3)
    a, b = both(lambda: _accel.cauchy_far_sum(tx, ty, delta, sx, sy, wf))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_cauchy_far_sum_weights():
    # sources inside and outside the cutoff radius, plus one exactly on the target
    t = 0.0 + 1.0j
    z = np.array([0.01 + 1.0j, -0.02 + 1.03j, 0.5 + 1.2j, t])
    w = np.array([1.0, 2.0 - 1j, 0.5j, 3.0])
    chi = np.clip(1 - (np.abs(z - t) / 0.3) ** 2, 0, None) ** _accel.CUTOFF_POWER
    expected = np.sum(np.where(z != t, w * (1 - chi) / np.where(z != t, z - t, 1), 0))
    for backend in ("numba", "numpy"):
        _accel.set_backend(backend)
        out = _accel.cauchy_far_sum([t.real], [t.imag], 0.3, z.real, z.imag, w)
        assert out[0] == pytest.approx(expected, rel=1e-13)
    _accel.set_backend("numba")


def test_interp_cubic_agrees_and_reproduces_cubics(both):
    ns, nphi = 40, 16
    s = np.arange(ns) * 2 * np.pi / ns
    phi = 0.5 * np.pi * np.polynomial.legendre.leggauss(nphi)[0]
    S, P = np.meshgrid(s, phi, indexing="ij")
    vals = (np.cos(S) + 1j * np.sin(2 * S)) * (1 + P - 0.3 * P ** 3)
    rng = np.random.default_rng(1)
    qs, qp = rng.uniform(0, 2 * np.pi, 500), rng.uniform(phi[1], phi[-2], 500)
    a, b = both(lambda: _accel.interp_cubic(vals, 0.0, s[1], phi, qs, qp))
    np.testing.assert_allclose(a, b, atol=1e-13)
    exact = (np.cos(qs) + 1j * np.sin(2 * qs)) * (1 + qp - 0.3 * qp ** 3)
    assert np.max(np.abs(a - exact)) < 1e-3


def test_geodesic_accel_agrees(both):
    rng = np.random.default_rng(2)
    n = 300
    A = rng.normal(size=(n, 2, 2))
    g = A @ A.transpose(0, 2, 1) + np.eye(2)
    dg = rng.normal(size=(n, 2, 2, 2))
    dg = 0.5 * (dg + dg.transpose(0, 1, 3, 2))
    v = rng.normal(size=(n, 2))
    a, b = both(lambda: _accel.geodesic_accel(g, dg, v))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_geodesic_accel_flat_is_zero():
    n = 5
    out = _accel.geodesic_accel(np.tile(np.eye(2), (n, 1, 1)), np.zeros((n, 2, 2, 2)), np.ones((n, 2)))
    assert np.all(out == 0)


def test_backend_names():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


@pytest.mark.parametrize("value, expected", [("1", "False"), ("0", "True")])
def test_environment_switch(value, expected):
    import os
    import subprocess
    import sys
    env = dict(os.environ, POLYINV_DISABLE_NUMBA=value)
    out = subprocess.run([sys.executable, "-c", "from polyinv import _accel; print(_accel.numba_enabled())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
