import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from polyinv import geometry as geo
from polyinv import raytransform as rt
from polyinv import recovery as rc

LAMS = np.array([-0.5, -0.2, 0.0, 0.3, 0.5])


@pytest.fixture(scope="module")
def flat_product():
    return geo.product_by_name("euclidean_disk")


@pytest.fixture(scope="module")
def wide_product():
    return geo.product_by_name("euclidean_disk", x1_range=(-8.0, 8.0))


@pytest.fixture(scope="module")
def plan(flat_product):
    m = flat_product.base
    return rt.ray_plan(m, geo.influx_grid(m, 32, 16), n_points=64, panels=2)


def _w(xp):
    return np.cos(xp[..., 0]) + xp[..., 1] ** 2


def _gaussian_x1_field(product):
    def comps(X):
        out = np.zeros(X.shape, dtype=complex)
        out[..., 0] = np.exp(-X[..., 0] ** 2) * _w(X[..., 1:])
        return out
    return rc.VectorFieldM(comps, product, compact=False)


# -- partial Fourier slices ------------------------------------------------

def test_gaussian_slice(wide_product):
    X = _gaussian_x1_field(wide_product)
    xp = np.array([[0.1, 0.2], [-0.4, 0.3]])
    s = rc.partial_fourier(X, 1.0)
    np.testing.assert_allclose(s.f(xp), np.sqrt(np.pi) * np.exp(-0.25) * _w(xp), atol=1e-12)
    np.testing.assert_allclose(s.alpha(xp), 0, atol=1e-15)


def test_zero_frequency_slice(wide_product):
    def comps(X):
        out = np.zeros(X.shape, dtype=complex)
        out[..., 0] = np.exp(-X[..., 0] ** 2) * (1 + np.sin(X[..., 0])) * X[..., 1]
        return out
    X = rc.VectorFieldM(comps, wide_product, compact=False)
    xp = np.array([[0.5, 0.0]])
    oracle = quad(lambda t: np.exp(-t * t) * (1 + np.sin(t)) * 0.5, -8, 8, epsabs=1e-14)[0]
    assert rc.partial_fourier(X, 0.0).f(xp)[0] == pytest.approx(oracle, abs=1e-12)


def test_slice_quadrature_halving(flat_product):
    phi, dphi, sup, rad = rc.separable_potential(1)
    X = rc.VectorFieldM.gradient(dphi, flat_product, x1_support=sup, radius=rad)
    xp = np.random.default_rng(0).uniform(-0.5, 0.5, (10, 2))
    a = rc.fourier_table(X, LAMS, xp, n_quad=64)
    b = rc.fourier_table(X, LAMS, xp, n_quad=128, panels=8)
    assert np.max(np.abs(a - b)) < 1e-12 * max(1.0, np.max(np.abs(b)))


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 20))
def test_slice_linear_and_conjugate_symmetric(lam, a, b, seed):
    product = geo.product_by_name("euclidean_disk")
    f1, sup1, r1 = rc.rotational_form()
    _, dphi, sup, rad = rc.separable_potential(seed)
    X1 = rc.VectorFieldM.from_flat(f1, product, x1_support=(-0.7, 0.7), radius=1.0)
    X2 = rc.VectorFieldM.from_flat(lambda X: dphi(X).real + 0j, product, x1_support=(-0.7, 0.7), radius=1.0)
    comb = rc.VectorFieldM(lambda X: a * X1(X) + b * X2(X), product, x1_support=(-0.7, 0.7), radius=1.0)
    xp = np.array([[0.1, -0.2], [0.3, 0.3]])
    t1, t2, tc = (rc.fourier_table(Z, [lam, -lam], xp) for Z in (X1, X2, comb))
    np.testing.assert_allclose(tc, a * t1 + b * t2, atol=1e-12)
    np.testing.assert_allclose(t2[1], np.conj(t2[0]), atol=1e-13)


def test_support_is_checked(flat_product):
    X = rc.VectorFieldM(lambda X: np.ones(X.shape, complex), flat_product, x1_support=(-0.5, 0.5), radius=0.5)
    with pytest.raises(rc.SupportError):
        rc.partial_fourier(X, 0.1)


# -- gauge pipeline --------------------------------------------------------

def test_gauge_zero_potential(flat_product, plan):
    res = rc.gauge_vanishing_check(lambda X: np.zeros(X.shape, complex), flat_product, LAMS, plan=plan)
    assert res.max == 0.0


@pytest.mark.parametrize("seed", [0, 1])
def test_gauge_gradient_vanishes(flat_product, plan, seed):
    _, dphi, sup, rad = rc.separable_potential(seed)
    res = rc.gauge_vanishing_check(dphi, flat_product, LAMS, x1_support=sup, radius=rad, plan=plan)
    assert res.max < 1e-7


def test_gauge_on_curved_product():
    product = geo.product_by_name("conformal_bump")
    _, dphi, sup, rad = rc.separable_potential(2)
    res = rc.gauge_vanishing_check(dphi, product, [0.0, 0.4], x1_support=sup, radius=rad)
    assert res.max < 1e-7


def test_gauge_control(flat_product, plan):
    form, sup, rad = rc.rotational_form()
    X = rc.VectorFieldM.from_flat(form, flat_product, x1_support=sup, radius=rad)
    assert rc.ray_identity_max(X, LAMS, plan=plan).max > 1e-2


def test_gauge_support_precondition(flat_product):
    with pytest.raises(rc.PreconditionError):
        rc.gauge_vanishing_check(lambda X: np.ones(X.shape, complex), flat_product, [0.0],
                                 x1_support=(-0.5, 0.5), radius=0.5)


def test_closedness(flat_product):
    _, dphi, sup, rad = rc.separable_potential(3)
    X = rc.VectorFieldM.gradient(dphi, flat_product, x1_support=sup, radius=rad)
    assert rc.closedness_check(X, LAMS).max < 1e-6
    form, sup, rad = rc.rotational_form()
    bad = rc.closedness_check(rc.VectorFieldM.from_flat(form, flat_product, x1_support=sup, radius=rad), LAMS)
    assert bad.transversal > 1e-1


def test_potential_of_exact_form():
    omega = lambda X: np.stack([X[..., 1], X[..., 0]], axis=-1)  # noqa: E731  d(x1 x2)
    base = np.array([0.3, -0.2])
    pts = np.random.default_rng(0).uniform(-1, 1, (8, 2))
    pot = rc.integrate_potential(omega, base, pts)
    np.testing.assert_allclose(pot(pts), pts[:, 0] * pts[:, 1] - base[0] * base[1], atol=1e-14)


def test_potential_round_trip(flat_product):
    phi, dphi, _, _ = rc.separable_potential(4)
    base = np.array([-0.95, 0.0, 0.0])
    pts = np.random.default_rng(1).uniform(-0.6, 0.6, (12, 3))
    pot = rc.integrate_potential(dphi, base, pts)
    shift = pot(pts) - phi(pts)
    assert np.ptp(shift.real) + np.ptp(shift.imag) < 1e-10
    assert pot.differential_defect(pts) < 1e-8


def test_potential_rejects_non_closed_form():
    form, _, _ = rc.rotational_form()
    pts = np.random.default_rng(2).uniform(-0.4, 0.4, (8, 3))
    with pytest.raises(rc.NonClosedError):
        rc.integrate_potential(form, np.array([-0.95, 0.0, 0.0]), pts)


# -- potential slices ------------------------------------------------------

def _one(X):
    return np.ones(np.shape(X)[:-1])


def test_q_slice_equal_potentials():
    Q = rc.q_slice(lambda X: np.zeros(np.shape(X)[:-1]), _one, 0.3)
    assert np.all(Q(np.array([[0.1, 0.2]])) == 0)


@pytest.mark.parametrize("lam", [0.0, 0.4, -1.0])
def test_q_slice_gaussian(lam):
    qd = lambda X: np.exp(-X[..., 0] ** 2) * _w(X[..., 1:])  # noqa: E731
    Q = rc.q_slice(qd, _one, lam, x1_support=(-9, 9))
    xp = np.array([[0.2, 0.1], [-0.5, 0.4]])
    np.testing.assert_allclose(Q(xp), np.sqrt(np.pi) * np.exp(-lam ** 2 / 4) * _w(xp), atol=1e-12)


def test_q_slice_analytic_in_lambda():
    qd = lambda X: np.exp(-X[..., 0] ** 2) * (1 + X[..., 0]) * _w(X[..., 1:])  # noqa: E731
    xp = np.array([[0.2, 0.1]])
    lam, h = 0.3, 1e-3
    fd = (rc.q_slice(qd, _one, lam + h, (-9, 9))(xp) - rc.q_slice(qd, _one, lam - h, (-9, 9))(xp)) / (2 * h)
    exact = rc.q_slice(lambda X: 1j * X[..., 0] * qd(X), _one, lam, (-9, 9))(xp)
    np.testing.assert_allclose(fd, exact, atol=1e-6)


def test_q_slice_support_check():
    with pytest.raises(rc.SupportError):
        rc.q_slice(lambda X: 1 + 0 * X[..., 0], _one, 0.0)


# -- Green identity --------------------------------------------------------

U = rc.cutoff_bump((0.1, -0.2), 0.7, 12, (1.0, 0.5, -0.3))
V = rc.cutoff_bump((-0.15, 0.1), 0.75, 12, (0.5, 0.2, 0.7))


def _X(x):
    return np.stack([0.3 + 0.2 * x[..., 1], -0.1 + 0.4 * x[..., 0] ** 2], axis=-1) + 0j


def _q(x):
    return 1 + x[..., 0] * x[..., 1] + 0j


def test_green_symmetric_case():
    flat = geo.metric_by_name("euclidean_disk")
    zero = lambda x: np.zeros(x.shape, complex)  # noqa: E731
    assert rc.green_identity_check(flat, U, U, zero, lambda x: _q(x).real, 2, 65).defect < 1e-9


def test_green_flat_is_exact_summation_by_parts():
    # centered differences with zero padding are skew-adjoint on the flat grid
    flat = geo.metric_by_name("euclidean_disk")
    for n in (65, 129):
        assert rc.green_identity_check(flat, U, V, _X, _q, 2, n).defect < 1e-13


def test_green_curved_fourth_order():
    metric = geo.metric_by_name("conformal_bump")
    d = [rc.green_identity_check(metric, U, V, _X, _q, 2, n).defect for n in (65, 129, 257)]
    assert d[1] < 1e-6
    assert d[0] / d[1] > 12 and d[1] / d[2] > 12, d


@settings(max_examples=10, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_green_q_shift(re, im):
    flat = geo.metric_by_name("euclidean_disk")
    c = complex(re, im)
    base = rc.green_identity_check(flat, U, V, _X, _q, 2, 65)
    shifted = rc.green_identity_check(flat, U, V, _X, lambda x: _q(x) + c, 2, 65)
    ops = rc.GridOps.build(flat, 65)
    uv = ops.integrate(U(ops.points) * V(ops.points))
    scale = abs(base.lhs) + abs(c * uv)
    assert abs(shifted.lhs - base.lhs - c * uv) < 1e-12 * scale
    assert abs(shifted.rhs - base.rhs - c * uv) < 1e-12 * scale


def test_green_trace_precondition():
    flat = geo.metric_by_name("euclidean_disk")
    wide = rc.cutoff_bump((0.0, 0.0), 1.3)
    with pytest.raises(rc.PreconditionError):
        rc.green_identity_check(flat, wide, V, _X, _q, 2, 33)
