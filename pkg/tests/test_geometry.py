import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from polyinv import geometry as geo
from polyinv.geometry import gallery

X, Y = sp.symbols("x y", real=True)


def test_flat_christoffels_vanish():
    m = geo.metric_by_name("euclidean_disk")
    pts = np.array([[0.1, 0.2], [-0.5, 0.3], [0.0, 0.0]])
    assert np.all(geo.christoffels(m, pts) == 0)


def test_exponential_conformal_christoffels():
    # g = e^{2x} I: Γ^1_11 = 1, Γ^1_22 = -1, Γ^2_12 = Γ^2_21 = 1, the rest vanish
    m = gallery.exponential_conformal()
    G = geo.christoffels(m, np.array([[0.3, -0.2]]))[0]
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = 1
    expected[0, 1, 1] = -1
    expected[1, 0, 1] = expected[1, 1, 0] = 1
    np.testing.assert_allclose(G, expected, atol=1e-14)


def test_christoffels_match_finite_differences():
    base = geo.metric_by_name("conformal_bump")
    fd = geo.MetricField2D.from_callable("fd", base.g0)
    pts = np.array([[0.2, -0.1], [-0.4, 0.5]])
    np.testing.assert_allclose(geo.christoffels(fd, pts), geo.christoffels(base, pts), atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.sampled_from(["conformal_bump", "perturbed_disk",
                                                                   "sphere_cap_small"]))
def test_christoffels_symmetric(x, y, name):
    G = geo.christoffels(geo.metric_by_name(name), np.array([[x, y]]))[0]
    assert np.array_equal(G, G.transpose(0, 2, 1))


def test_outside_point_rejected():
    with pytest.raises(geo.DomainError):
        geo.christoffels(geo.metric_by_name("euclidean_disk"), np.array([[1.2, 0.0]]))


def test_diameter_chord():
    m = geo.metric_by_name("euclidean_disk")
    path = geo.shoot_geodesic(m, geo.UnitTangent.normalized(m, [-1.0, 0.0], [1.0, 0.0]))
    assert path.tau == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(path.exit_point, [1.0, 0.0], atol=1e-10)


def test_boundary_chords():
    m = geo.metric_by_name("euclidean_disk")
    grid = geo.influx_grid(m, 16, 8)
    x, v = grid.flat()
    tau, _ = geo.exit_times(m, x, v)
    np.testing.assert_allclose(tau, -2 * np.sum(x * v, axis=1), atol=1e-10)


def test_path_converges_under_tolerance_halving():
    m = geo.MetricField2D.from_sympy("gauss", (1 + sp.Rational(1, 10) * sp.exp(-X ** 2 - Y ** 2)) * sp.eye(2),
                                     (X, Y))
    start = geo.UnitTangent.normalized(m, [-0.3, -0.2], [1.0, 0.4])
    tol = 1e-9
    a = geo.shoot_geodesic(m, start, tol=tol)
    b = geo.shoot_geodesic(m, start, tol=tol / 2 ** 10)
    assert abs(a.tau - b.tau) < 10 * tol
    assert np.max(np.abs(a.exit_point - b.exit_point)) < 10 * tol


@pytest.mark.parametrize("name", ["euclidean_disk", "conformal_bump", "sphere_cap_small", "perturbed_disk"])
def test_energy_drift_per_unit_length(name):
    m = geo.metric_by_name(name)
    rng = np.random.default_rng(3)
    for _ in range(4):
        x = m.domain.sample(1, rng, margin=0.1)[0]
        v = m.unit_vector(x[None], rng.uniform(0, 2 * np.pi, 1))[0]
        path = geo.shoot_geodesic(m, geo.UnitTangent(x, v))
        assert path.energy_drift(m) / path.tau < 1e-10


def test_flat_disk_is_simple():
    rep = geo.simplicity_diagnostics(geo.metric_by_name("euclidean_disk"))
    assert rep.passed
    assert rep.min_curvature == pytest.approx(1.0, abs=1e-12)


def test_perturbed_disk_is_simple_with_margin():
    rep = geo.simplicity_diagnostics(geo.metric_by_name("perturbed_disk"))
    assert rep.passed and rep.min_jacobi > 0.5 and rep.min_curvature > 0.5


def test_large_cap_fails_simplicity():
    rep = geo.simplicity_diagnostics(geo.metric_by_name("sphere_cap_large"))
    assert not rep.passed
    assert rep.min_jacobi < 0


def test_flat_polar_coordinates():
    r, th = geo.polar_coords(geo.metric_by_name("euclidean_disk"), np.zeros(2), [0.3, 0.4])
    assert r == pytest.approx(0.5, abs=1e-12)
    assert th == pytest.approx(np.arctan2(0.4, 0.3), abs=1e-12)


def test_polar_round_trip():
    m = geo.metric_by_name("conformal_bump")
    omega = np.array([-1.5, 0.1])          # outside the disk; the metric extends smoothly
    rng = np.random.default_rng(0)
    pts = m.domain.sample(100, rng, margin=0.05)
    r, th = geo.polar_coords_batch(m, omega, pts)
    back = geo.exp_polar(m, omega, r, th)
    assert np.max(np.abs(back - pts)) < 1e-8


def test_radial_conformal_polar_radius():
    # g = e^{2u} I with u = 0.2|x|^2: rays through the origin are geodesics and r = ∫ e^u
    m = geo.MetricField2D.from_sympy("radial", sp.exp(sp.Rational(2, 5) * (X ** 2 + Y ** 2)) * sp.eye(2),
                                     (X, Y))
    pts = np.array([[0.3, 0.4], [-0.2, 0.6], [0.5, -0.5]])
    r, th = geo.polar_coords_batch(m, np.zeros(2), pts)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    oracle = [quad(lambda s: np.exp(0.2 * s * s), 0, p, epsabs=1e-14)[0] for p in rho]
    np.testing.assert_allclose(r, oracle, atol=1e-10)
    np.testing.assert_allclose(th, np.arctan2(pts[:, 1], pts[:, 0]), atol=1e-10)


def test_unknown_metric():
    with pytest.raises(KeyError):
        geo.metric_by_name("klein_bottle")
