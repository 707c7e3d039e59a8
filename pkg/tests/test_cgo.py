import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyinv import cgo
from polyinv import geometry as geo


@pytest.fixture(scope="module")
def flat_product():
    return geo.product_by_name("euclidean_disk")


@pytest.fixture(scope="module")
def bump_product():
    return geo.product_by_name("conformal_bump")


# -- eikonal ---------------------------------------------------------------

@pytest.mark.parametrize("sign", [1, -1])
def test_flat_eikonal(flat_product, sign):
    phase = cgo.Phase(omega=np.array([-1.5, 0.2]), sign=sign)
    eik, gauss = cgo.eikonal_residual(phase, flat_product, (1.0, 2.0), (-0.3, 0.3))
    assert eik < 1e-10 and gauss < 1e-10


def test_curved_eikonal(bump_product):
    eik, gauss = cgo.eikonal_residual(cgo.Phase(omega=np.array([-1.6, 0.0])), bump_product,
                                      (1.0, 2.0), (-0.35, 0.35))
    assert eik < 1e-8 and gauss < 1e-8


def test_wrong_psi_scale_breaks_eikonal(flat_product):
    eik, _ = cgo.eikonal_residual(cgo.Phase(omega=None, psi_scale=0.7), flat_product,
                                  (-0.5, 0.5), (-0.5, 0.5))
    assert eik == pytest.approx(1 - 0.49, abs=1e-12)


def test_bad_sign():
    with pytest.raises(ValueError):
        cgo.Phase(omega=None, sign=2)


def test_cartesian_chart_needs_flat_base(bump_product):
    with pytest.raises(cgo.GeometryError):
        cgo.build_chart_grid(bump_product, cgo.Phase(omega=None), (-1, 1), (-0.5, 0.5), (-0.5, 0.5))


# -- transport -------------------------------------------------------------

def _flat_grid(flat_product, shape=(40, 40, 24)):
    return cgo.build_chart_grid(flat_product, cgo.Phase(omega=None), (-1, 1), (-0.6, 0.6), (-0.6, 0.6),
                                shape)


def test_flat_transport_exact(flat_product):
    phase = cgo.Phase(omega=None)
    amp = cgo.holomorphic_amplitude(lambda z: np.exp(0.8j * z), phase)
    assert cgo.transport_residual(amp, phase, 2, _flat_grid(flat_product)) < 1e-8


def test_non_holomorphic_amplitude_detected(flat_product):
    phase = cgo.Phase(omega=None)
    amp = cgo.Amplitude(a0=lambda x1, r: np.exp(0.8j * (x1 - 1j * r)))
    assert cgo.transport_residual(amp, phase, 1, _flat_grid(flat_product)) > 0.1


def test_curved_transport_converges(bump_product):
    phase = cgo.Phase(omega=np.array([-1.6, 0.0]))
    amp = cgo.holomorphic_amplitude(lambda z: np.exp(0.7j * z), phase, b=np.cos)
    out = {}
    for m in (1, 2):
        res = []
        for shape in ((28, 28, 20), (56, 56, 40)):
            G = cgo.build_chart_grid(bump_product, phase, (-1, 1), (1.0, 2.0), (-0.35, 0.35), shape)
            res.append(cgo.transport_residual(amp, phase, m, G))
        out[m] = res
        assert res[1] < res[0] / 16, (m, res)
    assert out[2][1] < 1e-6


# -- conjugated scaling ----------------------------------------------------

def test_scaling_slopes(flat_product):
    phase = cgo.Phase(omega=None)
    G = _flat_grid(flat_product, (32, 32, 20))
    hl = np.geomspace(0.1, 0.01, 5)
    amp = cgo.holomorphic_amplitude(lambda z: np.exp(0.7j * z), phase, b=np.cos)
    for m in (1, 2):
        assert cgo.conjugated_residual_scaling(amp, phase, None, m, hl, G).slope >= 2 * m - 0.2
    bad = cgo.Phase(omega=None, psi_scale=0.7)
    one = cgo.Amplitude(a0=lambda a, b: np.ones_like(a) + 0j, integrating_factor=False)
    assert abs(cgo.conjugated_residual_scaling(one, bad, None, 2, hl, G).slope) < 0.2


def test_scaling_needs_decreasing_h(flat_product):
    phase = cgo.Phase(omega=None)
    G = _flat_grid(flat_product, (24, 24, 16))
    amp = cgo.holomorphic_amplitude(np.exp, phase)
    with pytest.raises(ValueError):
        cgo.conjugated_residual_scaling(amp, phase, None, 2, [0.01, 0.1], G)


def test_coefficients_are_linear_in_q(flat_product):
    phase = cgo.Phase(omega=None)
    G = _flat_grid(flat_product, (24, 24, 20))
    a = cgo.holomorphic_amplitude(np.exp, phase).assemble(G)
    zero = cgo.conjugated_coefficients(G, phase, a, 2, cgo.Perturbation.zero())
    q = cgo.Perturbation(X=cgo.Perturbation.zero().X, q=lambda x1, r, t: 3.0 + 0 * x1)
    shifted = cgo.conjugated_coefficients(G, phase, a, 2, q)
    sl = G.core(cgo.HALF * 2)
    np.testing.assert_allclose((shifted[4] - zero[4])[sl], 3.0 * a[sl], atol=1e-12)
    for k in range(4):
        np.testing.assert_array_equal(np.broadcast_to(shifted[k], G.shape)[sl],
                                      np.broadcast_to(zero[k], G.shape)[sl])


# -- Cauchy transform ------------------------------------------------------

DOM = cgo.CauchyDomain((-1.5, 1.5), (0.5, 3.0))


def _targets(n):
    xs = np.linspace(-0.5, 0.5, n)
    rs = np.linspace(1.25, 2.25, n)
    return xs, rs, xs[:, None] + 1j * rs[None, :]


def test_cauchy_constant_rhs():
    xs, rs, Z = _targets(25)
    out = cgo.dbar_cauchy_solve(lambda z: 2.5 + 0 * z, DOM, Z)
    d = cgo.dbar_fd(out, xs[1] - xs[0], rs[1] - rs[0])
    assert np.max(np.abs(d - 2.5)) < 1e-6


def test_cauchy_zero_rhs():
    _, _, Z = _targets(9)
    assert np.all(cgo.dbar_cauchy_solve(lambda z: 0 * z, DOM, Z) == 0)


def test_cauchy_bump_fourth_order():
    def rhs(z):
        return np.exp(-np.abs(z - (0.1 + 1.7j)) ** 2 / 0.3) * (1 + 0.5j * z.real)

    errs = []
    for n in (11, 21, 41):
        xs, rs, Z = _targets(n)
        d = cgo.dbar_fd(cgo.dbar_cauchy_solve(rhs, DOM, Z), xs[1] - xs[0], rs[1] - rs[0])
        errs.append(np.max(np.abs(d - rhs(Z[2:-2, 2:-2]))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.7), (errs, rates)


def test_cauchy_margin_error():
    with pytest.raises(cgo.MarginError):
        cgo.dbar_cauchy_solve(lambda z: z, DOM, np.array([-1.5 + 1.0j]))


def test_cauchy_domain_in_upper_half_plane():
    with pytest.raises(cgo.GeometryError):
        cgo.CauchyDomain((-1, 1), (-0.5, 1))


# -- contour moments -------------------------------------------------------

def test_moment_of_exact_differential():
    one = lambda z: np.ones_like(z)  # noqa: E731
    assert abs(cgo.holomorphic_moment(one, one, (-1, 1), (0.5, 1.5))) < 1e-14


@pytest.mark.parametrize("sign", [1, -1])
def test_moment_of_holomorphic_integrand(sign):
    m = cgo.holomorphic_moment(lambda z: z ** 2, lambda z: np.exp(0.4j * z), (-1, 1), (0.5, 1.5), sign=sign)
    assert abs(m) < 1e-8


def test_moment_of_conjugate_is_twice_area():
    # ∮ conj(ρ) dρ = 2i · area for the counter-clockwise rectangle
    m = cgo.holomorphic_moment(np.conj, lambda z: np.ones_like(z), (-1, 1), (0.5, 1.5))
    assert m == pytest.approx(2j * 2.0, abs=1e-12)


# -- Carleman --------------------------------------------------------------

def _dense_ratio(u, h):
    """Direct tensor-Gauss evaluation of ‖e^{x1/h}(-h²Δ)e^{-x1/h}u‖ / (h‖u‖) for one product term."""
    (coef, bumps), = u.terms
    x, w = np.polynomial.legendre.leggauss(48)
    f, d1, d2, wts = [], [], [], []
    for b in bumps:
        t = b.a + 0.5 * (x + 1) * (b.b - b.a)
        k = b.kappa_unit / h
        p, dp, ddp = b.poly(t), b.poly.deriv(1)(t), b.poly.deriv(2)(t)
        e = np.exp(1j * k * t)
        f.append(p * e)
        d1.append((dp + 1j * k * p) * e)
        d2.append((ddp + 2j * k * dp - k * k * p) * e)
        wts.append(0.5 * (b.b - b.a) * w)
    F = np.einsum("i,j,k->ijk", *f)
    lap = (np.einsum("i,j,k->ijk", d2[0], f[1], f[2]) + np.einsum("i,j,k->ijk", f[0], d2[1], f[2])
           + np.einsum("i,j,k->ijk", f[0], f[1], d2[2]))
    P = -h * h * lap + 2 * h * np.einsum("i,j,k->ijk", d1[0], f[1], f[2]) - F
    W = np.einsum("i,j,k->ijk", *wts)
    return np.sqrt(np.sum(W * np.abs(P) ** 2) / np.sum(W * np.abs(F) ** 2)) / h


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_carleman_matches_dense_quadrature(seed):
    u = cgo.random_carleman_function(seed)
    hs = [0.1, 0.03, 0.01]
    _, ratios = cgo.carleman_ratio(u, hs)
    np.testing.assert_allclose(ratios, [_dense_ratio(u, h) for h in hs], rtol=1e-9)


def test_carleman_non_oscillating_bound():
    for seed in range(3):
        best, _ = cgo.carleman_ratio(cgo.random_carleman_function(seed, oscillating=False),
                                     np.geomspace(0.1, 0.01, 5))
        assert best >= 0.5


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 50.0), st.integers(0, 50))
def test_carleman_scale_invariance(scale, seed):
    u = cgo.random_carleman_function(seed)
    hs = [0.1, 0.02]
    _, a = cgo.carleman_ratio(u, hs)
    _, b = cgo.carleman_ratio(u.scaled(scale), hs)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_carleman_rejects_degenerate_inputs():
    u = cgo.random_carleman_function(0)
    with pytest.raises(ValueError):
        cgo.carleman_ratio(u.scaled(0.0), [0.1])
    with pytest.raises(ValueError):
        cgo.carleman_ratio(u, [])
    wide = cgo.SeparableFunction(((1.0, (cgo.Bump1D.polynomial_bump(0.0, 1.2),) * 3),))
    with pytest.raises(cgo.SupportError):
        cgo.carleman_ratio(wide, [0.1])


def test_carleman_flat_only():
    with pytest.raises(NotImplementedError):
        cgo.carleman_ratio(cgo.random_carleman_function(0), [0.1],
                           product=geo.product_by_name("conformal_bump"))
