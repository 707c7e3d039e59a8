"""From vector-field and potential perturbations on ``ℝ × D`` to transform data on ``D``.

Fields on ``M ⊂ ℝ × D`` use coordinates ``(x1, x, y)`` and the product metric
``g = c (dx1² + g0)``.  Partial Fourier transforms in ``x1`` turn a 1-form
``X♭`` into a pair ``(f, α)`` on ``D``; for a gradient ``X = ∇φ`` the pair is
``f = -λ p``, ``α = -i dp`` with ``p = i ∫ e^{iλx1} φ dx1``, which lies in the
kernel of the attenuated transform.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from polyinv import geometry as geo
from polyinv import raytransform as rt
from polyinv.fields import OneFormD, PairField, ScalarFieldD

SUPPORT_TOL = 1e-12
DEFAULT_LAMBDAS = np.linspace(-0.5, 0.5, 11)

# centered 6th-order first derivative
_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
_OFF = np.arange(-3, 4)


class SupportError(ValueError):
    """Field does not vanish where compact support is required."""


class PreconditionError(ValueError):
    pass


class NonClosedError(ValueError):
    """Path integrals of a 1-form depend on the path."""


def _partial(fn, x, axis, step):
    acc = 0
    for o, c in zip(_OFF, _D1):
        if c == 0:
            continue
        xx = np.array(x, dtype=float, copy=True)
        xx[..., axis] += o * step
        acc = acc + c * fn(xx)
    return acc / step


def _x1_rule(x1_range, n_quad, panels):
    u, w = np.polynomial.legendre.leggauss(n_quad // panels)
    edges = np.linspace(x1_range[0], x1_range[1], panels + 1)
    t = np.concatenate([a + 0.5 * (u + 1) * (b - a) for a, b in zip(edges[:-1], edges[1:])])
    wt = np.concatenate([0.5 * w * (b - a) for a, b in zip(edges[:-1], edges[1:])])
    return t, wt


# --------------------------------------------------------------------------
# vector fields on M
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VectorFieldM:
    """Contravariant field ``X^j ∂_j`` on ``ℝ × D`` with a product metric.

    ``components(X)`` maps points ``(..., 3)`` to ``(..., 3)``.  With
    ``compact`` set, the field is asserted to vanish outside
    ``x1_support × {|x'| ≤ radius}``.
    """
    components: Callable
    product: geo.ConformalProduct
    compact: bool = True
    x1_support: tuple = (-1.0, 1.0)
    radius: float = 1.0
    regularity: str = "smooth"
    name: str = ""

    def __call__(self, X):
        return np.asarray(self.components(np.asarray(X, dtype=float)), dtype=complex)

    def flat(self, X):
        """Lowered components ``X♭_j = g_{jk} X^k``."""
        X = np.asarray(X, dtype=float)
        return np.einsum("...jk,...k->...j", self.product.metric(X), self(X))

    @classmethod
    def from_flat(cls, form, product, **kw):
        """Raise a 1-form ``form(X) -> (..., 3)`` with the product metric."""
        def comps(X):
            return np.linalg.solve(product.metric(X), np.asarray(form(X), dtype=complex)[..., None])[..., 0]
        return cls(comps, product, **kw)

    @classmethod
    def gradient(cls, dphi, product, **kw):
        """``∇φ`` from the differential ``dphi(X) -> (..., 3)``."""
        return cls.from_flat(dphi, product, **kw)

    def check_support(self, n=64, seed=0):
        """Vanishing on the boundary of the declared support box."""
        if not self.compact:
            raise SupportError("field is not flagged compactly supported")
        rng = np.random.default_rng(seed)
        a, b = self.x1_support
        th = rng.uniform(0, 2 * np.pi, n)
        rr = self.radius * np.sqrt(rng.uniform(0, 1, n))
        side = np.column_stack([np.where(rng.random(n) < 0.5, a, b), rr * np.cos(th), rr * np.sin(th)])
        rim = np.column_stack([rng.uniform(a, b, n), self.radius * np.cos(th), self.radius * np.sin(th)])
        worst = float(np.max(np.abs(self.flat(np.concatenate([side, rim])))))
        if worst > SUPPORT_TOL:
            raise SupportError(f"field is {worst:.2e} on the boundary of its support box")
        return worst


@dataclass(frozen=True)
class FourierSlice:
    lam: float
    f: ScalarFieldD
    alpha: OneFormD

    def pair(self, alpha_factor=1.0):
        """``(f, alpha_factor · α)`` as a transform input."""
        a = self.alpha
        return PairField(self.f, OneFormD(lambda x: alpha_factor * a(x), name="scaled"))


def fourier_table(X: VectorFieldM, lambdas, xp, n_quad=64, panels=4, chunk=4096):
    """``∫ e^{iλx1} X♭(x1, x') dx1`` for all ``λ`` and points ``xp`` of shape ``(N, 2)``.

    Returns ``(L, N, 3)``: index 0 is ``f``, indices 1..2 are ``α``.
    """
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    xp = np.asarray(xp, dtype=float)
    lead = xp.shape[:-1]
    xp = xp.reshape(-1, 2)
    t, w = _x1_rule(X.x1_support if X.compact else X.product.x1_range, n_quad, panels)
    phase = w[None, :] * np.exp(1j * lambdas[:, None] * t[None, :])      # (L, K)
    out = np.empty((lambdas.size, xp.shape[0], 3), dtype=complex)
    for lo in range(0, xp.shape[0], chunk):
        hi = min(lo + chunk, xp.shape[0])
        pts = np.concatenate([np.broadcast_to(t[:, None, None], (t.size, hi - lo, 1)),
                              np.broadcast_to(xp[None, lo:hi], (t.size, hi - lo, 2))], axis=-1)
        vals = X.flat(pts)                                                # (K, n, 3)
        out[:, lo:hi] = np.einsum("lk,knj->lnj", phase, vals)
    return out.reshape((lambdas.size,) + lead + (3,))


def partial_fourier(X: VectorFieldM, lam, n_quad=64, panels=4):
    """Slice ``f = ∫ e^{iλx1} X♭_1 dx1``, ``α_j = ∫ e^{iλx1} X♭_j dx1`` (``j = 2, 3``)."""
    if X.compact:
        X.check_support()

    def fvals(xp):
        return fourier_table(X, [lam], xp, n_quad, panels)[0, ..., 0]

    def avals(xp):
        return fourier_table(X, [lam], xp, n_quad, panels)[0, ..., 1:]

    return FourierSlice(float(lam), ScalarFieldD(values=fvals, name=f"f[{lam:g}]"),
                        OneFormD(components=avals, name=f"alpha[{lam:g}]"))


# --------------------------------------------------------------------------
# ray identities
# --------------------------------------------------------------------------

@dataclass
class GaugeResult:
    lambdas: np.ndarray
    max_ray: np.ndarray       # per λ, max over rays of |∫ e^{-λr}(f + iα(γ̇)) dr|

    @property
    def max(self):
        return float(np.max(self.max_ray))


def ray_identity_max(X: VectorFieldM, lambdas=DEFAULT_LAMBDAS, plan=None, n_s=32, n_phi=16,
                     n_points=64, panels=2, n_quad=64):
    """Max modulus of the attenuated ray integrals of ``(f, iα)`` built from ``X``."""
    metric = X.product.base
    if plan is None:
        plan = rt.ray_plan(metric, geo.influx_grid(metric, n_s=n_s, n_phi=n_phi),
                           n_points=n_points, panels=panels)
    if X.compact:
        X.check_support()
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    table = fourier_table(X, lambdas, plan.x, n_quad=n_quad)
    out = np.empty(lambdas.size)
    for k, lam in enumerate(lambdas):
        integrand = table[k, ..., 0] + 1j * np.einsum("...i,...i->...", table[k, ..., 1:], plan.v)
        vals = plan.integrate(lam, integrand).values
        out[k] = float(np.nanmax(np.abs(vals)))
    return GaugeResult(lambdas, out)


def gauge_vanishing_check(dphi, product, lambdas=DEFAULT_LAMBDAS, x1_support=(-1.0, 1.0),
                          radius=1.0, **kw):
    """Ray identity for ``X = ∇φ`` with ``φ`` compactly supported; ``≈ 0`` for every ``λ``."""
    X = VectorFieldM.gradient(dphi, product, x1_support=x1_support, radius=radius, name="grad")
    try:
        X.check_support()
    except SupportError as exc:
        raise PreconditionError(f"potential support touches the boundary: {exc}") from None
    return ray_identity_max(X, lambdas, **kw)


# --------------------------------------------------------------------------
# closedness and potentials
# --------------------------------------------------------------------------

@dataclass
class ClosednessResult:
    transversal: float        # sup |∂_k X♭_j - ∂_j X♭_k|, j, k ≥ 2
    full: float               # sup over all pairs j < k
    fourier: np.ndarray       # per λ: sup_j |∂_j f + iλ α_j|

    @property
    def max(self):
        return max(self.transversal, self.full, float(np.max(self.fourier, initial=0.0)))


def closedness_check(X: VectorFieldM, lambdas=DEFAULT_LAMBDAS, points=None, step=1e-3,
                     n_quad=64, seed=0):
    """Finite-difference residuals of ``dX♭ = 0`` and of ``∂_j f + iλα_j = 0``."""
    rng = np.random.default_rng(seed)
    if points is None:
        xp = X.product.base.domain.sample(40, rng, margin=0.05)
        a, b = X.product.x1_range
        points = np.column_stack([rng.uniform(a, b, xp.shape[0]), xp])
    points = np.asarray(points, dtype=float)
    d = [_partial(X.flat, points, k, step) for k in range(3)]      # d[k][..., j] = ∂_k X♭_j
    pairs = [(j, k) for j in range(3) for k in range(j + 1, 3)]
    res = {(j, k): float(np.max(np.abs(d[k][..., j] - d[j][..., k]))) for j, k in pairs}
    transversal = res[(1, 2)]
    xp = points[:, 1:]
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    table = lambda y: fourier_table(X, lambdas, y, n_quad=n_quad)   # noqa: E731
    fourier = np.zeros(lambdas.size)
    for j in range(2):
        df = _partial(lambda y: table(y)[..., 0], xp, j, step)       # (L, N)
        alpha = table(xp)[..., 1 + j]
        fourier = np.maximum(fourier, np.max(np.abs(df + 1j * lambdas[:, None] * alpha), axis=1))
    return ClosednessResult(transversal, max(res.values()), fourier)


@dataclass
class Potential:
    """Path-integral potential of a closed 1-form; ``discrepancy`` compares two path families."""
    omega: Callable
    base: np.ndarray
    n_gauss: int
    discrepancy: float = 0.0

    def _path(self, x, order):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u, w = np.polynomial.legendre.leggauss(self.n_gauss)
        cur = np.broadcast_to(self.base, x.shape).copy()
        total = np.zeros(x.shape[0], dtype=complex)
        for k in order:
            a, b = cur[:, k], x[:, k]
            nodes = a[:, None] + 0.5 * (u[None, :] + 1) * (b - a)[:, None]
            pts = np.repeat(cur[:, None, :], u.size, axis=1)
            pts[..., k] = nodes
            vals = np.asarray(self.omega(pts), dtype=complex)[..., k]
            total += 0.5 * (b - a) * np.sum(w[None, :] * vals, axis=1)
            cur[:, k] = b
        return total

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return self._path(x.reshape(-1, d), range(d)).reshape(x.shape[:-1])

    def differential_defect(self, points, step=1e-3):
        """``sup |dφ - ω|`` by centered differences."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        om = np.asarray(self.omega(points), dtype=complex)
        return float(max(np.max(np.abs(_partial(self, points, k, step) - om[..., k]))
                         for k in range(points.shape[-1])))


def integrate_potential(omega, base, points, n_gauss=64, tol=1e-8):
    """Potential ``φ`` with ``dφ = ω``, ``φ(base) = 0``, along axis-aligned polylines.

    The polylines may leave the physical domain; ``ω`` must be defined (and
    closed) on the bounding box, e.g. by zero extension of a compactly
    supported form.  ``points`` are used to compare the two path orders.
    """
    base = np.asarray(base, dtype=float)
    pot = Potential(omega, base, n_gauss)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = base.size
    fwd = pot._path(pts, range(d))
    bwd = pot._path(pts, range(d - 1, -1, -1))
    scale = max(1.0, float(np.max(np.abs(fwd))))
    disc = float(np.max(np.abs(fwd - bwd)))
    if disc > tol * scale:
        raise NonClosedError(f"path dependence {disc:.3e} exceeds {tol:.1e}")
    pot.discrepancy = disc
    return pot


# --------------------------------------------------------------------------
# potential term
# --------------------------------------------------------------------------

def q_slice(qdiff, c, lam, x1_support=(-1.0, 1.0), n_quad=64, panels=4, check_points=None):
    """``Q_λ(x') = ∫ (q1 - q2) c e^{iλx1} dx1`` as a field on ``D``.

    ``qdiff`` and ``c`` are callables of points ``(..., 3)``; the product
    must vanish at both ends of ``x1_support``.
    """
    t, w = _x1_rule(x1_support, n_quad, panels)
    rng = np.random.default_rng(0)
    xp = check_points if check_points is not None else rng.uniform(-0.7, 0.7, (32, 2))
    ends = np.concatenate([np.column_stack([np.full(len(xp), e), xp]) for e in x1_support])
    worst = float(np.max(np.abs(np.asarray(qdiff(ends)) * c(ends))))
    if worst > SUPPORT_TOL:
        raise SupportError(f"(q1 - q2) c is {worst:.2e} at the ends of the x1 support")

    def values(x):
        x = np.asarray(x, dtype=float)
        pts = np.concatenate([np.broadcast_to(t.reshape((-1,) + (1,) * (x.ndim - 1) + (1,)),
                                              (t.size,) + x.shape[:-1] + (1,)),
                              np.broadcast_to(x, (t.size,) + x.shape)], axis=-1)
        vals = np.asarray(qdiff(pts), dtype=complex) * c(pts)
        wt = (w * np.exp(1j * lam * t)).reshape((-1,) + (1,) * (x.ndim - 1))
        return np.sum(wt * vals, axis=0)

    return ScalarFieldD(values=values, name=f"Q[{lam:g}]")


def polar_values(field, chart: geo.PolarChart, r, theta):
    """Evaluate a field on ``D`` at polar chart coordinates ``(r, θ)``."""
    pts = chart.exp(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
    return field(pts)


# --------------------------------------------------------------------------
# Green's formula for the perturbed polyharmonic operator
# --------------------------------------------------------------------------

_C1 = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])
_C2 = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])


def _stencil(u, coef, axis, h):
    p = np.pad(u, [(2, 2) if a == axis else (0, 0) for a in range(u.ndim)])
    n = u.shape[axis]
    out = 0
    for j, cj in enumerate(coef):
        if cj == 0:
            continue
        sl = [slice(None)] * u.ndim
        sl[axis] = slice(j, j + n)
        out = out + cj * p[tuple(sl)]
    return out


@dataclass
class GridOps:
    """4th-order finite differences for ``Δ_g`` on a square grid (zero outside)."""
    x: np.ndarray
    h: float
    ginv: np.ndarray      # (n, n, 2, 2)
    b: np.ndarray         # (n, n, 2) first-order coefficients of Δ_g
    sqrt_det: np.ndarray
    dlog_sqrt: np.ndarray  # (n, n, 2)

    @classmethod
    def build(cls, metric: geo.MetricField2D, n=129, box=(-1.0, 1.0)):
        x = np.linspace(box[0], box[1], n)
        X = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
        g = metric.g0(X)
        dg = metric.dg0(X)                  # dg[..., k, i, j] = ∂_k g_ij
        ginv = np.linalg.inv(g)
        dginv = -np.einsum("...ij,...kjl,...lm->...kim", ginv, dg, ginv)
        dlog = 0.5 * np.einsum("...ij,...kji->...k", ginv, dg)   # ∂_k log √|g|
        b = np.einsum("...iij->...j", dginv) + np.einsum("...ij,...i->...j", ginv, dlog)
        return cls(x, float(x[1] - x[0]), ginv, b, metric.sqrt_det(X), dlog)

    @property
    def points(self):
        return np.stack(np.meshgrid(self.x, self.x, indexing="ij"), axis=-1)

    def d(self, u, axis):
        return _stencil(u, _C1, axis, self.h) / self.h

    def laplacian(self, u):
        dx, dy = self.d(u, 0), self.d(u, 1)
        uxx = _stencil(u, _C2, 0, self.h) / self.h ** 2
        uyy = _stencil(u, _C2, 1, self.h) / self.h ** 2
        uxy = self.d(dx, 1)
        G = self.ginv
        return (G[..., 0, 0] * uxx + 2 * G[..., 0, 1] * uxy + G[..., 1, 1] * uyy
                + self.b[..., 0] * dx + self.b[..., 1] * dy)

    def divergence(self, Xc):
        """``div_g X = ∂_j X^j + X^j ∂_j log √|g|``."""
        return (self.d(Xc[..., 0], 0) + self.d(Xc[..., 1], 1)
                + np.einsum("...j,...j->...", Xc, self.dlog_sqrt))

    def integrate(self, u):
        return np.sum(u * self.sqrt_det) * self.h ** 2


def apply_operator(ops: GridOps, u, Xc, q, m):
    """``(-Δ_g)^m u + X^j ∂_j u + q u`` on grid values."""
    out = u
    for _ in range(m):
        out = -ops.laplacian(out)
    return out + Xc[..., 0] * ops.d(u, 0) + Xc[..., 1] * ops.d(u, 1) + q * u


@dataclass
class GreenResult:
    lhs: complex
    rhs: complex
    n: int

    @property
    def defect(self):
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), abs(self.rhs), 1e-300)


def green_identity_check(metric, u, v, X, q, m=2, n=129, box=(-1.0, 1.0), trace_tol=1e-10):
    """``∫ L u · v dV`` against ``∫ u · L* v dV`` with ``L = (-Δ_g)^m + X + q``.

    ``L* = (-Δ_g)^m - X + (q - div_g X)`` is the formal transpose.  ``u`` and
    ``v`` are callables of points ``(..., 2)`` and must vanish, with their
    derivatives, near the boundary of the unit disk; ``X`` returns the
    contravariant components ``(..., 2)`` and ``q`` a scalar.
    """
    ops = GridOps.build(metric, n, box)
    P = ops.points
    U = np.asarray(u(P), dtype=complex)
    V = np.asarray(v(P), dtype=complex)
    outside = np.sum(P ** 2, axis=-1) >= 1.0 - 1e-12
    edge = max(float(np.max(np.abs(U[outside]), initial=0.0)),
               float(np.max(np.abs(V[outside]), initial=0.0)))
    if edge > trace_tol:
        raise PreconditionError(f"boundary traces do not vanish ({edge:.2e})")
    Xc = np.asarray(X(P), dtype=complex)
    Q = np.asarray(q(P), dtype=complex)
    Lu = apply_operator(ops, U, Xc, Q, m)
    Lv = apply_operator(ops, V, -Xc, Q - ops.divergence(Xc), m)
    return GreenResult(complex(ops.integrate(Lu * V)), complex(ops.integrate(U * Lv)), n)


def cutoff_bump(center, width, power=12, coeffs=(1.0, 0.0, 0.0)):
    """``(1 - |x - c|²/w²)_+^power · (a0 + a1 x + a2 y)``: smooth compactly supported test function."""
    center = np.asarray(center, dtype=float)

    def fn(x):
        x = np.asarray(x, dtype=float)
        s = np.clip(1 - np.sum((x - center) ** 2, axis=-1) / width ** 2, 0, None)
        return s ** power * (coeffs[0] + coeffs[1] * x[..., 0] + coeffs[2] * x[..., 1])

    return fn


def separable_potential(seed, x1_half=0.7, power=10):
    """Random compactly supported ``φ(x1, x') = A (1-(x1/a)²)^k (1-|x'-c|²/w²)^k (1 + b·x')``.

    Returns ``(phi, dphi, x1_support, radius)`` where ``radius`` bounds the
    transversal support.
    """
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.4, 0.6)
    ang = rng.uniform(0, 2 * np.pi)
    c = rng.uniform(0, 0.85 - w) * np.array([np.cos(ang), np.sin(ang)])
    amp = complex(rng.normal(), rng.normal())
    bvec = rng.normal(size=2) * 0.5
    k = power

    def parts(X):
        X = np.asarray(X, dtype=float)
        t = X[..., 0] / x1_half
        s1 = np.clip(1 - t ** 2, 0, None)
        d = X[..., 1:] - c
        s2 = np.clip(1 - np.sum(d ** 2, axis=-1) / w ** 2, 0, None)
        lin = 1 + X[..., 1:] @ bvec
        return t, s1, d, s2, lin

    def phi(X):
        t, s1, d, s2, lin = parts(X)
        return amp * s1 ** k * s2 ** k * lin

    def dphi(X):
        t, s1, d, s2, lin = parts(X)
        d1 = amp * k * s1 ** (k - 1) * (-2 * t / x1_half) * s2 ** k * lin
        dt = (amp * s1 ** k)[..., None] * (k * (s2 ** (k - 1))[..., None] * (-2 * d / w ** 2) * lin[..., None]
                                           + (s2 ** k)[..., None] * bvec)
        return np.concatenate([d1[..., None], dt], axis=-1)

    return phi, dphi, (-x1_half, x1_half), float(np.linalg.norm(c) + w)


def rotational_form(x1_half=0.7, center=(0.1, 0.0), width=0.6, power=10, amplitude=5.0):
    """A compactly supported 1-form with ``dX♭ ≠ 0`` (negative control)."""
    c = np.asarray(center)

    def form(X):
        X = np.asarray(X, dtype=float)
        s1 = np.clip(1 - (X[..., 0] / x1_half) ** 2, 0, None)
        d = X[..., 1:] - c
        s2 = np.clip(1 - np.sum(d ** 2, axis=-1) / width ** 2, 0, None)
        env = amplitude * (s1 * s2) ** power
        return np.stack([np.zeros_like(env), -env * d[..., 1], env * d[..., 0]], axis=-1) + 0j

    return form, (-x1_half, x1_half), float(np.linalg.norm(c) + width)
