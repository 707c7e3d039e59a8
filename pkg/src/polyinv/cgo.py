"""Complex geometrical optics on admissible products ``c (1 ⊕ g0)``.

Work happens in the chart ``(x1, r, θ)`` where ``(r, θ)`` are polar normal
coordinates of ``g0`` about a center ``ω``; there the metric is
``c · diag(1, 1, m(r, θ))`` with ``m = |J|²`` the squared Jacobi field.  The
phase is ``ρ = x1 + i σ r`` (``σ = ±1``).  Conjugated operators are expanded
as polynomials in ``h`` so no exponential weight is ever formed.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from polyinv import _accel
from polyinv.geometry import geodesics as geo
from polyinv.geometry.metric import ConformalProduct

FD1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
FD2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
HALF = 4  # stencil half-width


class ResolutionError(ValueError):
    pass


class MarginError(ValueError):
    pass


class GeometryError(ValueError):
    pass


class SupportError(ValueError):
    pass


def fd_derivative(u, axis, step, order=1):
    """8th-order centered difference; the outer four layers along ``axis`` become NaN."""
    stencil = FD1 if order == 1 else FD2
    n = u.shape[axis]
    if n <= 2 * HALF:
        raise ResolutionError("grid too small for the difference stencil")
    out = np.full(u.shape, np.nan, dtype=np.result_type(u, float))
    core = [slice(None)] * u.ndim
    core[axis] = slice(HALF, n - HALF)
    acc = 0
    for j, c in enumerate(stencil):
        if c == 0.0:
            continue
        sl = [slice(None)] * u.ndim
        sl[axis] = slice(j, n - 2 * HALF + j)
        acc = acc + c * u[tuple(sl)]
    out[tuple(core)] = acc / step ** order
    return out


# --------------------------------------------------------------------------
# phase and chart grid
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Phase:
    """``ρ = x1 + i σ s r``; ``s = psi_scale`` is 1 for a true eikonal solution.

    ``omega=None`` selects the Cartesian chart ``r = x'_1, θ = x'_2`` (center at
    infinity), which is a polar chart only for flat ``g0``.
    """
    omega: Optional[np.ndarray]
    sign: int = 1
    psi_scale: float = 1.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be ±1")

    @property
    def dr_coeff(self):
        return 1j * self.sign * self.psi_scale

    def rho(self, x1, r):
        return x1 + self.dr_coeff * r


@dataclass
class ChartGrid:
    """Uniform tensor grid over a chart box with metric coefficient fields."""
    axes: tuple               # (x1, r, θ) 1-D arrays
    c: np.ndarray
    m: np.ndarray
    dc: np.ndarray            # (3, ...) chart partials of c
    dm: np.ndarray            # (3, ...) chart partials of m
    points: np.ndarray        # (nr, nθ, 2) transversal points exp_ω(r, θ)

    @property
    def shape(self):
        return self.c.shape

    @property
    def steps(self):
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    @property
    def ginv(self):
        return (1.0 / self.c, 1.0 / self.c, 1.0 / (self.c * self.m))

    @property
    def sqrt_det(self):
        return self.c ** 1.5 * np.sqrt(self.m)

    @property
    def first_order(self):
        """``b_i = |g|^{-1/2} ∂_i(|g|^{1/2} g^{ii})`` so ``Δ_g = Σ g^{ii}∂_i² + b_i ∂_i``."""
        c, m, dc, dm = self.c, self.m, self.dc, self.dm
        b1 = (0.5 * dc[0] / c + 0.5 * dm[0] / m) / c
        br = (0.5 * dc[1] / c + 0.5 * dm[1] / m) / c
        bt = (0.5 * dc[2] / c - 0.5 * dm[2] / m) / (c * m)
        return b1, br, bt

    def d(self, u, axis, order=1):
        return fd_derivative(u, axis, self.steps[axis], order)

    def laplacian(self, u):
        gi = self.ginv
        b = self.first_order
        out = 0
        for i in range(3):
            out = out + gi[i] * self.d(u, i, 2) + b[i] * self.d(u, i, 1)
        return out

    def core(self, margin):
        n = self.shape
        if any(2 * margin >= k for k in n):
            raise ResolutionError("margin exceeds grid size")
        return tuple(slice(margin, k - margin) for k in n)

    def l2(self, u, margin):
        sl = self.core(margin)
        w = np.prod(self.steps)
        vals = u[sl]
        if not np.all(np.isfinite(vals)):
            raise ResolutionError("non-finite values on the evaluation core")
        return float(np.sqrt(np.sum(np.abs(vals) ** 2 * self.sqrt_det[sl]) * w))


def _extend(a, k):
    d = a[1] - a[0]
    return np.concatenate([a[0] - d * np.arange(k, 0, -1), a, a[-1] + d * np.arange(1, k + 1)])


def build_chart_grid(product: ConformalProduct, phase: Phase, x1_range, r_range, theta_range,
                     shape=(40, 40, 24), tol=1e-12):
    """Sample ``c`` and ``m`` (plus chart partials) on a uniform ``(x1, r, θ)`` grid.

    Coefficients are computed on a grid padded by one stencil width and
    differenced there, so the returned partials are valid everywhere.
    """
    axes = tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip((x1_range, r_range, theta_range), shape))
    ext = tuple(_extend(a, HALF) for a in axes)
    R, T = np.meshgrid(ext[1], ext[2], indexing="ij")
    base = product.base
    if phase.omega is None:
        if not base.flat:
            raise GeometryError("the Cartesian chart needs a flat transversal metric")
        pts = np.stack([R, T], axis=-1)
        m_ext = np.ones_like(R)
    else:
        if np.any(ext[1] <= 0):
            raise GeometryError("radial range must stay away from the center")
        pts, _, J = geo.exp_polar(base, phase.omega, R, T, tol=tol, with_jacobi=True)
        m_ext = base.norm2(pts, J)
    X1 = np.broadcast_to(ext[0][:, None, None], (ext[0].size,) + R.shape)
    P = np.broadcast_to(pts[None], (ext[0].size,) + pts.shape)
    c_ext = product.c(np.concatenate([X1[..., None], P], axis=-1))
    m3 = np.broadcast_to(m_ext[None], c_ext.shape)
    steps = tuple(float(a[1] - a[0]) for a in axes)
    dc = np.stack([fd_derivative(c_ext, i, steps[i]) for i in range(3)])
    dm = np.stack([np.zeros_like(c_ext), fd_derivative(m3, 1, steps[1]), fd_derivative(m3, 2, steps[2])])
    sl = (slice(HALF, -HALF),) * 3
    return ChartGrid(axes=axes, c=c_ext[sl].copy(), m=np.ascontiguousarray(m3[sl]),
                     dc=dc[(slice(None),) + sl].copy(), dm=dm[(slice(None),) + sl].copy(),
                     points=pts[HALF:-HALF, HALF:-HALF].copy())


@dataclass
class GridFieldM:
    grid: ChartGrid
    values: np.ndarray

    def to_csv(self, path, delimiter=","):
        import csv
        X1, R, T = self.grid.mesh()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter)
            w.writerow(["x1", "r", "theta", "re", "im"])
            for a, b, c, z in zip(X1.ravel(), R.ravel(), T.ravel(), self.values.ravel()):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(c)),
                            repr(float(np.real(z))), repr(float(np.imag(z)))])


# --------------------------------------------------------------------------
# amplitude and first-order operators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Amplitude:
    """``a = |g|^{-1/4} c^{1/2} a0(x1, r) b(θ)``; ``a0`` takes ``(x1, r)`` arrays."""
    a0: Callable
    b: Callable = lambda th: np.ones_like(th)
    integrating_factor: bool = True

    def assemble(self, grid: ChartGrid):
        X1, R, T = grid.mesh()
        vals = np.asarray(self.a0(X1, R), dtype=complex) * self.b(T)
        if self.integrating_factor:
            vals = vals * grid.c ** -0.25 * grid.m ** -0.25
        return vals


def holomorphic_amplitude(F, phase, b=None):
    """Amplitude with ``a0 = F(ρ)`` for an entire function ``F`` (solves transport)."""
    def a0(x1, r):
        return F(x1 + 1j * phase.sign * r)
    return Amplitude(a0=a0, b=b if b is not None else (lambda th: np.ones_like(th)))


def grad_rho_sq(grid, phase):
    return (1.0 + phase.dr_coeff ** 2) / grid.c


def lap_rho(grid, phase):
    b1, br, _ = grid.first_order
    return b1 + br * phase.dr_coeff


def apply_L1(grid, phase, u):
    """``2⟨∇ρ, ∇u⟩_g + (Δ_g ρ) u``."""
    gi = grid.ginv
    return (2 * (gi[0] * grid.d(u, 0) + gi[1] * phase.dr_coeff * grid.d(u, 1))
            + lap_rho(grid, phase) * u)


def transport_residual(amp, phase, m, grid):
    """``‖L1^m a‖ / ‖a‖`` over the grid core."""
    a = amp.assemble(grid)
    u = a
    for _ in range(m):
        u = apply_L1(grid, phase, u)
    margin = HALF * m
    return grid.l2(u, margin) / grid.l2(a, margin)


# --------------------------------------------------------------------------
# eikonal residual (measured in Cartesian transversal coordinates)
# --------------------------------------------------------------------------

def eikonal_residual(phase, product, r_range, theta_range, samples=64, step=1e-2, seed=0):
    """Max of ``|⟨∇ρ, ∇ρ⟩_g|`` and of the Gauss-lemma defect ``|∇r - γ̇|``.

    ``r`` is recomputed from Cartesian points by the polar-coordinate solver
    and differentiated with an 8th-order stencil, so the numbers measure chart
    numerics rather than restating the chart identity.
    """
    base = product.base
    rng = np.random.default_rng(seed)
    r = rng.uniform(*r_range, samples)
    th = rng.uniform(*theta_range, samples)
    x1 = rng.uniform(*product.x1_range, samples)
    if phase.omega is None:
        pts = np.stack([r, th], axis=-1)
        grad = np.tile([1.0, 0.0], (samples, 1))
        vel = grad.copy()
    else:
        pts, vel, _ = geo.exp_polar(base, phase.omega, r, th, with_jacobi=True)
        offs = np.arange(-HALF, HALF + 1) * step
        grad = np.zeros((samples, 2))
        for k in range(2):
            shifted = pts[:, None, :] + offs[None, :, None] * np.eye(2)[k]
            rr, _ = geo.polar_coords_batch(base, phase.omega, shifted.reshape(-1, 2))
            grad[:, k] = (rr.reshape(samples, -1) @ FD1) / step
    c = product.c(np.column_stack([x1, pts]))
    ginv = base.inverse(pts)
    gr2 = np.einsum("ni,nij,nj->n", grad, ginv, grad)
    eik = np.abs((1.0 + phase.dr_coeff ** 2 * gr2) / c)
    gauss = np.max(np.abs(np.einsum("nij,nj->ni", ginv, grad) - vel))
    return float(np.max(eik)), float(gauss)


# --------------------------------------------------------------------------
# conjugated operator, expanded in h
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Perturbation:
    """First-order perturbation ``X^i ∂_i + q`` with chart components."""
    X: Callable      # (x1, r, θ) -> (3, ...) components in the chart frame
    q: Callable      # (x1, r, θ) -> values

    @classmethod
    def zero(cls):
        return cls(X=lambda a, b, c: np.zeros((3,) + np.shape(a)), q=lambda a, b, c: np.zeros(np.shape(a)))


def conjugated_coefficients(grid, phase, a, m, pert=None):
    """Coefficients ``V_k`` with ``e^{ρ/h} h^{2m} 𝓛(e^{-ρ/h} a) = Σ_k h^k V_k``.

    Uses ``e^{ρ/h}(-h²Δ)(e^{-ρ/h} w) = -|∇ρ|² w + h L1 w - h² Δ w`` applied
    ``m`` times, plus ``h^{2m}(X a + q a) - h^{2m-1} (Xρ) a`` for the
    first-order part.
    """
    g2 = grad_rho_sq(grid, phase)
    coeffs = [a.astype(complex)]
    for _ in range(m):
        new = [0j] * (len(coeffs) + 2)
        for k, w in enumerate(coeffs):
            if isinstance(w, complex) and w == 0:
                continue
            new[k] = new[k] - g2 * w
            new[k + 1] = new[k + 1] + apply_L1(grid, phase, w)
            new[k + 2] = new[k + 2] - grid.laplacian(w)
        coeffs = new
    if pert is not None:
        X1, R, T = grid.mesh()
        Xc = np.asarray(pert.X(X1, R, T))
        q = np.asarray(pert.q(X1, R, T))
        Xa = sum(Xc[i] * grid.d(a, i) for i in range(3))
        Xrho = Xc[0] + Xc[1] * phase.dr_coeff
        coeffs[2 * m] = coeffs[2 * m] + Xa + q * a
        coeffs[2 * m - 1] = coeffs[2 * m - 1] - Xrho * a
    return coeffs


@dataclass
class ScalingResult:
    h: np.ndarray
    norms: np.ndarray
    slope: float
    fit_residual: float
    coefficient_norms: np.ndarray

    @property
    def noisy(self):
        return self.fit_residual > 0.2


def conjugated_residual_scaling(amp, phase, pert, m, h_list, grid):
    """Least-squares slope of ``log ‖v_h‖`` against ``log h``."""
    h_list = np.asarray(h_list, dtype=float)
    if h_list.size < 2 or np.any(np.diff(h_list) >= 0):
        raise ValueError("h_list must be strictly decreasing with at least two entries")
    a = amp.assemble(grid)
    coeffs = conjugated_coefficients(grid, phase, a, m, pert)
    margin = HALF * max(m, 1)
    sl = grid.core(margin)
    stack = np.stack([np.broadcast_to(cf, grid.shape)[sl] for cf in coeffs])
    if not np.all(np.isfinite(stack)):
        raise ResolutionError("expansion coefficients not finite on the core")
    wts = grid.sqrt_det[sl] * np.prod(grid.steps)
    norms = []
    for h in h_list:
        powers = h ** np.arange(len(coeffs))
        v = np.tensordot(powers, stack, axes=(0, 0))
        norms.append(np.sqrt(np.sum(np.abs(v) ** 2 * wts)))
    norms = np.array(norms)
    A = np.column_stack([np.log(h_list), np.ones_like(h_list)])
    sol, res, *_ = np.linalg.lstsq(A, np.log(norms), rcond=None)
    fitres = float(np.max(np.abs(A @ sol - np.log(norms))))
    cn = np.array([np.sqrt(np.sum(np.abs(s) ** 2 * wts)) for s in stack])
    return ScalingResult(h=h_list, norms=norms, slope=float(sol[0]), fit_residual=fitres,
                         coefficient_norms=cn)


# --------------------------------------------------------------------------
# Cauchy transform
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CauchyDomain:
    """Rectangle ``[x_lo, x_hi] × [r_lo, r_hi]`` in the upper half plane."""
    x_range: tuple
    r_range: tuple
    n_quad: int = 128

    def __post_init__(self):
        if self.r_range[0] <= 0:
            raise GeometryError("Cauchy domain must lie in the upper half plane")

    def quadrature(self):
        u, w = np.polynomial.legendre.leggauss(self.n_quad)
        (xa, xb), (ra, rb) = self.x_range, self.r_range
        xs = xa + 0.5 * (u + 1) * (xb - xa)
        rs = ra + 0.5 * (u + 1) * (rb - ra)
        X, R = np.meshgrid(xs, rs, indexing="ij")
        W = np.outer(w, w) * 0.25 * (xb - xa) * (rb - ra)
        return X.ravel(), R.ravel(), W.ravel()

    def boundary_distance(self, z):
        (xa, xb), (ra, rb) = self.x_range, self.r_range
        return np.minimum.reduce([z.real - xa, xb - z.real, z.imag - ra, rb - z.imag])

    def contains_chart(self, x1_range, r_range, margin=0.0):
        return (x1_range[0] - margin >= self.x_range[0] and x1_range[1] + margin <= self.x_range[1]
                and r_range[0] - margin >= self.r_range[0] and r_range[1] + margin <= self.r_range[1])


def dbar_cauchy_solve(rhs, domain: CauchyDomain, targets, delta=0.3, n_near=(24, 48),
                      min_cell=None):
    """``a0(ρ) = -(1/π) ∫_B rhs(z) / (z - ρ) dA(z)``, so that ``∂̄ a0 = rhs``.

    ``rhs`` is a callable of complex ``z``.  The kernel is split with a smooth
    cutoff of radius ``δ`` around each target: the far part uses tensor Gauss
    quadrature over ``B``; the near part is integrated in polar coordinates
    about the target, where the ``1/|z - ρ|`` singularity cancels against the
    area element.  ``δ`` shrinks to the distance to ``∂B`` near the edges.
    """
    t = np.asarray(targets, dtype=complex).ravel()
    dist = domain.boundary_distance(t)
    floor = 0.0 if min_cell is None else min_cell
    if np.any(dist <= floor):
        raise MarginError("target within one cell of the Cauchy domain boundary")
    dl = np.minimum(delta, dist)
    sx, sy, w = domain.quadrature()
    dens = np.asarray(rhs(sx + 1j * sy), dtype=complex) * w
    far = _accel.cauchy_far_sum(t.real, t.imag, dl, sx, sy, dens)
    # near part: ∫_0^δ ∫_0^{2π} rhs(ρ + s e^{iθ}) χ(s) e^{-iθ} dθ ds
    ns, nth = n_near
    u, wu = np.polynomial.legendre.leggauss(ns)
    s01 = 0.5 * (u + 1)
    th = np.arange(nth) * (2 * np.pi / nth)
    eth = np.exp(1j * th)
    near = np.empty(t.size, dtype=complex)
    for lo in range(0, t.size, 256):
        hi = min(lo + 256, t.size)
        d = dl[lo:hi, None, None]
        s = s01[None, :, None] * d
        z = t[lo:hi, None, None] + s * eth[None, None, :]
        vals = np.asarray(rhs(z), dtype=complex) * _accel.cutoff_np(s, d) * np.conj(eth)[None, None, :]
        near[lo:hi] = np.sum(vals.sum(axis=2) * (2 * np.pi / nth) * (0.5 * wu)[None, :], axis=1) * dl[lo:hi]
    out = -(far + near) / np.pi
    return out.reshape(np.shape(targets))


def dbar_fd(values, hx, hy):
    """4th-order centered ``∂̄ = ½(∂_x + i ∂_y)`` on a uniform grid (2 layers lost)."""
    c = np.array([1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])
    nx, ny = values.shape
    dx = sum(c[j] * values[j:nx - 4 + j, 2:-2] for j in range(5)) / hx
    dy = sum(c[j] * values[2:-2, j:ny - 4 + j] for j in range(5)) / hy
    return 0.5 * (dx + 1j * dy)


# --------------------------------------------------------------------------
# contour moments
# --------------------------------------------------------------------------

def holomorphic_moment(phi, a0, x1_range, r_range, sign=1, n_edge=64):
    """``∮ φ a0 dρ`` over the boundary of the chart slice ``M_θ`` (a rectangle).

    ``phi`` and ``a0`` are callables of complex ``ρ = x1 + i σ r``; the contour is
    traversed counter-clockwise in the ``(x1, r)`` plane.
    """
    (xa, xb), (ra, rb) = x1_range, r_range
    if not (xb > xa and rb > ra):
        raise GeometryError("degenerate contour")
    u, w = np.polynomial.legendre.leggauss(n_edge)
    corners = [complex(xa, ra), complex(xb, ra), complex(xb, rb), complex(xa, rb)]
    total = 0j
    for k in range(4):
        z0, z1 = corners[k], corners[(k + 1) % 4]
        z = z0 + 0.5 * (u + 1) * (z1 - z0)
        rho = z.real + 1j * sign * z.imag
        drho = 0.5 * ((z1 - z0).real + 1j * sign * (z1 - z0).imag)
        total += np.sum(w * phi(rho) * a0(rho)) * drho
    return total


# --------------------------------------------------------------------------
# Carleman ratio on the flat product, exact separable algebra
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Bump1D:
    """``p(t) e^{i κ t}`` on ``[a, b]`` with ``p`` a complex polynomial vanishing at the ends."""
    poly: np.polynomial.Polynomial
    a: float
    b: float
    kappa_unit: float = 0.0   # κ = kappa_unit / h

    @classmethod
    def polynomial_bump(cls, center, half_width, power=6, kappa_unit=0.0):
        # local variable on [-1, 1] keeps the coefficients well conditioned
        a, b = center - half_width, center + half_width
        t = np.polynomial.Polynomial([0.0, 1.0], domain=[a, b], window=[-1, 1])
        return cls(poly=(1 - t ** 2) ** power, a=center - half_width, b=center + half_width,
                   kappa_unit=kappa_unit)


@dataclass(frozen=True)
class SeparableFunction:
    """Sum of products of 1-D bumps: ``u = Σ_k coef_k Π_j bump_kj(x_j)``."""
    terms: tuple    # tuple of (coef, (Bump1D, Bump1D, Bump1D))

    def scaled(self, s):
        return SeparableFunction(tuple((s * c, bs) for c, bs in self.terms))

    def __add__(self, other):
        return SeparableFunction(self.terms + other.terms)

    def box(self):
        lo = np.min([[b.a for b in bs] for _, bs in self.terms], axis=0)
        hi = np.max([[b.b for b in bs] for _, bs in self.terms], axis=0)
        return lo, hi


def _flat_operator(h, kappa):
    """``e^{x1/h}(-h²Δ)e^{-x1/h}`` acting on ``w e^{iκ·x}`` as a polynomial in ``∂``.

    Returns ``{(a1, a2, a3): coefficient}`` for the operator on ``w``.
    """
    ops = {}

    def add(k, v):
        ops[k] = ops.get(k, 0) + v

    for j in range(3):
        e = [0, 0, 0]
        e[j] = 2
        add(tuple(e), -h * h)
        e[j] = 1
        add(tuple(e), -2j * h * h * kappa[j])
    add((1, 0, 0), 2 * h)
    const = h * h * float(np.dot(kappa, kappa)) + 2j * h * kappa[0] - 1.0
    add((0, 0, 0), const)
    return ops


def _op_power(ops, m):
    out = {(0, 0, 0): 1.0 + 0j}
    for _ in range(m):
        new = {}
        for k1, v1 in out.items():
            for k2, v2 in ops.items():
                k = (k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2])
                new[k] = new.get(k, 0) + v1 * v2
        out = {k: v for k, v in new.items() if v != 0}
    return out


@lru_cache(maxsize=8)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def _inner_1d(b1, d1, b2, d2, h, n_gauss=240):
    """``∫ ∂^{d1}p1 · conj(∂^{d2}p2) e^{i(κ1-κ2)t} dt`` over the support overlap."""
    a, b = max(b1.a, b2.a), min(b1.b, b2.b)
    if b <= a:
        return 0j
    p1 = b1.poly.deriv(d1) if d1 else b1.poly
    p2 = b2.poly.deriv(d2) if d2 else b2.poly
    dk = (b1.kappa_unit - b2.kappa_unit) / h
    # Gauss-Legendre is exact for the polynomial part when dk == 0
    u, w = _leggauss(n_gauss)
    t = a + 0.5 * (u + 1) * (b - a)
    return complex(0.5 * (b - a) * np.sum(w * p1(t) * np.conj(p2(t)) * np.exp(1j * dk * t)))


def _norm2_after(u: SeparableFunction, h, m):
    """``‖P^m u‖²`` for the flat conjugated operator, exactly."""
    total = 0j
    terms = u.terms
    opsets = []
    for coef, bumps in terms:
        kappa = np.array([b.kappa_unit for b in bumps]) / h
        opsets.append(_op_power(_flat_operator(h, kappa), m) if m else {(0, 0, 0): 1.0 + 0j})
    cache = {}
    for i, (ci, bi) in enumerate(terms):
        for j, (cj, bj) in enumerate(terms):
            acc = 0j
            for ka, va in opsets[i].items():
                for kb, vb in opsets[j].items():
                    prod = va * np.conj(vb)
                    for ax in range(3):
                        key = (i, j, ax, ka[ax], kb[ax])
                        if key not in cache:
                            cache[key] = _inner_1d(bi[ax], ka[ax], bj[ax], kb[ax], h)
                        prod *= cache[key]
                        if prod == 0:
                            break
                    acc += prod
            total += ci * np.conj(cj) * acc
    return float(total.real)


def carleman_ratio(u: SeparableFunction, h_list, m=1, region=((-1, 1), (-1, 1), (-1, 1)),
                   product=None):
    """``min_h ‖P_φ^m u‖ / (h^m ‖u‖)`` for ``φ = x1`` on the flat product.

    Returns ``(min_ratio, ratios)``.
    """
    if product is not None and not (product.c_is_one and product.base.flat):
        raise NotImplementedError("exact Carleman evaluation is implemented for the flat product")
    lo, hi = u.box()
    reg = np.asarray(region, dtype=float)
    if np.any(lo <= reg[:, 0]) or np.any(hi >= reg[:, 1]):
        raise SupportError("test function must be supported strictly inside the region")
    h_list = np.asarray(h_list, dtype=float)
    if h_list.size == 0:
        raise ValueError("h_list is empty")
    ratios = []
    for h in h_list:
        base = _norm2_after(u, h, 0)
        if base <= 0:
            raise ValueError("test function vanishes")
        ratios.append(np.sqrt(max(_norm2_after(u, h, m), 0.0) / base) / h ** m)
    ratios = np.array(ratios)
    return float(ratios.min()), ratios


def random_carleman_function(seed, oscillating=True):
    """A random modulated product of polynomial bumps inside ``(-1, 1)³``.

    With ``oscillating`` the bump carries ``e^{iη·x'/h}`` with ``|η| = 1``
    transversal to ``x1``, i.e. it sits on the characteristic set of the
    conjugated operator where the estimate is tight.
    """
    rng = np.random.default_rng(seed)
    bumps = []
    beta = rng.uniform(0, 2 * np.pi)
    eta = (0.0, np.cos(beta), np.sin(beta)) if oscillating else (0.0, 0.0, 0.0)
    for j in range(3):
        hw = rng.uniform(0.3, 0.6)
        c = rng.uniform(-0.9 + hw, 0.9 - hw)
        bumps.append(Bump1D.polynomial_bump(c, hw, power=int(rng.integers(4, 8)), kappa_unit=eta[j]))
    return SeparableFunction(((complex(rng.normal(), rng.normal()), tuple(bumps)),))
