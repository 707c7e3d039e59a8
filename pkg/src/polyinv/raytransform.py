"""Attenuated geodesic ray transform of (function, 1-form) pairs and its adjoint.

The transform integrates ``f(γ) + α(γ̇)`` weighted by ``exp(-λ t)`` along each
geodesic entering the domain through an influx node.  Geodesic tracing is
separated from field evaluation: a :class:`RayPlan` holds quadrature nodes along
all rays, an :class:`AdjointPlan` holds backward exits for a set of target
points, so many fields can be pushed through one tracing pass.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from polyinv import _accel
from polyinv import integrate as _int
from polyinv.fields import OneFormD, PairField, ScalarFieldD, disk_quadrature
from polyinv.geometry import geodesics as geo

RAY_TOL = 1e-12


class CoverageError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# fan-beam data
# --------------------------------------------------------------------------

@dataclass
class FanBeamData:
    grid: geo.InfluxGrid
    values: np.ndarray        # (ns, nphi) complex
    lam: float
    valid: np.ndarray = None  # (ns, nphi) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.valid is None:
            self.valid = np.isfinite(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError("value array does not match the influx grid")

    def norm(self):
        """``L²_μ`` norm over valid nodes."""
        w = self.grid.weight * self.grid.mu
        v = np.where(self.valid, self.values, 0.0)
        return float(np.sqrt(np.sum(w * np.abs(v) ** 2)))

    def inner(self, other):
        w = self.grid.weight * self.grid.mu
        ok = self.valid & other.valid
        return np.sum(np.where(ok, w * self.values * np.conj(other.values), 0.0))

    def to_csv(self, path, delimiter=","):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, delimiter=delimiter)
            wr.writerow(["s", "phi", "re", "im", "valid"])
            for i, s in enumerate(self.grid.s):
                for j, p in enumerate(self.grid.phi):
                    z = self.values[i, j]
                    wr.writerow([repr(float(s)), repr(float(p)), repr(float(z.real)),
                                 repr(float(z.imag)), int(self.valid[i, j])])

    @classmethod
    def from_function(cls, grid, fn, lam=0.0):
        """Sample ``fn(s, phi)`` on the grid (test data for the adjoint)."""
        S, P = np.meshgrid(grid.s, grid.phi, indexing="ij")
        return cls(grid=grid, values=fn(S, P), lam=lam)


# --------------------------------------------------------------------------
# forward transform
# --------------------------------------------------------------------------

def _panel_rule(n_points, panels):
    if n_points % panels:
        raise ValueError("n_points must be divisible by the panel count")
    u, w = np.polynomial.legendre.leggauss(n_points // panels)
    t = np.concatenate([(k + 0.5 * (u + 1)) / panels for k in range(panels)])
    return t, np.tile(0.5 * w / panels, panels)


@dataclass
class RayPlan:
    """Quadrature nodes along every ray of an influx grid."""
    grid: geo.InfluxGrid
    tau: np.ndarray       # (N,)
    t: np.ndarray         # (N, k) times
    w: np.ndarray         # (N, k) weights (include τ)
    x: np.ndarray         # (N, k, 2)
    v: np.ndarray         # (N, k, 2)
    valid: np.ndarray     # (N,)

    def apply(self, lam, pair):
        return self.integrate(lam, pair.integrand(self.x, self.v))

    def integrate(self, lam, integrand):
        """Attenuated sums of precomputed ``integrand`` values of shape ``(N, k)``."""
        vals = np.sum(self.w * integrand * np.exp(-lam * self.t), axis=1)
        vals = np.where(self.valid, vals, np.nan)
        return FanBeamData(grid=self.grid, values=vals.reshape(self.grid.shape), lam=lam,
                           valid=self.valid.reshape(self.grid.shape))


def ray_plan(metric, grid, n_points=64, panels=4, quad_step=None, tol=RAY_TOL):
    """Trace all rays of ``grid``: exit times first, then states at quadrature times.

    With ``quad_step`` the panel count is ``ceil(max τ / quad_step)`` and every
    panel keeps ``n_points // panels`` Gauss nodes.
    """
    x0, v0 = grid.flat()
    tau, res = geo.exit_times(metric, x0, v0, tol=tol)
    valid = np.isfinite(tau) & (tau > 0)
    if quad_step is not None:
        order = n_points // panels
        panels = max(1, int(np.ceil(np.nanmax(np.where(valid, tau, 0)) / quad_step)))
        n_points = order * panels
    tn, wn = _panel_rule(n_points, panels)
    tt = np.where(valid, tau, 0.0)[:, None] * tn[None, :]
    states = np.zeros((tau.size, tn.size, 4))
    idx = np.nonzero(valid)[0]
    if idx.size:
        states[idx] = geo.flow_to_times(metric, x0[idx], v0[idx], tt[idx], tol=tol)
    return RayPlan(grid=grid, tau=tau, t=tt, w=np.where(valid, tau, 0.0)[:, None] * wn[None, :],
                   x=states[..., :2], v=states[..., 2:], valid=valid)


def forward_T(lam, pair, grid, metric, n_points=64, panels=4, quad_step=None, plan=None):
    """``T_λ[f, α]`` sampled on the influx grid."""
    if plan is None:
        plan = ray_plan(metric, grid, n_points=n_points, panels=panels, quad_step=quad_step)
    return plan.apply(lam, pair)


# --------------------------------------------------------------------------
# adjoint
# --------------------------------------------------------------------------

@dataclass
class AdjointPlan:
    """Backward exits ``(s, φ, τ(x, -v))`` for directions ``v`` at target points."""
    points: np.ndarray     # (P, 2)
    dirs: np.ndarray       # (P, K, 2) unit vectors
    dsigma: float          # weight of each direction (2π/K)
    s: np.ndarray          # (P, K)
    phi: np.ndarray        # (P, K)
    tau_back: np.ndarray   # (P, K)

    def apply(self, h: FanBeamData):
        if not np.all(h.valid):
            raise CoverageError("fan-beam data has invalid nodes; adjoint coverage incomplete")
        g = h.grid
        vals = _accel.interp_cubic(h.values, g.s[0], g.ds, g.phi, self.s.ravel(), self.phi.ravel())
        hpsi = vals.reshape(self.s.shape) * np.exp(-h.lam * self.tau_back) * self.dsigma
        scalar = hpsi.sum(axis=1)
        vec = np.einsum("pk,pki->pi", hpsi, self.dirs)
        return scalar, vec


def adjoint_plan(metric, points, sphere_nodes=32, tol=RAY_TOL):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(~metric.domain.contains(points)):
        raise CoverageError("adjoint target outside the open domain")
    P, K = points.shape[0], int(sphere_nodes)
    ang = np.arange(K) * (2 * np.pi / K)
    xr = np.repeat(points, K, axis=0)
    dirs = metric.unit_vector(xr, np.tile(ang, P))
    tau, res = geo.exit_times(metric, xr, -dirs, tol=tol)
    if np.any(~np.isfinite(tau)):
        raise CoverageError("backward geodesic failed for some target directions")
    y_exit = res.y_end[:, :2]
    w_exit = res.y_end[:, 2:]
    s, phi = geo.influx_coords(metric, y_exit, -w_exit)
    return AdjointPlan(points=points, dirs=dirs.reshape(P, K, 2), dsigma=2 * np.pi / K,
                       s=s.reshape(P, K), phi=phi.reshape(P, K), tau_back=tau.reshape(P, K))


def adjoint_Tstar(lam, h, x, metric, sphere_nodes=32, plan=None):
    """``T*_λ h`` at the points ``x``: scalar part and covector part (lowered index)."""
    if plan is None:
        plan = adjoint_plan(metric, x, sphere_nodes)
    if h.lam != lam:
        h = FanBeamData(grid=h.grid, values=h.values, lam=lam, valid=h.valid)
    scalar, vec = plan.apply(h)
    cov = np.einsum("pij,pj->pi", metric.g0(plan.points), vec)
    return scalar, cov


# --------------------------------------------------------------------------
# Santaló identity
# --------------------------------------------------------------------------

@dataclass
class SantaloSetup:
    """Everything the adjoint identity needs at one resolution."""
    metric: object
    grid: geo.InfluxGrid
    rays: RayPlan
    quad: tuple
    adjoint: AdjointPlan

    @classmethod
    def build(cls, metric, n_s=128, n_phi=64, n_points=64, n_r=20, n_theta=40, sphere_nodes=32):
        grid = geo.influx_grid(metric, n_s, n_phi)
        rays = ray_plan(metric, grid, n_points=n_points)
        quad = disk_quadrature(metric.domain, n_r, n_theta)
        return cls(metric=metric, grid=grid, rays=rays, quad=quad,
                   adjoint=adjoint_plan(metric, quad[0], sphere_nodes))

    def pair_with_adjoint(self, lam, pair, h):
        x, w = self.quad
        scalar, vec = self.adjoint.apply(FanBeamData(self.grid, h.values, lam, h.valid))
        sq = self.metric.sqrt_det(x)
        dens = pair.f(x) * np.conj(scalar) + np.einsum("pi,pi->p", pair.alpha(x), np.conj(vec))
        return np.sum(w * sq * dens)


def santalo_check(lam, pair, h_fn, setup: SantaloSetup, abs_floor=1e-300):
    """Relative defect of ``(T pair, h)_μ = (pair, T* h)``.

    ``h_fn(s, φ)`` is the test function on the influx chart.  Returns
    ``(defect, lhs, rhs, is_relative)``; a vanishing denominator yields the
    absolute defect.
    """
    h = FanBeamData.from_function(setup.grid, h_fn, lam)
    lhs = setup.rays.apply(lam, pair).inner(h)
    rhs = setup.pair_with_adjoint(lam, pair, h)
    den = max(abs(lhs), abs(rhs))
    if den <= abs_floor:
        return abs(lhs - rhs), lhs, rhs, False
    return abs(lhs - rhs) / den, lhs, rhs, True


# --------------------------------------------------------------------------
# normal operator
# --------------------------------------------------------------------------

@dataclass
class PairSamples:
    """A pair sampled at quadrature points (output of the normal operator)."""
    points: np.ndarray
    weights: np.ndarray
    f: np.ndarray
    alpha: np.ndarray

    def inner(self, metric, pair):
        """``𝓛²`` pairing of these samples with an analytic pair."""
        x = self.points
        ginv = metric.inverse(x)
        dens = (self.f * np.conj(pair.f(x))
                + np.einsum("pi,pij,pj->p", self.alpha, ginv, np.conj(pair.alpha(x))))
        return np.sum(self.weights * metric.sqrt_det(x) * dens)


def normal_operator(lam, pair, setup: SantaloSetup):
    """``T*_λ T_λ pair`` on the setup's area quadrature points."""
    data = setup.rays.apply(lam, pair)
    scalar, vec = setup.adjoint.apply(data)
    cov = np.einsum("pij,pj->pi", setup.metric.g0(setup.quad[0]), vec)
    return PairSamples(points=setup.quad[0], weights=setup.quad[1], f=scalar, alpha=cov)


# --------------------------------------------------------------------------
# kernel pairs
# --------------------------------------------------------------------------

def kernel_pair(lam, p: ScalarFieldD, boundary_samples=256, tol=1e-10):
    """``[-λ p, dp]`` for a potential vanishing on the boundary."""
    if p.grad is None:
        raise PreconditionError("potential needs an analytic gradient")
    s = np.linspace(0, 2 * np.pi, boundary_samples, endpoint=False)
    bvals = p(p.domain.point(s))
    if np.max(np.abs(bvals)) > tol:
        raise PreconditionError(f"potential does not vanish on the boundary ({np.max(np.abs(bvals)):.2e})")
    f = ScalarFieldD(values=lambda x: -lam * p.values(x), name=f"-{lam}*p")
    return PairField(f=f, alpha=OneFormD(components=p.grad, name="dp"))


def kernel_ratio(lam, p, plan):
    """``‖T[-λp, dp]‖ / ‖T[p, 0]‖`` on a ray plan."""
    num = plan.apply(lam, kernel_pair(lam, p)).norm()
    den = plan.apply(lam, PairField(p, OneFormD.zero())).norm()
    return num / den


# --------------------------------------------------------------------------
# solenoidal decomposition
# --------------------------------------------------------------------------

@dataclass
class SolenoidalResult:
    xs: np.ndarray            # (n,) grid coordinates (square grid)
    inside: np.ndarray        # (n, n) bool, nodes with bdf < 0
    p: np.ndarray             # (n, n) potential (0 outside)
    dp: np.ndarray            # (n, n, 2) centered differences of p (NaN outside)
    alpha: np.ndarray         # (n, n, 2) input form at nodes
    residual: float           # linear-solve residual

    @property
    def alpha_s(self):
        return self.alpha - self.dp

    @property
    def h(self):
        return float(self.xs[1] - self.xs[0])

    def potential_field(self):
        """``p`` as a bicubic spline field (zero-extended outside the domain)."""
        from scipy.interpolate import RectBivariateSpline
        pre = RectBivariateSpline(self.xs, self.xs, self.p.real, kx=3, ky=3)
        pim = RectBivariateSpline(self.xs, self.xs, self.p.imag, kx=3, ky=3)

        def values(x):
            x = np.asarray(x, dtype=float)
            return (pre.ev(x[..., 0], x[..., 1]) + 1j * pim.ev(x[..., 0], x[..., 1]))

        def grad(x):
            x = np.asarray(x, dtype=float)
            gx = pre.ev(x[..., 0], x[..., 1], dx=1) + 1j * pim.ev(x[..., 0], x[..., 1], dx=1)
            gy = pre.ev(x[..., 0], x[..., 1], dy=1) + 1j * pim.ev(x[..., 0], x[..., 1], dy=1)
            return np.stack([gx, gy], axis=-1)

        return ScalarFieldD(values=values, grad=grad, name="p_grid")


def _arm_lengths(domain, X, Y, h, inside):
    """Distance from each inside node to the next node or the boundary along ±x, ±y."""
    arms = {}
    for key, d in (("e", (1, 0)), ("w", (-1, 0)), ("n", (0, 1)), ("s", (0, -1))):
        length = np.full(X.shape, h)
        nb = np.roll(inside, shift=(-d[0], -d[1]), axis=(0, 1))
        if d[0] == 1:
            nb[-1, :] = False
        if d[0] == -1:
            nb[0, :] = False
        if d[1] == 1:
            nb[:, -1] = False
        if d[1] == -1:
            nb[:, 0] = False
        cut = inside & ~nb
        if cut.any():
            px, py = X[cut], Y[cut]
            lo = np.zeros(px.size)
            hi = np.full(px.size, h)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                f = domain.bdf(np.stack([px + d[0] * mid, py + d[1] * mid], -1))
                lo = np.where(f < 0, mid, lo)
                hi = np.where(f < 0, hi, mid)
            length[cut] = 0.5 * (lo + hi)
        arms[key] = (length, cut)
    return arms


def _diffusion_tensor(metric, x):
    g = metric.g0(x)
    if np.max(np.abs(g[..., 0, 1])) > 1e-14:
        raise SolverError("the five-point solver needs a diagonal metric")
    sq = np.sqrt(g[..., 0, 0] * g[..., 1, 1])
    return sq / g[..., 0, 0], sq / g[..., 1, 1]


def solenoidal_decompose(alpha: OneFormD, metric, grid_n=129):
    """Split ``α = α^s + dp`` with ``δ α^s = 0`` and ``p = 0`` on the boundary.

    Solves ``∂_i(√|g| g^{ij} ∂_j p) = ∂_i(√|g| g^{ij} α_j)`` with a cut-cell
    five-point scheme; fluxes of ``α`` use the same arms as those of ``dp``, so
    the discrete divergence of ``α^s`` vanishes to solver precision.
    """
    dom = metric.domain
    R = dom.max_radius() * (1 + 1e-9)
    xs = np.linspace(-R, R, grid_n)
    h = float(xs[1] - xs[0])
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.stack([X, Y], -1)
    inside = dom.contains(nodes)
    arms = _arm_lengths(dom, X, Y, h, inside)
    idx = -np.ones(X.shape, dtype=np.int64)
    idx[inside] = np.arange(inside.sum())
    n_unk = int(inside.sum())
    rows, cols, vals = [], [], []
    rhs = np.zeros(n_unk, dtype=complex)
    diag = np.zeros(n_unk)
    I, J = np.nonzero(inside)
    me = idx[I, J]
    for key, d, axis in (("e", (1, 0), 0), ("w", (-1, 0), 0), ("n", (0, 1), 1), ("s", (0, -1), 1)):
        length, cut = arms[key]
        L = length[I, J]
        opp = {"e": "w", "w": "e", "n": "s", "s": "n"}[key]
        Lsum = L + arms[opp][0][I, J]
        mid = nodes[I, J] + 0.5 * L[:, None] * np.array(d, dtype=float)
        A = _diffusion_tensor(metric, mid)[axis]
        coef = 2.0 * A / (L * Lsum)
        diag -= coef
        inner = ~cut[I, J]
        ii = np.clip(I + d[0], 0, grid_n - 1)
        jj = np.clip(J + d[1], 0, grid_n - 1)
        rows.append(me[inner])
        cols.append(idx[ii, jj][inner])
        vals.append(coef[inner])
        a_mid = alpha(mid)[:, axis]
        rhs += np.sign(d[0] + d[1]) * 2.0 * A * a_mid / Lsum
    rows.append(me)
    cols.append(me)
    vals.append(diag)
    Amat = sps.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n_unk, n_unk))
    try:
        lu = spla.splu(Amat)
        sol = lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    except RuntimeError as exc:
        raise SolverError(str(exc)) from exc
    resid = float(np.linalg.norm(Amat @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
    p = np.zeros(X.shape, dtype=complex)
    p[inside] = sol
    # dp from the arms: non-uniform centered difference (second order)
    dp = np.full(X.shape + (2,), np.nan + 0j)
    for axis, (kp, km, d) in enumerate((("e", "w", (1, 0)), ("n", "s", (0, 1)))):
        Lp, cp = arms[kp][0][I, J], arms[kp][1][I, J]
        Lm, cm = arms[km][0][I, J], arms[km][1][I, J]
        pp = np.where(cp, 0.0, p[np.clip(I + d[0], 0, grid_n - 1), np.clip(J + d[1], 0, grid_n - 1)])
        pm = np.where(cm, 0.0, p[np.clip(I - d[0], 0, grid_n - 1), np.clip(J - d[1], 0, grid_n - 1)])
        p0 = p[I, J]
        dp[I, J, axis] = (Lm ** 2 * (pp - p0) + Lp ** 2 * (p0 - pm)) / (Lp * Lm * (Lp + Lm))
    alpha_nodes = np.full(X.shape + (2,), np.nan + 0j)
    alpha_nodes[inside] = alpha(nodes[inside])
    return SolenoidalResult(xs=xs, inside=inside, p=p, dp=dp, alpha=alpha_nodes, residual=resid)


def codifferential_defect(metric, result: SolenoidalResult, margin=2, inset=0.0):
    """Max of ``|δ α^s|`` by centered differences on nodes ``margin`` cells inside.

    ``inset > 0`` also drops nodes closer than that to the boundary; the cut-cell
    layer converges at first order only, the interior at second order.
    """
    xs, h = result.xs, result.h
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.stack([X, Y], -1)
    ok = result.inside.copy()
    for _ in range(margin):
        ok &= np.roll(ok, 1, 0) & np.roll(ok, -1, 0) & np.roll(ok, 1, 1) & np.roll(ok, -1, 1)
    if inset > 0:
        ok &= metric.domain.contains(nodes, margin=inset)
    a = result.alpha_s
    A1, A2 = _diffusion_tensor(metric, nodes)
    F1 = np.where(result.inside, A1 * a[..., 0], 0)
    F2 = np.where(result.inside, A2 * a[..., 1], 0)
    div = ((np.roll(F1, -1, 0) - np.roll(F1, 1, 0)) + (np.roll(F2, -1, 1) - np.roll(F2, 1, 1))) / (2 * h)
    div = div / metric.sqrt_det(nodes)
    return float(np.max(np.abs(div[ok])))


# --------------------------------------------------------------------------
# conditioning
# --------------------------------------------------------------------------

@dataclass
class ConditioningReport:
    singular_values: np.ndarray
    lam: float
    basis_size: int

    @property
    def smallest(self):
        return float(self.singular_values[-1])

    @property
    def condition(self):
        return float(self.singular_values[0] / self.singular_values[-1])


def transform_matrix(lam, pairs, plan):
    """Columns ``sqrt(w μ) T_λ(pair_k)`` over the influx nodes."""
    sw = np.sqrt((plan.grid.weight * plan.grid.mu).ravel())
    cols = [sw * np.nan_to_num(plan.apply(lam, p).values.ravel()) for p in pairs]
    return np.column_stack(cols)


def gaussian_basis(n, seed=0, width=0.3, radius=0.4, with_forms=True, metric=None):
    """Random smooth functions and (optionally) co-closed 1-forms on the unit disk.

    Functions are Gaussians damped by ``(1 - |x|²)³`` so that transforms stay
    smooth up to tangential rays.  The 1-form parts are ``α = g ε ∇ψ / √|g|``
    for stream functions ``ψ = Gaussian · (1 - |x|²)⁴``; they are co-closed for
    any metric.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for k in range(n):
        c = rng.uniform(-radius, radius, 2)
        amp = rng.normal()
        if with_forms and k % 2 == 1:
            pairs.append(PairField(ScalarFieldD.zero(),
                                   OneFormD(components=_stream_form(c, amp, width, metric),
                                            name=f"curl{k}")))
            continue

        def fvals(x, c=c, amp=amp):
            x = np.asarray(x, dtype=float)
            damp = np.clip(1 - np.sum(x ** 2, axis=-1), 0, None) ** 3
            return amp * np.exp(-np.sum((x - c) ** 2, axis=-1) / width ** 2) * damp + 0j

        pairs.append(PairField(ScalarFieldD(values=fvals, name=f"gauss{k}"), OneFormD.zero()))
    return pairs


def _stream_form(c, amp, width, metric):
    def avals(x):
        x = np.asarray(x, dtype=float)
        d = x - c
        gauss = amp * np.exp(-np.sum(d ** 2, axis=-1) / width ** 2)
        one = np.clip(1 - np.sum(x ** 2, axis=-1), 0, None)
        damp = one ** 4
        grad = (-2 * d / width ** 2 * damp[..., None] - 8 * x * (one ** 3)[..., None]) * gauss[..., None]
        rot = np.stack([-grad[..., 1], grad[..., 0]], axis=-1)
        if metric is None:
            return rot + 0j
        g = metric.g0(x)
        return np.einsum("...ij,...j->...i", g, rot) / metric.sqrt_det(x)[..., None] + 0j
    return avals


def conditioning_study(lam, basis_size, metric, plan=None, basis=None, seed=0):
    """Singular values of ``T_λ`` restricted to a basis (Gram spectrum, square-rooted)."""
    if plan is None:
        plan = ray_plan(metric, geo.influx_grid(metric, 64, 32))
    if basis is None:
        basis = gaussian_basis(basis_size, seed=seed, metric=metric)
    M = transform_matrix(lam, basis, plan)
    gram = M.conj().T @ M
    ev = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))[::-1]
    return ConditioningReport(singular_values=np.sqrt(np.clip(ev, 0, None)), lam=lam,
                              basis_size=len(basis))


def random_santalo_couple(seed, width=0.45, spread=0.3):
    """A random smooth pair and influx test function ``h(s, φ)``.

    ``h`` is a low-order trigonometric polynomial in ``s`` times ``cos²φ``
    (vanishing at tangential directions) with a mild odd part in ``φ``.
    """
    rng = np.random.default_rng(seed)
    c = rng.uniform(-spread, spread, 2)
    c2 = rng.uniform(-spread, spread, 2)
    a = rng.normal(size=4)
    hc = rng.normal(size=4)
    s1, s2 = rng.uniform(0, 2 * np.pi, 2)

    def fvals(x):
        return a[0] * np.exp(-np.sum((np.asarray(x) - c) ** 2, axis=-1) / width ** 2) + 0j

    def avals(x):
        env = np.exp(-np.sum((np.asarray(x) - c2) ** 2, axis=-1) / width ** 2)
        return env[..., None] * np.array([a[1], a[2] + 1j * a[3]])

    def h(s, phi):
        ring = hc[0] + 0.5 * hc[1] * np.cos(s - s1) + 0.25 * hc[2] * np.cos(2 * (s - s2))
        return ring * np.cos(phi) ** 2 * (1 + 0.3 * hc[3] * np.sin(phi))

    return PairField(ScalarFieldD(values=fvals, name="gauss"), OneFormD(components=avals, name="gauss-form")), h


def kernel_potentials(n, seed=0, width=0.5):
    """Potentials ``p = (1 - |x|²)(a + b·x + c e^{-|x-x0|²/w²})`` vanishing on the unit circle."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        a, c = complex(rng.normal(), rng.normal()), rng.normal()
        b = rng.normal(size=2)
        x0 = rng.uniform(-0.4, 0.4, 2)

        def values(x, a=a, b=b, c=c, x0=x0):
            x = np.asarray(x, dtype=float)
            inner = a + x @ b + c * np.exp(-np.sum((x - x0) ** 2, axis=-1) / width ** 2)
            return (1 - np.sum(x ** 2, axis=-1)) * inner

        def grad(x, a=a, b=b, c=c, x0=x0):
            x = np.asarray(x, dtype=float)
            g = np.exp(-np.sum((x - x0) ** 2, axis=-1) / width ** 2)
            inner = a + x @ b + c * g
            dinner = b + (c * g)[..., None] * (-2 * (x - x0) / width ** 2)
            one = 1 - np.sum(x ** 2, axis=-1)
            return -2 * x * inner[..., None] + one[..., None] * dinner

        out.append(ScalarFieldD(values=values, grad=grad, name="kernel-potential"))
    return out
