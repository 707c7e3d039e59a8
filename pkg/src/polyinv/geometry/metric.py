"""Metric containers: star-shaped domains, transversal 2-D metrics, conformal products."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp

from polyinv._accel import geodesic_accel

EPS_PD = 1e-8
_EPS = np.finfo(float).eps


class DomainError(ValueError):
    pass


class DefinitenessError(ValueError):
    pass


def array_function(exprs, symbols):
    """Lambdify a (nested) array of sympy expressions into a broadcasting callable.

    The callable takes ``x`` of shape ``(..., len(symbols))`` and returns an
    array of shape ``(...,) + shape(exprs)``.
    """
    arr = np.array(exprs, dtype=object)
    shape = arr.shape
    flat = [sp.sympify(e) for e in arr.ravel()]
    fn = sp.lambdify(symbols, flat, modules="numpy", cse=True)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        vals = fn(*[x[..., i] for i in range(len(symbols))])
        out = np.empty(lead + (len(flat),))
        for k, v in enumerate(vals):
            out[..., k] = v
        return out.reshape(lead + shape)

    return evaluate


# --------------------------------------------------------------------------
# domain
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StarDomain:
    """Region ``{ρ(cos s, sin s): ρ < R(s)}`` star-shaped about the origin.

    The boundary-defining function is ``|x| - R(atan2(x))``: negative inside.
    """
    radius: Callable = lambda s: np.ones_like(np.asarray(s, dtype=float))
    dradius: Callable = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    d2radius: Callable = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    name: str = "unit_disk"

    def bdf(self, x):
        x = np.asarray(x, dtype=float)
        s = np.arctan2(x[..., 1], x[..., 0])
        return np.hypot(x[..., 0], x[..., 1]) - self.radius(s)

    def grad_bdf(self, x):
        x = np.asarray(x, dtype=float)
        rr = x[..., 0] ** 2 + x[..., 1] ** 2
        r = np.sqrt(rr)
        dr = self.dradius(np.arctan2(x[..., 1], x[..., 0]))
        return np.stack([x[..., 0] / r + dr * x[..., 1] / rr, x[..., 1] / r - dr * x[..., 0] / rr], axis=-1)

    def contains(self, x, margin=0.0):
        return self.bdf(x) < -margin

    def point(self, s):
        s = np.asarray(s, dtype=float)
        r = self.radius(s)
        return np.stack([r * np.cos(s), r * np.sin(s)], axis=-1)

    def tangent(self, s):
        """d/ds of the boundary parameterization (counter-clockwise)."""
        s = np.asarray(s, dtype=float)
        r, dr = self.radius(s), self.dradius(s)
        return np.stack([dr * np.cos(s) - r * np.sin(s), dr * np.sin(s) + r * np.cos(s)], axis=-1)

    def accel(self, s):
        s = np.asarray(s, dtype=float)
        r, dr, d2r = self.radius(s), self.dradius(s), self.d2radius(s)
        return np.stack([(d2r - r) * np.cos(s) - 2 * dr * np.sin(s),
                         (d2r - r) * np.sin(s) + 2 * dr * np.cos(s)], axis=-1)

    def param_of(self, x):
        x = np.asarray(x, dtype=float)
        return np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)

    def max_radius(self, n=720):
        return float(np.max(self.radius(np.linspace(0, 2 * np.pi, n, endpoint=False))))

    @property
    def diameter(self):
        return 2.0 * self.max_radius()

    def sample(self, n, rng, margin=0.0):
        """Uniform-in-area points with ``bdf < -margin`` (rejection from the bounding box)."""
        rmax = self.max_radius()
        out = np.empty((0, 2))
        while out.shape[0] < n:
            cand = rng.uniform(-rmax, rmax, size=(2 * n + 8, 2))
            out = np.vstack([out, cand[self.contains(cand, margin)]])
        return out[:n]


def unit_disk():
    return StarDomain()


def disk(radius):
    r = float(radius)
    return StarDomain(radius=lambda s: np.full_like(np.asarray(s, dtype=float), r),
                      name=f"disk_{r:g}")


# --------------------------------------------------------------------------
# transversal metric
# --------------------------------------------------------------------------

def _inv2(g):
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    inv = np.empty_like(g)
    inv[..., 0, 0] = g[..., 1, 1] / det
    inv[..., 1, 1] = g[..., 0, 0] / det
    inv[..., 0, 1] = -g[..., 0, 1] / det
    inv[..., 1, 0] = -g[..., 1, 0] / det
    return inv, det


def _fd_first(fn, x, h):
    x = np.asarray(x, dtype=float)
    parts = []
    for l in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[l] = h
        parts.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(parts, axis=x.ndim - 1)


@dataclass(frozen=True)
class MetricField2D:
    """Simple metric ``g0`` on a star-shaped domain ``D``.

    ``g0(x)`` returns ``(..., 2, 2)``; ``dg0(x)[..., l, i, j] = ∂_l g_ij`` and
    ``d2g0(x)[..., l, m, i, j] = ∂_l ∂_m g_ij``.  When derivatives are produced by
    finite differences ``fd_derivatives`` is set and reported by diagnostics.
    """
    name: str
    domain: StarDomain
    g0: Callable
    dg0: Callable
    d2g0: Callable
    fd_derivatives: bool = False
    flat: bool = False

    # -- construction ------------------------------------------------------
    @classmethod
    def from_sympy(cls, name, matrix, symbols=None, domain=None, flat=False):
        """Build from a 2x2 sympy expression in symbols ``(x, y)`` with exact derivatives."""
        if symbols is None:
            symbols = sp.symbols("x y", real=True)
        M = sp.Matrix(matrix)
        dM = [[[sp.diff(M[i, j], symbols[l]) for j in range(2)] for i in range(2)] for l in range(2)]
        d2M = [[[[sp.diff(M[i, j], symbols[l], symbols[m]) for j in range(2)] for i in range(2)]
                 for m in range(2)] for l in range(2)]
        return cls(name=name, domain=domain or unit_disk(),
                   g0=array_function(M.tolist(), symbols),
                   dg0=array_function(dM, symbols),
                   d2g0=array_function(d2M, symbols), flat=flat)

    @classmethod
    def from_callable(cls, name, g0, dg0=None, d2g0=None, domain=None, scale=1.0):
        """Wrap callables; missing derivatives fall back to central differences (flagged)."""
        fd = dg0 is None or d2g0 is None
        if dg0 is None:
            h1 = _EPS ** (1 / 3) * scale
            dg0 = lambda x: _fd_first(g0, x, h1)  # noqa: E731
        if d2g0 is None:
            h2 = _EPS ** (1 / 3) * scale if not fd else _EPS ** (1 / 4) * scale
            d1 = dg0
            d2g0 = lambda x: _fd_first(d1, x, h2)  # noqa: E731
        return cls(name=name, domain=domain or unit_disk(), g0=g0, dg0=dg0, d2g0=d2g0,
                   fd_derivatives=fd)

    # -- pointwise geometry ------------------------------------------------
    def inverse(self, x):
        return _inv2(self.g0(x))[0]

    def sqrt_det(self, x):
        g = self.g0(x)
        return np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0])

    def inner(self, x, u, v):
        return np.einsum("...i,...ij,...j->...", u, self.g0(x), v)

    def norm2(self, x, v):
        return self.inner(x, v, v)

    def frame(self, x):
        """Matrix ``E`` with ``E^T g0 E = I`` (columns are an orthonormal frame)."""
        g = self.g0(x)
        a = np.sqrt(g[..., 0, 0])
        b = g[..., 0, 1] / a
        c = np.sqrt(g[..., 1, 1] - b * b)
        E = np.zeros_like(g)
        E[..., 0, 0] = 1.0 / a
        E[..., 0, 1] = -b / (a * c)
        E[..., 1, 1] = 1.0 / c
        return E

    def unit_vector(self, x, angle):
        """Unit vector making ``angle`` with the first frame direction at ``x``."""
        E = self.frame(x)
        w = np.stack([np.cos(angle), np.sin(angle)], axis=-1)
        return np.einsum("...ij,...j->...i", E, w)

    def frame_angle(self, x, v):
        """Inverse of :meth:`unit_vector` (angle of ``v`` in the orthonormal frame)."""
        E = self.frame(x)
        Einv = _inv2(E)[0]
        w = np.einsum("...ij,...j->...i", Einv, v)
        return np.arctan2(w[..., 1], w[..., 0])

    def christoffel(self, x):
        return _christoffel(self.inverse(x), self.dg0(x))

    def christoffel_derivative(self, x):
        """``(Γ, ∂Γ)`` with ``∂Γ[..., m, i, j, k] = ∂_m Γ^i_jk``."""
        g = self.g0(x)
        ginv = _inv2(g)[0]
        dg = self.dg0(x)
        d2g = self.d2g0(x)
        low = 0.5 * (np.einsum("...jlk->...ljk", dg) + np.einsum("...klj->...ljk", dg) - dg)
        gam = np.einsum("...il,...ljk->...ijk", ginv, low)
        # ∂_m g^{il} = -g^{ia} ∂_m g_ab g^{bl}
        dginv = -np.einsum("...ia,...mab,...bl->...mil", ginv, dg, ginv)
        dlow = 0.5 * (np.einsum("...mjlk->...mljk", d2g) + np.einsum("...mklj->...mljk", d2g) - d2g)
        dgam = (np.einsum("...mil,...ljk->...mijk", dginv, low)
                + np.einsum("...il,...mljk->...mijk", ginv, dlow))
        return gam, dgam

    # -- ODE right-hand sides ---------------------------------------------
    def geodesic_rhs(self, y):
        x, v = y[:, :2], y[:, 2:4]
        out = np.empty_like(y)
        out[:, :2] = v
        out[:, 2:] = geodesic_accel(self.g0(x), self.dg0(x), v)
        return out

    def jacobi_rhs(self, y):
        """Geodesic flow plus its linearization: state ``(x, v, J, J')``."""
        x, v, J, dJ = y[:, :2], y[:, 2:4], y[:, 4:6], y[:, 6:8]
        gam, dgam = self.christoffel_derivative(x)
        acc = -np.einsum("nijk,nj,nk->ni", gam, v, v)
        ddJ = (-np.einsum("nmijk,nm,nj,nk->ni", dgam, J, v, v)
               - 2.0 * np.einsum("nijk,nj,nk->ni", gam, v, dJ))
        return np.concatenate([v, acc, dJ, ddJ], axis=1)

    # -- invariants --------------------------------------------------------
    def validate(self, n=200, seed=0, eps_pd=EPS_PD):
        """Check symmetry, definiteness and derivative consistency on random samples."""
        rng = np.random.default_rng(seed)
        x = self.domain.sample(n, rng)
        g = self.g0(x)
        asym = float(np.max(np.abs(g - np.swapaxes(g, -1, -2))))
        min_eig = float(np.min(np.linalg.eigvalsh(g)))
        h = 1e-4
        fd = _fd_first(self.g0, x, h)
        d_err = float(np.max(np.abs(fd - self.dg0(x))))
        report = {"asymmetry": asym, "min_eigenvalue": min_eig, "dg0_fd_defect": d_err,
                  "fd_derivatives": self.fd_derivatives}
        if asym > 1e-12:
            raise DefinitenessError(f"{self.name}: g0 not symmetric ({asym:.2e})")
        if min_eig < eps_pd:
            raise DefinitenessError(f"{self.name}: smallest eigenvalue {min_eig:.3e} < {eps_pd}")
        return report


def _christoffel(ginv, dg):
    # Γ_{l j k} = ½(∂_j g_lk + ∂_k g_lj − ∂_l g_jk), dg[..., l, i, j] = ∂_l g_ij
    low = 0.5 * (np.einsum("...jlk->...ljk", dg) + np.einsum("...klj->...ljk", dg) - dg)
    return np.einsum("...il,...ljk->...ijk", ginv, low)


def christoffels(metric, x):
    """Christoffel symbols ``Γ^i_jk`` of ``metric`` at ``x`` (shape ``(..., 2, 2, 2)``)."""
    x = np.asarray(x, dtype=float)
    if np.any(metric.domain.bdf(x) > 1e-12):
        raise DomainError("point outside the domain")
    g = metric.g0(x)
    if np.any(np.linalg.eigvalsh(g)[..., 0] < EPS_PD):
        raise DefinitenessError("metric not positive definite at the given point")
    return metric.christoffel(x)


# --------------------------------------------------------------------------
# conformal product  g = c(x) (1 ⊕ g0(x'))
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConformalProduct:
    name: str
    base: MetricField2D
    c: Callable
    dc: Callable
    d2c: Callable
    x1_range: tuple = (-1.0, 1.0)
    c_is_one: bool = False
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_sympy(cls, name, base, c_expr, x1_range=(-1.0, 1.0), symbols=None):
        if symbols is None:
            symbols = sp.symbols("x1 x y", real=True)
        c_expr = sp.sympify(c_expr)
        grad = [sp.diff(c_expr, s) for s in symbols]
        hess = [[sp.diff(c_expr, a, b) for b in symbols] for a in symbols]
        return cls(name=name, base=base,
                   c=array_function(c_expr, symbols),
                   dc=array_function(grad, symbols),
                   d2c=array_function(hess, symbols),
                   x1_range=tuple(x1_range), c_is_one=(c_expr == 1),
                   extra={"c_expr": c_expr, "symbols": symbols})

    def metric(self, X):
        X = np.asarray(X, dtype=float)
        c = self.c(X)
        g = np.zeros(X.shape[:-1] + (3, 3))
        g[..., 0, 0] = c
        g[..., 1:, 1:] = c[..., None, None] * self.base.g0(X[..., 1:])
        return g

    def validate(self, n=200, seed=0, eps_c=EPS_PD):
        rng = np.random.default_rng(seed)
        xp = self.base.domain.sample(n, rng)
        x1 = rng.uniform(*self.x1_range, size=n)
        X = np.column_stack([x1, xp])
        cmin = float(np.min(self.c(X)))
        if cmin < eps_c:
            raise DefinitenessError(f"{self.name}: conformal factor min {cmin:.3e}")
        eig = float(np.min(np.linalg.eigvalsh(self.metric(X))))
        if eig < EPS_PD:
            raise DefinitenessError(f"{self.name}: product metric not positive definite")
        rep = self.base.validate(n=n, seed=seed)
        rep.update({"c_min": cmin, "g_min_eigenvalue": eig})
        return rep
