"""Boundary symbol recursion for the polyharmonic system and recovery of ``X, q`` on ``x_n = 0``.

Coordinates are boundary normal: ``g = g_{αβ} dx^α dx^β + dx^n dx^n`` with the
boundary at ``x_n = 0``.  The order-``2m`` operator ``(-Δ_g)^m + X + q`` is
written as the ``m × m`` second order system

    ``-Δ_g ⊗ I + i A11(x, D') + i A12(x) D_n + A0(x)``,

and factored as ``(D_n + iE + iA12 - iB)(D_n + iB)`` with ``B`` a first order
pseudodifferential operator in ``x'``.  The full symbol ``b ~ b1 + b0 + b_{-1}``
is built in closed form with sympy and lambdified.

Symbol composition uses ``σ(PQ) = Σ_α (1/α!) ∂_ξ^α p · D_x^α q`` with
``D = -i ∂``.
"""
from dataclasses import dataclass, field
from itertools import product as iproduct
from typing import Callable, Optional

import numpy as np
import sympy as sp

from polyinv.geometry.metric import EPS_PD, DefinitenessError


class HomogeneityError(ValueError):
    """Symbol evaluated at ``ξ' = 0``."""


class ConditioningError(ValueError):
    """The ξ' sample design cannot separate the unknowns."""


def _complex_lambdify(exprs, symbols):
    arr = np.array(exprs, dtype=object)
    shape = arr.shape
    flat = [sp.sympify(e) for e in arr.ravel()]
    fn = sp.lambdify(symbols, flat, modules="numpy", cse=True)

    def evaluate(*args):
        args = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
        lead = args[0].shape
        vals = fn(*args)
        out = np.empty(lead + (len(flat),), dtype=complex)
        for k, v in enumerate(vals):
            out[..., k] = v
        return out.reshape(lead + shape)

    return evaluate


# --------------------------------------------------------------------------
# geometry and perturbation
# --------------------------------------------------------------------------

@dataclass
class BoundaryNormalMetric:
    """Tangential block ``g_{αβ}(x', x_n)`` of a metric in boundary normal coordinates."""
    n: int
    g_tan: sp.Matrix
    symbols: tuple
    name: str = ""
    _fns: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        if self.g_tan.shape != (self.n - 1, self.n - 1):
            raise ValueError("g_tan must be (n-1) x (n-1)")
        if len(self.symbols) != self.n:
            raise ValueError("need one symbol per coordinate")
        if sp.simplify(self.g_tan - self.g_tan.T) != sp.zeros(self.n - 1):
            raise DefinitenessError("g_tan is not symmetric")

    @classmethod
    def from_sympy(cls, g_tan, symbols, name=""):
        return cls(len(symbols), sp.Matrix(g_tan), tuple(symbols), name)

    @classmethod
    def flat(cls, n):
        xs = coordinate_symbols(n)
        return cls(n, sp.eye(n - 1), xs, "flat")

    @property
    def inverse_expr(self):
        if "ginv" not in self._fns:
            self._fns["ginv"] = sp.simplify(self.g_tan.inv()) if self.n <= 3 else self.g_tan.inv()
        return self._fns["ginv"]

    def _fn(self, key, builder):
        if key not in self._fns:
            self._fns[key] = builder()
        return self._fns[key]

    def tangential(self, x):
        """``g_{αβ}`` at points ``x`` of shape ``(..., n)``."""
        fn = self._fn("g", lambda: _complex_lambdify(self.g_tan, self.symbols))
        x = np.asarray(x, dtype=float)
        return fn(*np.moveaxis(x, -1, 0)).real

    def check_definite(self, x):
        eig = np.linalg.eigvalsh(self.tangential(x))
        if np.any(eig[..., 0] < EPS_PD):
            raise DefinitenessError("tangential metric block is not positive definite")

    def full_metric(self):
        g = sp.zeros(self.n)
        g[: self.n - 1, : self.n - 1] = self.g_tan
        g[self.n - 1, self.n - 1] = 1
        return g


def coordinate_symbols(n):
    return sp.symbols(f"x1:{n + 1}", real=True)


def covector_symbols(n):
    return sp.symbols(f"xi1:{n}", real=True)


@dataclass
class PerturbationJet:
    """First order perturbation ``X^j ∂_j + q`` of ``(-Δ_g)^m`` in boundary normal coordinates."""
    X_components: tuple     # sympy expressions X^1..X^n
    q: sp.Expr
    m: int
    symbols: tuple

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("the system reduction needs m >= 2")
        if len(self.X_components) != len(self.symbols):
            raise ValueError("need one X component per coordinate")
        self.X_components = tuple(sp.sympify(c) for c in self.X_components)
        self.q = sp.sympify(self.q)

    @classmethod
    def constant(cls, X, q, m, n=None):
        n = len(X) if n is None else n
        return cls(tuple(sp.nsimplify(v) for v in X), sp.nsimplify(q), m, coordinate_symbols(n))

    def values(self, x):
        fn = _complex_lambdify(list(self.X_components) + [self.q], self.symbols)
        out = fn(*np.moveaxis(np.asarray(x, dtype=float), -1, 0))
        return out[..., :-1], out[..., -1]

    def matrices(self, xi):
        """Symbols ``A11(x, ξ')``, ``A12(x)``, ``A0(x)`` as sympy matrices."""
        m, n = self.m, len(self.symbols)
        A11 = sp.zeros(m)
        A11[m - 1, 0] = sum(self.X_components[a] * xi[a] for a in range(n - 1))
        A12 = sp.zeros(m)
        A12[m - 1, 0] = self.X_components[n - 1]
        A0 = sp.zeros(m)
        for k in range(m - 1):
            A0[k, k + 1] = -1
        A0[m - 1, 0] = self.q
        return A11, A12, A0


# --------------------------------------------------------------------------
# E, Q2, Q1
# --------------------------------------------------------------------------

def _eq_exprs(metric: BoundaryNormalMetric):
    """Return ``(E, G, c)`` with ``Q2 = ξ·Gξ`` and ``Q1 = -i c·ξ``."""
    xs = metric.symbols
    n = metric.n
    G = metric.inverse_expr
    g = metric.g_tan
    xn = xs[-1]
    E = sp.Rational(1, 2) * sum(g[a, b] * sp.diff(G[a, b], xn) for a in range(n - 1) for b in range(n - 1))
    logdet = sp.log(g.det())
    c = [sum(sp.Rational(1, 2) * G[a, b] * sp.diff(logdet, xs[a]) + sp.diff(G[a, b], xs[a])
             for a in range(n - 1)) for b in range(n - 1)]
    return E, G, c


def coeffs_EQ(metric: BoundaryNormalMetric, x):
    """Coefficients of ``-Δ_g = D_n² + iE D_n + Q2(x, D') + Q1(x, D')`` at ``x``.

    Returns ``(E, Q2, Q1)`` where ``Q2`` is the ``(n-1)×(n-1)`` matrix ``g^{αβ}``
    and ``Q1`` the complex vector with ``Q1(x, ξ') = Q1 · ξ'``.
    """
    x = np.asarray(x, dtype=float)
    metric.check_definite(x)
    fn = metric._fn("EQ", lambda: _eq_fn(metric))
    E, G, c = fn(x)
    return E, G, -1j * c


def _eq_fn(metric):
    E, G, c = _eq_exprs(metric)
    fE = _complex_lambdify(E, metric.symbols)
    fG = _complex_lambdify(G, metric.symbols)
    fc = _complex_lambdify(c, metric.symbols)

    def evaluate(x):
        args = np.moveaxis(x, -1, 0)
        return fE(*args).real, fG(*args).real, fc(*args).real

    return evaluate


def laplacian_assembly_defect(metric: BoundaryNormalMetric, u, points):
    """Relative gap between ``D_n² + iE D_n + Q2 + Q1`` applied to ``u`` and ``-Δ_g u``.

    ``u`` is a sympy expression in the metric's coordinates.  The reference is
    the divergence form ``-|g|^{-1/2} ∂_j(|g|^{1/2} g^{jk} ∂_k u)``.
    """
    xs = metric.symbols
    n = metric.n
    gfull = metric.full_metric()
    ginv = gfull.inv()
    sq = sp.sqrt(gfull.det())
    direct = -sum(sp.diff(sq * ginv[j, k] * sp.diff(u, xs[k]), xs[j])
                  for j in range(n) for k in range(n)) / sq
    grad = [sp.diff(u, s) for s in xs]
    hess = [[sp.diff(u, a, b) for b in xs[:-1]] for a in xs[:-1]]
    fu = _complex_lambdify([direct, sp.diff(u, xs[-1], 2), grad[-1]] + grad[:-1]
                           + [h for row in hess for h in row], xs)
    pts = np.asarray(points, dtype=float)
    vals = fu(*np.moveaxis(pts, -1, 0))
    ref, unn, un = vals[..., 0], vals[..., 1], vals[..., 2]
    du = vals[..., 3:3 + n - 1]
    H = vals[..., 3 + n - 1:].reshape(pts.shape[:-1] + (n - 1, n - 1))
    E, G, Q1 = coeffs_EQ(metric, pts)
    # D_n² = -∂_n², i E D_n = E ∂_n, Q2(D) = -g^{αβ}∂_α∂_β, Q1(D) = -i c·D = -c·∂
    assembled = (-unn + E * un - np.einsum("...ab,...ab->...", G, H)
                 + np.einsum("...a,...a->...", Q1, -1j * du))
    scale = max(np.max(np.abs(ref)), 1e-300)
    return float(np.max(np.abs(assembled - ref)) / scale)


# --------------------------------------------------------------------------
# homogeneous symbols
# --------------------------------------------------------------------------

@dataclass
class HomSymbol:
    """Matrix symbol homogeneous of degree ``degree`` in ``ξ'``.

    ``eval(x, xi)`` takes ``x`` of shape ``(..., n)`` and ``xi`` of shape
    ``(..., n-1)`` and returns ``(..., m, m)`` complex.
    """
    degree: int
    fn: Callable
    expr: Optional[sp.Matrix] = None

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if np.any(np.linalg.norm(xi, axis=-1) == 0):
            raise HomogeneityError("symbol evaluated at xi' = 0")
        lead = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        x = np.broadcast_to(x, lead + x.shape[-1:])
        xi = np.broadcast_to(xi, lead + xi.shape[-1:])
        return self.fn(*np.moveaxis(x, -1, 0), *np.moveaxis(xi, -1, 0))

    def homogeneity_defect(self, x, xi, ts=(0.5, 2.0, 7.0)):
        """Max relative ``|b(x, tξ) - t^j b(x, ξ)|`` over ``ts``."""
        base = self(x, xi)
        scale = max(np.max(np.abs(base)), 1e-300)
        return max(float(np.max(np.abs(self(x, t * np.asarray(xi)) - t ** self.degree * base)))
                   for t in ts) / scale


class SymbolRecursion:
    """Closed-form ``b1, b0, b_{-1}`` for a metric and a perturbation jet."""

    def __init__(self, metric: BoundaryNormalMetric, jet: PerturbationJet):
        if tuple(jet.symbols) != tuple(metric.symbols):
            jet = PerturbationJet(tuple(c.subs(dict(zip(jet.symbols, metric.symbols)))
                                        for c in jet.X_components),
                                  jet.q.subs(dict(zip(jet.symbols, metric.symbols))),
                                  jet.m, metric.symbols)
        self.metric, self.jet = metric, jet
        n, m = metric.n, jet.m
        xs = metric.symbols
        xi = covector_symbols(n)
        self.xi = xi
        xt, xn = xs[:-1], xs[-1]
        E, G, c = _eq_exprs(metric)
        Q2 = sum(G[a, b] * xi[a] * xi[b] for a in range(n - 1) for b in range(n - 1))
        Q1 = -sp.I * sum(c[b] * xi[b] for b in range(n - 1))
        A11, A12, A0 = jet.matrices(xi)
        I = sp.eye(m)
        s = sp.sqrt(Q2)
        b1s = -s
        self.b1s = b1s

        def Dx(e, k):
            return -sp.I * sp.diff(e, xt[k])

        # degree 1: b0 b1 + b1 b0 + Σ ∂_ξ b1 D_x b1 + ∂_n b1 - E b1 - A12 b1 = Q1 + i A11
        comp1 = sum(sp.diff(b1s, xi[k]) * Dx(b1s, k) for k in range(n - 1))
        rhs1 = (Q1 - comp1 - sp.diff(b1s, xn) + E * b1s) * I + sp.I * A11 + A12 * b1s
        b0 = rhs1 / (2 * b1s)
        # degree 0
        rhs0 = A0 - b0 * b0 + E * b0 + A12 * b0 - b0.diff(xn)
        for k in range(n - 1):
            rhs0 -= sp.diff(b1s, xi[k]) * b0.applyfunc(lambda e: Dx(e, k))
            rhs0 -= b0.diff(xi[k]) * Dx(b1s, k)
        for j, k in iproduct(range(n - 1), repeat=2):
            rhs0 -= sp.Rational(1, 2) * sp.diff(b1s, xi[j], xi[k]) * Dx(Dx(b1s, j), k) * I
        bm1 = rhs0 / (2 * b1s)
        args = tuple(xs) + tuple(xi)
        self.b1 = HomSymbol(1, _complex_lambdify(b1s * I, args), b1s * I)
        self.b0 = HomSymbol(0, _complex_lambdify(b0, args), b0)
        self.bm1 = HomSymbol(-1, _complex_lambdify(bm1, args), bm1)
        self._targets = (Q2, Q1, A11, A12, A0, E)
        self._target_fn = _complex_lambdify([Q2, Q1, E] + list(A11) + list(A12) + list(A0), args)

    def targets(self, x, xi):
        """Right-hand sides ``(Q2, Q1, E, A11, A12, A0)`` evaluated at ``(x, ξ')``."""
        m = self.jet.m
        lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1])
        x = np.broadcast_to(x, lead + np.shape(x)[-1:])
        xi = np.broadcast_to(xi, lead + np.shape(xi)[-1:])
        v = self._target_fn(*np.moveaxis(x, -1, 0), *np.moveaxis(xi, -1, 0))
        mats = v[..., 3:].reshape(lead + (3, m, m))
        return v[..., 0], v[..., 1], v[..., 2].real, mats[..., 0, :, :], mats[..., 1, :, :], mats[..., 2, :, :]


def symbol_b1(metric: BoundaryNormalMetric, x, xi, m):
    """``b1 = -√Q2(x, ξ') · I``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(np.linalg.norm(xi, axis=-1) == 0):
        raise HomogeneityError("symbol evaluated at xi' = 0")
    _, G, _ = coeffs_EQ(metric, x)
    q2 = np.einsum("...a,...ab,...b->...", xi, G, xi)
    return -np.sqrt(q2)[..., None, None] * np.eye(m)


def solve_b0(metric, jet, x, xi, recursion=None):
    rec = recursion or SymbolRecursion(metric, jet)
    return rec.b0(x, xi)


def solve_bm1(metric, jet, x, xi, recursion=None):
    rec = recursion or SymbolRecursion(metric, jet)
    return rec.bm1(x, xi)


# --------------------------------------------------------------------------
# finite differences on symbol callables
# --------------------------------------------------------------------------

def _stencil(offsets, order):
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    V = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(V, rhs)


_CENTRAL = np.arange(-3, 4)
_FORWARD = np.arange(0, 8)
_C1 = _stencil(_CENTRAL, 1)
_C2 = _stencil(np.arange(-4, 5), 2)
_F1 = _stencil(_FORWARD, 1)


def _partial(fn, x, xi, var, axis, step, one_sided=False):
    """First partial of ``fn(x, xi)`` in ``x[axis]`` (var='x') or ``xi[axis]``."""
    offs, w = (_FORWARD, _F1) if one_sided else (_CENTRAL, _C1)
    acc = 0
    for o, c in zip(offs, w):
        if c == 0:
            continue
        if var == "x":
            xx = np.array(x, dtype=float, copy=True)
            xx[..., axis] += o * step
            acc = acc + c * fn(xx, xi)
        else:
            zz = np.array(xi, dtype=float, copy=True)
            zz[..., axis] += o * step
            acc = acc + c * fn(x, zz)
    return acc / step


def _second(fn, x, xi, var, a, b, step):
    if a == b:
        acc = 0
        for o, c in zip(np.arange(-4, 5), _C2):
            if c == 0:
                continue
            arr = np.array(x if var == "x" else xi, dtype=float, copy=True)
            arr[..., a] += o * step
            acc = acc + c * (fn(arr, xi) if var == "x" else fn(x, arr))
        return acc / step ** 2
    inner = (lambda xx, zz: _partial(fn, xx, zz, var, b, step))
    return _partial(inner, x, xi, var, a, step)


@dataclass
class RelationResiduals:
    degree2: float
    degree1: float
    degree0: float

    @property
    def max(self):
        return max(self.degree2, self.degree1, self.degree0)


def relation_residuals(rec: SymbolRecursion, x, xi, step=1e-3):
    """Residuals of the three symbol relations with derivatives taken by finite differences.

    Independent of the symbolic differentiation used to build the symbols.
    Relative to the size of each right-hand side.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    n = rec.metric.n
    b1, b0, bm1 = rec.b1, rec.b0, rec.bm1
    Q2, Q1, E, A11, A12, A0 = rec.targets(x, xi)
    m = rec.jet.m
    I = np.eye(m)
    B1, B0, Bm1 = b1(x, xi), b0(x, xi), bm1(x, xi)
    Ec = E[..., None, None]

    def dxi(sym, k):
        return _partial(sym, x, xi, "xi", k, step)

    def Dx(sym, k):
        return -1j * _partial(sym, x, xi, "x", k, step)

    r2 = B1 @ B1 - Q2[..., None, None] * I
    lhs1 = B0 @ B1 + B1 @ B0 + _partial(b1, x, xi, "x", n - 1, step) - Ec * B1 - A12 @ B1
    for k in range(n - 1):
        lhs1 = lhs1 + dxi(b1, k) @ Dx(b1, k)
    r1 = lhs1 - Q1[..., None, None] * I - 1j * A11
    lhs0 = B0 @ B0 + B1 @ Bm1 + Bm1 @ B1 + _partial(b0, x, xi, "x", n - 1, step) - Ec * B0 - A12 @ B0
    for k in range(n - 1):
        lhs0 = lhs0 + dxi(b1, k) @ Dx(b0, k) + dxi(b0, k) @ Dx(b1, k)
    for j, k in iproduct(range(n - 1), repeat=2):
        d2xi = _second(b1, x, xi, "xi", j, k, 1e-2)
        d2x = -_second(b1, x, xi, "x", j, k, 1e-2)
        lhs0 = lhs0 + 0.5 * d2xi @ d2x
    r0 = lhs0 - A0

    def rel(r, ref):
        return float(np.max(np.abs(r)) / max(np.max(np.abs(ref)), 1.0))

    return RelationResiduals(rel(r2, Q2), rel(r1, np.abs(Q1) + np.abs(A11).max()), rel(r0, A0))


# --------------------------------------------------------------------------
# recovery of X and q at x_n = 0
# --------------------------------------------------------------------------

def xi_design(n, scales=(1.0, 2.0), offset=0.3):
    """``n`` unit directions at fixed angles, repeated at each radial scale."""
    d = n - 1
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        dirs = np.concatenate([dirs, dirs[:1]])[:max(n, 2)]
    else:
        ang = offset + 2 * np.pi * np.arange(n) / n
        dirs = np.zeros((n, d))
        dirs[:, 0] = np.cos(ang)
        dirs[:, 1] = np.sin(ang)
        if d > 2:
            dirs[:, 2:] = 0.25
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.concatenate([s * dirs for s in scales])


@dataclass
class BoundaryRecovery:
    points: np.ndarray        # (P, n) with x_n = 0
    X: np.ndarray             # (P, n)
    q: np.ndarray             # (P,)
    fit_residual: np.ndarray  # (P,) least-squares residual of the X fit
    q_spread: np.ndarray      # (P,) spread of q over ξ' samples

    def to_csv(self, path, X_true=None, q_true=None, delimiter=","):
        n = self.points.shape[1]
        head = [f"x{k + 1}" for k in range(n)]
        cols = [self.points[:, k] for k in range(n)]
        for k in range(n):
            if X_true is not None:
                head.append(f"X{k + 1}_true")
                cols.append(np.real(X_true[:, k]))
            head.append(f"X{k + 1}_rec")
            cols.append(np.real(self.X[:, k]))
        if q_true is not None:
            head.append("q_true")
            cols.append(np.real(q_true))
        head += ["q_rec", "fit_residual", "q_spread"]
        cols += [np.real(self.q), self.fit_residual, self.q_spread]
        np.savetxt(path, np.column_stack(cols), delimiter=delimiter, header=delimiter.join(head),
                   comments="", fmt="%.12e")


def recover_Xq_boundary(b0: HomSymbol, bm1: HomSymbol, metric: BoundaryNormalMetric, points,
                        m, xi=None, step=1e-3, cond_max=1e8):
    """Recover ``X`` and ``q`` at boundary points from the symbols ``b0`` and ``b_{-1}``.

    ``b0`` and ``bm1`` are sampled on the ξ' design at each point.  The
    ``(m, 1)`` entry of ``b0`` gives ``-X^n √Q2 + i X^α ξ_α`` after
    multiplication by ``-2√Q2``; ``X`` is the least-squares fit over ξ'.  The
    ``(m, 1)`` entry of the degree-0 relation then gives ``q``; it uses
    first derivatives of ``b0`` in ``x`` (one-sided in ``x_n``) and in ``ξ'``,
    taken by finite differences of the supplied symbol.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = metric.n
    if pts.shape[1] != n:
        raise ValueError("points must have n coordinates")
    if np.any(np.abs(pts[:, -1]) > 0):
        raise ValueError("recovery points must lie on x_n = 0")
    xi = xi_design(n) if xi is None else np.atleast_2d(np.asarray(xi, dtype=float))
    J = xi.shape[0]
    P = pts.shape[0]
    X = np.zeros((P, n), dtype=complex)
    q = np.zeros(P, dtype=complex)
    fit = np.zeros(P)
    spread = np.zeros(P)

    def b1fn(xx, zz):
        return symbol_b1(metric, xx, zz, m)

    for p in range(P):
        x = np.broadcast_to(pts[p], (J, n)).copy()
        E, G, _ = coeffs_EQ(metric, x)
        s = np.sqrt(np.einsum("ja,jab,jb->j", xi, G, xi))
        B0 = b0(x, xi)
        y = -2 * s * B0[:, m - 1, 0]
        design = np.column_stack([1j * xi, -s]).astype(complex)
        if np.linalg.cond(design) > cond_max:
            raise ConditioningError("xi' sample design is rank deficient")
        sol, *_ = np.linalg.lstsq(design, y, rcond=None)
        X[p, :n - 1], X[p, n - 1] = sol[:n - 1], sol[n - 1]
        fit[p] = float(np.max(np.abs(design @ sol - y)))
        # (m, 1) entry of the degree-0 relation
        Bm1 = bm1(x, xi)
        B1s = -s
        val = (B0 @ B0)[:, m - 1, 0] + 2 * B1s * Bm1[:, m - 1, 0]
        val = val + _partial(b0, x, xi, "x", n - 1, step, one_sided=True)[:, m - 1, 0]
        val = val - E * B0[:, m - 1, 0] - X[p, n - 1] * B0[:, 0, 0]
        for k in range(n - 1):
            db1_xi = _partial(b1fn, x, xi, "xi", k, step)[:, 0, 0]
            Dx_b1 = -1j * _partial(b1fn, x, xi, "x", k, step)[:, 0, 0]
            Dx_b0 = -1j * _partial(b0, x, xi, "x", k, step)[:, m - 1, 0]
            db0_xi = _partial(b0, x, xi, "xi", k, step)[:, m - 1, 0]
            val = val + db1_xi * Dx_b0 + db0_xi * Dx_b1
        q[p] = np.mean(val)
        spread[p] = float(np.max(np.abs(val - q[p])))
    return BoundaryRecovery(pts, X, q, fit, spread)
