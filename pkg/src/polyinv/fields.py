"""Complex scalar fields, 1-forms and pairs on the transversal domain."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp

from polyinv.geometry.metric import StarDomain, array_function, unit_disk

_XY = sp.symbols("x y", real=True)


def _complex_fn(expr, symbols):
    expr = sp.sympify(expr)
    re_fn = array_function(sp.re(expr), symbols) if expr.has(sp.I) else array_function(expr, symbols)
    if not expr.has(sp.I):
        return lambda x: re_fn(x).astype(complex)
    im_fn = array_function(sp.im(expr), symbols)
    return lambda x: re_fn(x) + 1j * im_fn(x)


@dataclass(frozen=True)
class ScalarFieldD:
    """Complex function on ``D``; ``grad`` (if known) returns ``(..., 2)``."""
    values: Callable
    grad: Optional[Callable] = None
    support_margin: float = 0.0
    domain: StarDomain = field(default_factory=unit_disk)
    name: str = ""

    @classmethod
    def from_expr(cls, expr, symbols=_XY, **kw):
        expr = sp.sympify(expr)
        grad = [sp.diff(expr, s) for s in symbols]
        gre = array_function([sp.re(g) for g in grad], symbols)
        gim = array_function([sp.im(g) for g in grad], symbols)
        return cls(values=_complex_fn(expr, symbols), grad=lambda x: gre(x) + 1j * gim(x),
                   name=str(expr), **kw)

    @classmethod
    def zero(cls):
        return cls(values=lambda x: np.zeros(np.shape(x)[:-1], dtype=complex),
                   grad=lambda x: np.zeros(np.shape(x), dtype=complex), name="0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.values(x), dtype=complex)
        if self.support_margin > 0:
            out = np.where(self.domain.contains(x), out, 0.0)
        return out

    def scaled(self, a):
        g = None if self.grad is None else (lambda x: a * self.grad(x))
        return ScalarFieldD(values=lambda x: a * self.values(x), grad=g,
                            support_margin=self.support_margin, domain=self.domain,
                            name=f"{a}*({self.name})")


@dataclass(frozen=True)
class OneFormD:
    """Complex 1-form ``α_1 dx^1 + α_2 dx^2``; ``components(x)`` returns ``(..., 2)``."""
    components: Callable
    regularity: str = "smooth"
    name: str = ""

    @classmethod
    def from_exprs(cls, exprs, symbols=_XY, **kw):
        fns = [_complex_fn(e, symbols) for e in exprs]
        return cls(components=lambda x: np.stack([f(x) for f in fns], axis=-1),
                   name=str(tuple(exprs)), **kw)

    @classmethod
    def zero(cls):
        return cls(components=lambda x: np.zeros(np.shape(x), dtype=complex), name="0")

    def __call__(self, x):
        return np.asarray(self.components(np.asarray(x, dtype=float)), dtype=complex)

    def check_finite(self, domain, n=200, seed=0):
        x = domain.sample(n, np.random.default_rng(seed))
        return bool(np.all(np.isfinite(self(x))))


@dataclass(frozen=True)
class PairField:
    f: ScalarFieldD
    alpha: OneFormD

    @classmethod
    def zero(cls):
        return cls(ScalarFieldD.zero(), OneFormD.zero())

    def integrand(self, x, v):
        """``f(x) + α_x(v)`` for arrays of points and tangent vectors."""
        return self.f(x) + np.einsum("...i,...i->...", self.alpha(x), v)


def combine(coeffs, pairs):
    """Linear combination ``Σ c_k pair_k`` as a new pair."""
    coeffs = list(coeffs)
    pairs = list(pairs)

    def fvals(x):
        return sum(c * p.f(x) for c, p in zip(coeffs, pairs))

    def avals(x):
        return sum(c * p.alpha(x) for c, p in zip(coeffs, pairs))

    return PairField(ScalarFieldD(values=fvals, name="combo"), OneFormD(components=avals, name="combo"))


def pair_inner(metric, pair_a, pair_b, quad):
    """``𝓛²(D)`` inner product ``∫ (f_a conj f_b + g^{ij} α_a,i conj α_b,j) dV``.

    ``quad = (points, weights)`` with weights in coordinate area (``dx``).
    """
    x, w = quad
    sq = metric.sqrt_det(x)
    ginv = metric.inverse(x)
    ff = pair_a.f(x) * np.conj(pair_b.f(x))
    aa = np.einsum("ni,nij,nj->n", pair_a.alpha(x), ginv, np.conj(pair_b.alpha(x)))
    return np.sum(w * sq * (ff + aa))


def disk_quadrature(domain, n_r=24, n_theta=48):
    """Polar Gauss-Legendre (radius) x trapezoid (angle) rule on a star domain."""
    u, wu = np.polynomial.legendre.leggauss(n_r)
    t = 0.5 * (u + 1)
    th = np.arange(n_theta) * (2 * np.pi / n_theta)
    R = domain.radius(th)
    rho = t[:, None] * R[None, :]
    x = np.stack([rho * np.cos(th)[None, :], rho * np.sin(th)[None, :]], axis=-1).reshape(-1, 2)
    w = (0.5 * wu[:, None] * R[None, :]) * rho * (2 * np.pi / n_theta)
    return x, w.ravel()
