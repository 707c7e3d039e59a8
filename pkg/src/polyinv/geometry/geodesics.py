"""Geodesic shooting, exit times, polar charts, influx sampling and simplicity checks."""
import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from polyinv import integrate as _int
from polyinv.geometry.metric import DomainError, MetricField2D

DEFAULT_TOL = 1e-11


class TangencyError(RuntimeError):
    pass


class NonSimpleError(RuntimeError):
    pass


class ChartError(RuntimeError):
    pass


@dataclass(frozen=True)
class UnitTangent:
    x: np.ndarray
    v: np.ndarray

    @classmethod
    def normalized(cls, metric, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return cls(x=x, v=v / np.sqrt(metric.norm2(x, v)))


@dataclass(frozen=True)
class GeodesicPath:
    t: np.ndarray         # (k,)
    x: np.ndarray         # (k, 2)
    v: np.ndarray         # (k, 2)
    tau: float
    exit_point: np.ndarray
    exit_dir: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "v1", "v2"])
            for t, x, v in zip(self.t, self.x, self.v):
                w.writerow([repr(float(t)), repr(float(x[0])), repr(float(x[1])),
                            repr(float(v[0])), repr(float(v[1]))])

    def energy_drift(self, metric):
        return float(np.max(np.abs(metric.norm2(self.x, self.v) - 1.0)))


def _tau_cap(metric):
    return 100.0 * metric.domain.diameter


def exit_batch(metric, x, v, *, tol=DEFAULT_TOL, t_query=None, record=False, t_max=None):
    """Flow every row of ``(x, v)`` forward until it leaves the domain."""
    y0 = np.concatenate([np.asarray(x, dtype=float), np.asarray(v, dtype=float)], axis=1)
    dom = metric.domain
    return _int.integrate_batch(
        metric.geodesic_rhs, y0, event=lambda y: dom.bdf(y[:, :2]), t_query=t_query,
        t_max=_tau_cap(metric) if t_max is None else t_max, rtol=tol, atol=tol,
        h0=0.05, max_step=0.25 * dom.diameter, record=record)


def exit_times(metric, x, v, tol=DEFAULT_TOL):
    """Exit time ``τ(x, v)`` for each row; NaN where the geodesic failed."""
    res = exit_batch(metric, x, v, tol=tol)
    return np.where(res.status == _int.OK, res.t_end, np.nan), res


def shoot_geodesic(metric: MetricField2D, start: UnitTangent, tol=DEFAULT_TOL) -> GeodesicPath:
    x = np.asarray(start.x, dtype=float)
    if float(metric.domain.bdf(x)) > 1e-10:
        raise DomainError("start point outside the domain")
    res = exit_batch(metric, x[None], np.asarray(start.v, dtype=float)[None], tol=tol, record=True)
    st = int(res.status[0])
    if st == _int.TANGENT or st == _int.STALLED:
        raise TangencyError(f"geodesic failed near tangency ({_int.STATUS_NAMES[st]})")
    if st == _int.CAP:
        raise NonSimpleError(f"geodesic trapped beyond the time cap {_tau_cap(metric):.3g}")
    pts = res.paths[0]
    t = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    v_end = res.y_end[0, 2:]
    return GeodesicPath(t=t, x=y[:, :2], v=y[:, 2:], tau=float(res.t_end[0]),
                        exit_point=res.y_end[0, :2].copy(),
                        exit_dir=v_end / np.sqrt(metric.norm2(res.y_end[0, :2], v_end)))


def flow_to_times(metric, x, v, times, tol=DEFAULT_TOL, jacobi=None):
    """States at fixed per-row times (no boundary event).

    ``times`` has shape ``(n, k)``.  With ``jacobi=(J0, dJ0)`` the Jacobi field
    is carried along and returned in columns 4:8.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if jacobi is None:
        y0 = np.concatenate([x, v], axis=1)
        rhs = metric.geodesic_rhs
    else:
        y0 = np.concatenate([x, v, jacobi[0], jacobi[1]], axis=1)
        rhs = metric.jacobi_rhs
    res = _int.integrate_batch(rhs, y0, t_query=np.asarray(times, dtype=float), rtol=tol, atol=tol,
                               h0=0.05)
    if np.any(res.status != _int.OK):
        raise ChartError("integration to query times failed")
    return res.y_query


# --------------------------------------------------------------------------
# polar normal coordinates
# --------------------------------------------------------------------------

def _fan_start(metric, omega, theta):
    theta = np.asarray(theta, dtype=float)
    om = np.broadcast_to(np.asarray(omega, dtype=float), theta.shape + (2,))
    E = metric.frame(om)
    v = np.einsum("...ij,...j->...i", E, np.stack([np.cos(theta), np.sin(theta)], -1))
    dv = np.einsum("...ij,...j->...i", E, np.stack([-np.sin(theta), np.cos(theta)], -1))
    return om, v, dv


def exp_polar(metric, omega, r, theta, tol=DEFAULT_TOL, with_jacobi=False):
    """``exp_ω(r θ)`` for arrays ``r, θ`` of equal shape; optionally ``(γ̇, J)`` too."""
    r = np.asarray(r, dtype=float)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), r.shape)
    shape = r.shape
    rf, tf = r.ravel(), theta.ravel()
    om, v, dv = _fan_start(metric, omega, tf)
    y = flow_to_times(metric, om, v, rf[:, None], tol=tol,
                      jacobi=(np.zeros_like(v), dv))[:, 0]
    out = y[:, :2].reshape(shape + (2,))
    if not with_jacobi:
        return out
    return out, y[:, 2:4].reshape(shape + (2,)), y[:, 4:6].reshape(shape + (2,))


def polar_coords_batch(metric, omega, x, tol=1e-12, max_newton=30):
    """Geodesic polar coordinates ``(r, θ)`` of the points ``x`` about ``omega``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    omega = np.asarray(omega, dtype=float)
    d = x - omega
    if np.any(np.hypot(d[:, 0], d[:, 1]) == 0):
        raise ChartError("polar coordinates undefined at the center")
    # initial guess from the metric frozen at the midpoint
    mid = 0.5 * (x + omega)
    r = np.sqrt(metric.norm2(mid, d))
    theta = metric.frame_angle(np.broadcast_to(omega, x.shape), d)
    for _ in range(max_newton):
        p, gd, J = exp_polar(metric, omega, r, theta, tol=tol, with_jacobi=True)
        res = p - x
        err = np.hypot(res[:, 0], res[:, 1])
        if np.all(err < 1e-12 * (1 + np.abs(r))):
            return r, np.mod(theta + np.pi, 2 * np.pi) - np.pi
        det = gd[:, 0] * J[:, 1] - gd[:, 1] * J[:, 0]
        if np.any(np.abs(det) < 1e-14):
            raise ChartError("degenerate polar Jacobian (conjugate point?)")
        dr = (J[:, 1] * res[:, 0] - J[:, 0] * res[:, 1]) / det
        dth = (-gd[:, 1] * res[:, 0] + gd[:, 0] * res[:, 1]) / det
        r = r - dr
        theta = theta - dth
        if np.any(r <= 0):
            r = np.abs(r)
    raise ChartError("polar coordinate Newton iteration did not converge")


def polar_coords(metric, omega, x, tol=1e-12):
    r, th = polar_coords_batch(metric, omega, np.asarray(x, dtype=float)[None], tol=tol)
    return float(r[0]), float(th[0])


@dataclass(frozen=True)
class PolarChart:
    """Polar normal coordinates about ``center`` for a simple metric."""
    metric: MetricField2D
    center: np.ndarray

    def exp(self, r, theta):
        return exp_polar(self.metric, self.center, r, theta)

    def coords(self, x):
        return polar_coords_batch(self.metric, self.center, x)

    def r_max(self, theta):
        """Exit distance along each direction (center in the closed domain)."""
        om, v, _ = _fan_start(self.metric, self.center, np.atleast_1d(theta))
        tau, _ = exit_times(self.metric, om, v)
        return tau

    def jacobi_norm2(self, r, theta):
        """``m(r, θ) = |∂_θ exp_ω(rθ)|²``; the metric reads ``dr² + m dθ²``."""
        p, _, J = exp_polar(self.metric, self.center, r, theta, with_jacobi=True)
        return self.metric.norm2(p, J)

    def jacobian(self, r, theta):
        return np.sqrt(self.jacobi_norm2(r, theta))


# --------------------------------------------------------------------------
# influx boundary sampling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InfluxGrid:
    """Tensor sampling of the inward-pointing boundary directions.

    Nodes are uniform (periodic) in the boundary parameter ``s`` and
    Gauss-Legendre in the incidence angle ``φ ∈ (-π/2, π/2)``, where ``φ = 0``
    is the inward normal.  ``weight`` already contains the boundary arc length
    density; the measure factor ``mu = cos φ`` is kept separate.
    """
    s: np.ndarray          # (ns,)
    phi: np.ndarray        # (nphi,)
    x: np.ndarray          # (ns, nphi, 2)
    v: np.ndarray          # (ns, nphi, 2)
    weight: np.ndarray     # (ns, nphi)
    mu: np.ndarray         # (ns, nphi)
    nu: np.ndarray         # (ns, 2) outward unit normal
    tangent: np.ndarray    # (ns, 2) unit tangent (counter-clockwise)

    @property
    def shape(self):
        return self.weight.shape

    @property
    def ds(self):
        return float(self.s[1] - self.s[0])

    def flat(self):
        return self.x.reshape(-1, 2), self.v.reshape(-1, 2)

    def inner_nu(self):
        """``⟨v, ν⟩_{g0}`` per node (non-positive)."""
        return -self.mu


def boundary_frame(metric, s):
    """Outward unit normal and counter-clockwise unit tangent at ``domain.point(s)``."""
    dom = metric.domain
    b = dom.point(s)
    grad = dom.grad_bdf(b)
    ginv = metric.inverse(b)
    nu = np.einsum("...ij,...j->...i", ginv, grad)
    nu = nu / np.sqrt(np.einsum("...i,...i->...", grad, nu))[..., None]
    tb = dom.tangent(s)
    speed = np.sqrt(metric.norm2(b, tb))
    return b, nu, tb / speed[..., None], speed


def influx_grid(metric: MetricField2D, n_s=64, n_phi=32):
    s = np.arange(n_s) * (2 * np.pi / n_s)
    u, wu = np.polynomial.legendre.leggauss(n_phi)
    phi = 0.5 * np.pi * u
    wphi = 0.5 * np.pi * wu
    b, nu, tan, speed = boundary_frame(metric, s)
    cphi, sphi = np.cos(phi), np.sin(phi)
    v = -cphi[None, :, None] * nu[:, None, :] + sphi[None, :, None] * tan[:, None, :]
    x = np.broadcast_to(b[:, None, :], v.shape).copy()
    weight = (2 * np.pi / n_s) * speed[:, None] * wphi[None, :]
    mu = np.broadcast_to(cphi[None, :], weight.shape).copy()
    return InfluxGrid(s=s, phi=phi, x=x, v=v, weight=weight, mu=mu, nu=nu, tangent=tan)


def influx_coords(metric, x, v):
    """Inverse of the influx chart: ``(s, φ)`` of boundary points with inward ``v``."""
    s = metric.domain.param_of(x)
    _, nu, tan, _ = boundary_frame(metric, s)
    g = metric.g0(x)
    a = -np.einsum("...i,...ij,...j->...", v, g, nu)
    b = np.einsum("...i,...ij,...j->...", v, g, tan)
    return s, np.arctan2(b, a)


# --------------------------------------------------------------------------
# simplicity diagnostics
# --------------------------------------------------------------------------

def second_fundamental_form(metric, s):
    """Boundary curvature ``II(T, T)`` w.r.t. the inward normal (positive = convex)."""
    dom = metric.domain
    b = dom.point(s)
    tb = dom.tangent(s)
    acc = dom.accel(s) + np.einsum("...ijk,...j,...k->...i", metric.christoffel(b), tb, tb)
    _, nu, _, speed = boundary_frame(metric, s)
    return -metric.inner(b, acc, nu) / speed ** 2


@dataclass
class SimplicityReport:
    min_jacobi: float          # min over sampled fans of det_g[γ̇, J] / t
    min_curvature: float       # min boundary second fundamental form
    n_geodesics: int
    max_tau: float
    failures: int
    fd_derivatives: bool

    @property
    def passed(self):
        return self.min_jacobi > 0 and self.min_curvature > 0 and self.failures == 0

    def as_dict(self):
        return {"min_jacobi": self.min_jacobi, "min_curvature": self.min_curvature,
                "n_geodesics": self.n_geodesics, "max_tau": self.max_tau,
                "failures": self.failures, "fd_derivatives": self.fd_derivatives,
                "passed": self.passed}


def simplicity_diagnostics(metric: MetricField2D, samples=24, tol=1e-9, seed=0):
    """No-conjugate-point and strict-convexity checks on sampled geodesic fans.

    Fans start at ``samples`` boundary points (all incidence angles) and at
    ``samples`` interior points; the Jacobi field vanishing at the start must
    stay transversal to the geodesic until it exits.
    """
    dom = metric.domain
    grid = influx_grid(metric, n_s=samples, n_phi=max(8, samples // 2))
    xb, vb = grid.flat()
    rng = np.random.default_rng(seed)
    xi = dom.sample(samples, rng, margin=0.05)
    ang = rng.uniform(0, 2 * np.pi, samples)
    vi = metric.unit_vector(xi, ang)
    x0 = np.vstack([xb, xi])
    v0 = np.vstack([vb, vi])
    E = metric.frame(x0)
    w = np.einsum("nij,nj->ni", np.linalg.inv(E), v0)
    dJ0 = np.einsum("nij,nj->ni", E, np.stack([-w[:, 1], w[:, 0]], axis=1))
    y0 = np.concatenate([x0, v0, np.zeros_like(x0), dJ0], axis=1)
    res = _int.integrate_batch(metric.jacobi_rhs, y0, event=lambda y: dom.bdf(y[:, :2]),
                               t_max=_tau_cap(metric), rtol=tol, atol=tol, h0=0.02,
                               max_step=0.05 * dom.diameter, record=True)
    min_det = np.inf
    for k, path in enumerate(res.paths):
        for t, y in path:
            if t <= 1e-8:
                continue
            x, v, J = y[:2], y[2:4], y[4:6]
            det = float(metric.sqrt_det(x[None])[0] * (v[0] * J[1] - v[1] * J[0]))
            min_det = min(min_det, det / t)
    ss = np.linspace(0, 2 * np.pi, 8 * samples, endpoint=False)
    curv = second_fundamental_form(metric, ss)
    ok = res.status == _int.OK
    return SimplicityReport(min_jacobi=float(min_det), min_curvature=float(np.min(curv)),
                            n_geodesics=int(x0.shape[0]),
                            max_tau=float(np.nanmax(np.where(ok, res.t_end, np.nan))) if ok.any() else np.nan,
                            failures=int(np.sum(~ok)), fd_derivatives=metric.fd_derivatives)
