"""Hot kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``POLYINV_DISABLE_NUMBA`` is
unset (or ``0``).  Both paths compute the same quantities; tests compare them.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_FALSEY = ("", "0", "false", "no", "off")
_use_numba = numba is not None and os.environ.get("POLYINV_DISABLE_NUMBA", "0").lower() in _FALSEY


def numba_enabled():
    return _use_numba


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels at runtime."""
    global _use_numba
    if name == "numba":
        if numba is None:
            raise RuntimeError("numba is not importable")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def set_threads(n):
    if numba is not None and n:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


# --------------------------------------------------------------------------
# cutoff used by the Cauchy transform splitting
# --------------------------------------------------------------------------

CUTOFF_POWER = 10


def cutoff_np(r, delta):
    """``(1 - (r/δ)²)^k`` inside ``r < δ``, zero outside.

    ``1 - χ`` is a polynomial in ``r²`` near the center, so ``(1 - χ)/(z - ρ)``
    is smooth there; at ``r = δ`` the cutoff has a zero of order ``k``.
    """
    t = np.clip(1.0 - (np.asarray(r) / delta) ** 2, 0.0, None)
    return t ** CUTOFF_POWER


# --------------------------------------------------------------------------
# far-field part of the Cauchy transform
# --------------------------------------------------------------------------

@_njit
def _cauchy_far_sum_nb(tx, ty, delta, sx, sy, wf_re, wf_im):
    nt = tx.shape[0]
    ns = sx.shape[0]
    out = np.empty(nt, dtype=np.complex128)
    for i in range(nt):
        acc_re = 0.0
        acc_im = 0.0
        d = delta[i]
        for k in range(ns):
            dx = sx[k] - tx[i]
            dy = sy[k] - ty[i]
            r2 = dx * dx + dy * dy
            r = np.sqrt(r2)
            if r >= d:
                keep = 1.0
            else:
                t = 1.0 - r2 / (d * d)
                keep = 1.0 - t ** CUTOFF_POWER
                if keep == 0.0:
                    continue
            # w f / (z - rho) = w f * conj(z - rho) / |z - rho|^2
            s = keep / r2
            acc_re += s * (wf_re[k] * dx + wf_im[k] * dy)
            acc_im += s * (wf_im[k] * dx - wf_re[k] * dy)
        out[i] = acc_re + 1j * acc_im
    return out


def _cauchy_far_sum_np(tx, ty, delta, sx, sy, wf_re, wf_im, chunk=256):
    wf = wf_re + 1j * wf_im
    zs = sx + 1j * sy
    out = np.empty(tx.shape[0], dtype=complex)
    for lo in range(0, tx.shape[0], chunk):
        hi = min(lo + chunk, tx.shape[0])
        diff = zs[None, :] - (tx[lo:hi] + 1j * ty[lo:hi])[:, None]
        r = np.abs(diff)
        keep = 1.0 - cutoff_np(r, delta[lo:hi, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(keep > 0, keep * wf[None, :] / np.where(r > 0, diff, 1.0), 0.0)
        out[lo:hi] = term.sum(axis=1)
    return out


def cauchy_far_sum(tx, ty, delta, sx, sy, wf):
    """Sum ``wf_k (1 - chi(|z_k - t|/delta)) / (z_k - t)`` over sources for each target ``t``.

    ``wf`` holds quadrature weight times density at the source nodes.
    """
    tx = np.ascontiguousarray(tx, dtype=float)
    ty = np.ascontiguousarray(ty, dtype=float)
    delta = np.ascontiguousarray(np.broadcast_to(delta, tx.shape), dtype=float)
    sx = np.ascontiguousarray(sx, dtype=float)
    sy = np.ascontiguousarray(sy, dtype=float)
    wf = np.asarray(wf, dtype=complex)
    args = (tx, ty, delta, sx, sy, np.ascontiguousarray(wf.real), np.ascontiguousarray(wf.imag))
    if _use_numba:
        return _cauchy_far_sum_nb(*args)
    return _cauchy_far_sum_np(*args)


# --------------------------------------------------------------------------
# tensor cubic interpolation on (periodic uniform) x (non-uniform) grids
# --------------------------------------------------------------------------

@_njit
def _lagrange4(x0, x1, x2, x3, q, w):
    w[0] = (q - x1) * (q - x2) * (q - x3) / ((x0 - x1) * (x0 - x2) * (x0 - x3))
    w[1] = (q - x0) * (q - x2) * (q - x3) / ((x1 - x0) * (x1 - x2) * (x1 - x3))
    w[2] = (q - x0) * (q - x1) * (q - x3) / ((x2 - x0) * (x2 - x1) * (x2 - x3))
    w[3] = (q - x0) * (q - x1) * (q - x2) / ((x3 - x0) * (x3 - x1) * (x3 - x2))


@_njit
def _interp_cubic_nb(vre, vim, s0, ds, phi, qs, qp):
    ns = vre.shape[0]
    nphi = phi.shape[0]
    nq = qs.shape[0]
    out = np.empty(nq, dtype=np.complex128)
    ws = np.empty(4)
    wp = np.empty(4)
    for k in range(nq):
        u = (qs[k] - s0) / ds
        i = int(np.floor(u))
        f = u - i
        # uniform Lagrange weights on nodes -1, 0, 1, 2
        ws[0] = -f * (f - 1.0) * (f - 2.0) / 6.0
        ws[1] = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0
        ws[2] = -(f + 1.0) * f * (f - 2.0) / 2.0
        ws[3] = (f + 1.0) * f * (f - 1.0) / 6.0
        # bracketing index in phi
        lo = 0
        hi = nphi - 1
        q = qp[k]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if phi[mid] <= q:
                lo = mid
            else:
                hi = mid
        j = lo - 1
        if j < 0:
            j = 0
        if j > nphi - 4:
            j = nphi - 4
        _lagrange4(phi[j], phi[j + 1], phi[j + 2], phi[j + 3], q, wp)
        acc_re = 0.0
        acc_im = 0.0
        for a in range(4):
            ia = (i - 1 + a) % ns
            for b in range(4):
                w = ws[a] * wp[b]
                acc_re += w * vre[ia, j + b]
                acc_im += w * vim[ia, j + b]
        out[k] = acc_re + 1j * acc_im
    return out


def _interp_cubic_np(vre, vim, s0, ds, phi, qs, qp):
    ns = vre.shape[0]
    nphi = phi.shape[0]
    u = (qs - s0) / ds
    i = np.floor(u).astype(np.int64)
    f = u - i
    ws = np.stack([
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ], axis=-1)
    lo = np.searchsorted(phi, qp, side="right") - 1
    j = np.clip(lo - 1, 0, nphi - 4)
    xs = np.stack([phi[j + b] for b in range(4)], axis=-1)
    wp = np.empty_like(xs)
    for b in range(4):
        num = np.ones_like(qp)
        den = np.ones_like(qp)
        for c in range(4):
            if c != b:
                num = num * (qp - xs[:, c])
                den = den * (xs[:, b] - xs[:, c])
        wp[:, b] = num / den
    v = vre + 1j * vim
    out = np.zeros(qs.shape[0], dtype=complex)
    for a in range(4):
        ia = (i - 1 + a) % ns
        for b in range(4):
            out += ws[:, a] * wp[:, b] * v[ia, j + b]
    return out


def interp_cubic(values, s0, ds, phi, qs, qphi):
    """Tensor cubic Lagrange interpolation.

    ``values[i, j]`` sits at ``(s0 + i*ds, phi[j])``; the first axis is periodic
    with period ``len(values)*ds``, the second uses clamped 4-point stencils.
    """
    values = np.asarray(values, dtype=complex)
    qs = np.ascontiguousarray(qs, dtype=float).ravel()
    qphi = np.ascontiguousarray(qphi, dtype=float).ravel()
    phi = np.ascontiguousarray(phi, dtype=float)
    args = (np.ascontiguousarray(values.real), np.ascontiguousarray(values.imag),
            float(s0), float(ds), phi, qs, qphi)
    if _use_numba:
        return _interp_cubic_nb(*args)
    return _interp_cubic_np(*args)


# --------------------------------------------------------------------------
# geodesic acceleration -Γ^i_jk v^j v^k from metric values and first partials
# --------------------------------------------------------------------------

@_njit
def _geodesic_accel_nb(g, dg, v):
    n = v.shape[0]
    out = np.empty((n, 2))
    for p in range(n):
        v0 = v[p, 0]
        v1 = v[p, 1]
        w = np.zeros(2)
        for l in range(2):
            acc = 0.0
            for j in range(2):
                vj = v0 if j == 0 else v1
                for k in range(2):
                    vk = v0 if k == 0 else v1
                    acc += (dg[p, j, l, k] - 0.5 * dg[p, l, j, k]) * vj * vk
            w[l] = acc
        det = g[p, 0, 0] * g[p, 1, 1] - g[p, 0, 1] * g[p, 1, 0]
        out[p, 0] = -(g[p, 1, 1] * w[0] - g[p, 0, 1] * w[1]) / det
        out[p, 1] = -(-g[p, 1, 0] * w[0] + g[p, 0, 0] * w[1]) / det
    return out


def _geodesic_accel_np(g, dg, v):
    v0, v1 = v[:, 0], v[:, 1]
    vv = (v0 * v0, v0 * v1, v1 * v0, v1 * v1)
    w = []
    for l in range(2):
        acc = 0.0
        for idx, (j, k) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            acc = acc + (dg[:, j, l, k] - 0.5 * dg[:, l, j, k]) * vv[idx]
        w.append(acc)
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    return -np.stack([(g[:, 1, 1] * w[0] - g[:, 0, 1] * w[1]) / det,
                      (-g[:, 1, 0] * w[0] + g[:, 0, 0] * w[1]) / det], axis=1)


def geodesic_accel(g, dg, v):
    """``-Γ^i_jk v^j v^k`` per row; ``dg[:, l, i, j] = ∂_l g_ij``."""
    g = np.ascontiguousarray(g, dtype=float)
    dg = np.ascontiguousarray(dg, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    if _use_numba:
        return _geodesic_accel_nb(g, dg, v)
    return _geodesic_accel_np(g, dg, v)
