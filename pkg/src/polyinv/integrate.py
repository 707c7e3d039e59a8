"""Batched adaptive DOP853 integration with per-ray step sizes.

Each row of the state array is an independent trajectory.  Rows advance with
their own step sizes; the driver stops a row at the first zero crossing
(negative to positive) of an event function, after the last requested output
time, or when the time cap is exceeded.
"""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import DOP853

_A = DOP853.A[:DOP853.n_stages, :DOP853.n_stages]
_B = DOP853.B
_C = DOP853.C[:DOP853.n_stages]
_E3 = DOP853.E3
_E5 = DOP853.E5
_NSTAGES = DOP853.n_stages
_ERR_EXP = -1.0 / 8.0
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

OK = 0
TANGENT = 1
CAP = 2
STALLED = 3

STATUS_NAMES = {OK: "ok", TANGENT: "tangency", CAP: "time-cap", STALLED: "stalled"}


def rk_step(rhs, y, f, h):
    """One DOP853 step for every row of ``y`` with per-row step ``h``.

    Returns ``(y_new, f_new, K)``; ``K`` holds the stages needed for the error
    estimate.
    """
    n, d = y.shape
    K = np.empty((_NSTAGES + 1, n, d), dtype=y.dtype)
    K[0] = f
    hh = h[:, None]
    for s in range(1, _NSTAGES):
        dy = np.tensordot(_A[s, :s], K[:s], axes=(0, 0)) * hh
        K[s] = rhs(y + dy)
    y_new = y + hh * np.tensordot(_B, K[:-1], axes=(0, 0))
    f_new = rhs(y_new)
    K[-1] = f_new
    return y_new, f_new, K


def _error_norm(K, h, y, y_new, rtol, atol):
    scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
    e5 = np.tensordot(_E5, K, axes=(0, 0)) / scale
    e3 = np.tensordot(_E3, K, axes=(0, 0)) / scale
    e5n = np.sum(e5 ** 2, axis=1)
    e3n = np.sum(e3 ** 2, axis=1)
    denom = e5n + 0.01 * e3n
    d = y.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.where(denom > 0, np.abs(h) * e5n / np.sqrt(np.where(denom > 0, denom, 1.0) * d), 0.0)
    return err


@dataclass
class BatchResult:
    t_end: np.ndarray          # exit time (event) or final time reached
    y_end: np.ndarray          # state at t_end
    status: np.ndarray         # per-row status code
    y_query: np.ndarray = None  # (n, k, d) states at requested times
    paths: list = None          # per-row list of (t, y) samples when recorded
    n_steps: np.ndarray = None


def integrate_batch(rhs, y0, *, event=None, t_query=None, t_max=np.inf, rtol=1e-10,
                    atol=1e-10, h0=0.05, max_step=np.inf, record=False, max_iter=200000,
                    root_tol=1e-13):
    """Integrate ``y' = rhs(y)`` (autonomous, rows independent) from ``t = 0``.

    Parameters
    ----------
    rhs : callable
        Maps an ``(n, d)`` array to its ``(n, d)`` derivative.
    y0 : array (n, d)
    event : callable, optional
        Maps ``(n, d)`` states to ``(n,)`` values; a row terminates at the first
        crossing from non-positive to positive, located by Illinois root finding
        on exact RK sub-steps.
    t_query : array (n, k), optional
        Sorted non-negative output times per row.  Steps are clipped so each
        output time is hit exactly.
    t_max : float
        Rows still running past ``t_max`` are stopped with status ``CAP``.
    """
    y = np.array(y0, dtype=float, copy=True)
    n, d = y.shape
    t = np.zeros(n)
    h_nat = np.full(n, float(h0))
    f = rhs(y)
    status = np.full(n, OK, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    t_end = np.full(n, np.nan)
    y_end = np.full((n, d), np.nan)
    n_steps = np.zeros(n, dtype=np.int64)
    ev = event(y) if event is not None else None

    if t_query is not None:
        t_query = np.asarray(t_query, dtype=float)
        nq = t_query.shape[1]
        y_query = np.full((n, nq, d), np.nan)
        qptr = np.zeros(n, dtype=np.int64)
        # outputs at t = 0
        while True:
            hit = (qptr < nq) & (t_query[np.arange(n), np.minimum(qptr, nq - 1)] <= 0.0)
            if not hit.any():
                break
            idx = np.nonzero(hit)[0]
            y_query[idx, qptr[idx]] = y[idx]
            qptr[idx] += 1
        if event is None:
            done = qptr >= nq
            t_end[done] = 0.0
            y_end[done] = y[done]
            active &= ~done
    else:
        y_query = None

    paths = [[(0.0, y[i].copy())] for i in range(n)] if record else None

    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ti = t[idx]
        h = np.minimum(h_nat[idx], max_step)
        clipped = np.zeros(idx.size, dtype=bool)
        if t_query is not None:
            qi = qptr[idx]
            has_q = qi < nq
            tq = np.where(has_q, t_query[idx, np.minimum(qi, nq - 1)], np.inf)
            clipped = has_q & (tq - ti <= h)
            h = np.where(clipped, tq - ti, h)
        y_new, f_new, K = rk_step(rhs, y[idx], f[idx], h)
        err = _error_norm(K, h, y[idx], y_new, rtol, atol)
        ok = np.isfinite(err) & (err < 1.0)
        with np.errstate(divide="ignore"):
            fac = np.where(err == 0, _MAX_FACTOR,
                           np.clip(_SAFETY * np.where(err > 0, err, 1.0) ** _ERR_EXP, _MIN_FACTOR, _MAX_FACTOR))
        fac = np.where(np.isfinite(fac), fac, _MIN_FACTOR)
        # rejected rows shrink; accepted rows grow (never below the natural step when clipped)
        grown = h * np.where(ok, fac, np.minimum(fac, 1.0))
        h_nat[idx] = np.where(ok & clipped, np.maximum(h_nat[idx], grown), grown)

        tiny = h_nat[idx] < 1e-14 * (1.0 + ti)
        if tiny.any():
            bad = idx[tiny & ~ok]
            status[bad] = STALLED
            active[bad] = False
            t_end[bad] = t[bad]
            y_end[bad] = y[bad]

        acc = idx[ok]
        if acc.size == 0:
            continue
        ynew_a = y_new[ok]
        fnew_a = f_new[ok]
        h_a = h[ok]
        cl_a = clipped[ok]
        n_steps[acc] += 1

        if event is not None:
            ev_new = event(ynew_a)
            crossed = ev_new > 0
            if crossed.any():
                ci = np.nonzero(crossed)[0]
                rows = acc[ci]
                s_root, y_root, st = _locate_crossing(rhs, event, y[rows], f[rows], ev[rows],
                                                      h_a[ci], ev_new[ci], root_tol)
                t_end[rows] = t[rows] + s_root
                y_end[rows] = y_root
                status[rows] = st
                active[rows] = False
                if record:
                    for k, r in enumerate(rows):
                        paths[r].append((t_end[r], y_root[k].copy()))
                keep = ~crossed
                acc, ynew_a, fnew_a, h_a, cl_a, ev_new = (
                    acc[keep], ynew_a[keep], fnew_a[keep], h_a[keep], cl_a[keep], ev_new[keep])
            ev[acc] = ev_new

        t[acc] = t[acc] + h_a
        y[acc] = ynew_a
        f[acc] = fnew_a
        if record:
            for r in acc:
                paths[r].append((t[r], y[r].copy()))

        if t_query is not None:
            hit_rows = acc[cl_a]
            if hit_rows.size:
                # exact hit: snap time and record every query at this time
                t[hit_rows] = t_query[hit_rows, qptr[hit_rows]]
                while hit_rows.size:
                    y_query[hit_rows, qptr[hit_rows]] = y[hit_rows]
                    qptr[hit_rows] += 1
                    hit_rows = hit_rows[qptr[hit_rows] < nq]
                    if hit_rows.size == 0:
                        break
                    hit_rows = hit_rows[t_query[hit_rows, qptr[hit_rows]] <= t[hit_rows]]
            if event is None:
                done = acc[qptr[acc] >= nq]
                t_end[done] = t[done]
                y_end[done] = y[done]
                active[done] = False

        over = acc[t[acc] > t_max]
        if over.size:
            status[over] = CAP
            active[over] = False
            t_end[over] = t[over]
            y_end[over] = y[over]

    still = np.nonzero(active)[0]
    if still.size:
        status[still] = STALLED
        t_end[still] = t[still]
        y_end[still] = y[still]

    return BatchResult(t_end=t_end, y_end=y_end, status=status, y_query=y_query,
                       paths=paths, n_steps=n_steps)


def _locate_crossing(rhs, event, y, f, ev0, h, ev1, tol, max_iter=80):
    """Illinois root finding of ``event(step(y, s)) = 0`` for ``s`` in ``(0, h]``."""
    m, d = y.shape
    status = np.full(m, OK, dtype=np.int64)
    a = np.zeros(m)
    fa = ev0.astype(float).copy()
    b = h.astype(float).copy()
    fb = ev1.astype(float).copy()

    # rows starting on (or numerically outside) the boundary need an interior left bracket
    need = fa >= 0
    if need.any():
        found = np.zeros(m, dtype=bool) | ~need
        for frac in (1e-9, 1e-6, 1e-3, 0.02, 0.1, 0.25, 0.5, 0.75, 0.9):
            rows = np.nonzero(~found)[0]
            if rows.size == 0:
                break
            s = frac * h[rows]
            ys, _, _ = rk_step(rhs, y[rows], f[rows], s)
            fs = event(ys)
            good = fs < 0
            a[rows[good]] = s[good]
            fa[rows[good]] = fs[good]
            found[rows[good]] = True
        status[~found] = TANGENT
        # rows with no interior point: report the start state
    side = np.zeros(m, dtype=np.int64)
    s_best = b.copy()
    f_best = fb.copy()
    live = status == OK
    for _ in range(max_iter):
        rows = np.nonzero(live)[0]
        if rows.size == 0:
            break
        aa, bb, ffa, ffb = a[rows], b[rows], fa[rows], fb[rows]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = bb - ffb * (bb - aa) / (ffb - ffa)
        bad = ~np.isfinite(s) | (s <= aa) | (s >= bb)
        s = np.where(bad, 0.5 * (aa + bb), s)
        ys, _, _ = rk_step(rhs, y[rows], f[rows], s)
        fs = event(ys)
        s_best[rows] = s
        f_best[rows] = fs
        left = fs < 0
        # Illinois update
        r_left = rows[left]
        a[r_left] = s[left]
        fa[r_left] = fs[left]
        halve = side[r_left] == -1
        fb[r_left[halve]] *= 0.5
        side[r_left] = -1
        r_right = rows[~left]
        b[r_right] = s[~left]
        fb[r_right] = fs[~left]
        halve = side[r_right] == 1
        fa[r_right[halve]] *= 0.5
        side[r_right] = 1
        conv = (np.abs(fs) <= tol) | (b[rows] - a[rows] <= 1e-15 * (1.0 + b[rows]))
        live[rows[conv]] = False
    s_root = s_best
    y_root, _, _ = rk_step(rhs, y, f, s_root)
    tan = status == TANGENT
    if tan.any():
        s_root = np.where(tan, 0.0, s_root)
        y_root[tan] = y[tan]
    return s_root, y_root, status
