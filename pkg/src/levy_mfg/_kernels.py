"""Hot loops, each in a numba flavour and a pure-numpy flavour.

The numba flavour is used when numba imports and ``LEVY_MFG_NUMBA`` is not
``0``.  Both flavours perform the same floating-point operations in the same
order wherever that is practical, so results agree to rounding (and bitwise
for the Monte Carlo kernels).

Operator kernels work on flattened fields together with gather tables
``fwd[i, j] = flat(i + offset_j)`` and ``rev[i, j] = flat(i - offset_j)``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

ENV_FLAG = "LEVY_MFG_NUMBA"
THREADS_ENV = "LEVY_MFG_THREADS"

_use_numba = _HAVE_NUMBA and os.environ.get(ENV_FLAG, "1").strip().lower() not in ("0", "false", "no")


def numba_available() -> bool:
    return _HAVE_NUMBA


def backend() -> str:
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if _use_numba else "numpy"


def set_backend(name: str) -> None:
    global _use_numba
    if name == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError("numba is not importable")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def worker_count() -> int:
    """Worker cap from ``LEVY_MFG_THREADS`` (defaults to the CPU count).

    An explicit value is honoured even above the CPU count; results do not
    depend on it because every chunk owns its random stream.
    """
    cpus = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return cpus
    try:
        return max(1, int(raw))
    except ValueError:
        return cpus


if _HAVE_NUMBA:

    def _jit(fn):
        return njit(cache=True, nogil=True)(fn)

else:  # pragma: no cover

    def _jit(fn):
        return fn


# ---------------------------------------------------------------------------
# operator application

def _apply_py(fwd, w, total, phi):
    return phi[fwd] @ w - total * phi


def _apply_t_py(rev, w, total, y):
    return y[rev] @ w - total * y


def _fp_step_py(rev, w, total, m, b, dt):
    bm = b * m
    return m * (1.0 - dt * total * b) + dt * (bm[rev] @ w)


def _dual_step_py(fwd, w, total, v, b, dt):
    return v * (1.0 - dt * total * b) + dt * b * (v[fwd] @ w)


def _apply_nb(fwd, w, total, phi):
    npts, k = fwd.shape
    out = np.empty(npts)
    for i in range(npts):
        s = 0.0
        for j in range(k):
            s += phi[fwd[i, j]] * w[j]
        out[i] = s - total * phi[i]
    return out


def _fp_step_nb(rev, w, total, m, b, dt):
    npts, k = rev.shape
    bm = b * m
    out = np.empty(npts)
    for i in range(npts):
        s = 0.0
        for j in range(k):
            s += bm[rev[i, j]] * w[j]
        out[i] = m[i] * (1.0 - dt * total * b[i]) + dt * s
    return out


def _dual_step_nb(fwd, w, total, v, b, dt):
    npts, k = fwd.shape
    out = np.empty(npts)
    for i in range(npts):
        s = 0.0
        for j in range(k):
            s += v[fwd[i, j]] * w[j]
        out[i] = v[i] * (1.0 - dt * total * b[i]) + dt * b[i] * s
    return out


if _HAVE_NUMBA:
    _apply_nb = _jit(_apply_nb)
    _fp_step_nb = _jit(_fp_step_nb)
    _dual_step_nb = _jit(_dual_step_nb)


def apply_gather(fwd, w, total, phi):
    """``sum_j w_j (phi[i + o_j] - phi[i])`` for a flat field."""
    if _use_numba:
        return _apply_nb(fwd, w, total, phi)
    return _apply_py(fwd, w, total, phi)


def apply_transpose_gather(rev, w, total, y):
    """Exact transpose of :func:`apply_gather`."""
    if _use_numba:
        return _apply_nb(rev, w, total, y)
    return _apply_t_py(rev, w, total, y)


def fp_step(rev, w, total, m, b, dt):
    """One explicit FP step ``m + dt * L^T(b m)`` in nonnegative form."""
    if _use_numba:
        return _fp_step_nb(rev, w, total, m, b, dt)
    return _fp_step_py(rev, w, total, m, b, dt)


def dual_step(fwd, w, total, v, b, dt):
    """One explicit dual step ``v + dt * b * L v`` in monotone form."""
    if _use_numba:
        return _dual_step_nb(fwd, w, total, v, b, dt)
    return _dual_step_py(fwd, w, total, v, b, dt)


# ---------------------------------------------------------------------------
# modulus of continuity on a periodic grid

def _modulus_1d_py(phi, kmax):
    out = np.zeros(kmax)
    for k in range(1, kmax + 1):
        out[k - 1] = np.max(np.abs(np.roll(phi, -k) - phi))
    return out


def _modulus_1d_nb(phi, kmax):
    n = phi.shape[0]
    out = np.zeros(kmax)
    for k in range(1, kmax + 1):
        best = 0.0
        for i in range(n):
            d = abs(phi[(i + k) % n] - phi[i])
            if d > best:
                best = d
        out[k - 1] = best
    return out


def _modulus_2d_py(phi, shifts):
    out = np.zeros(shifts.shape[0])
    for s in range(shifts.shape[0]):
        moved = np.roll(phi, (-shifts[s, 0], -shifts[s, 1]), axis=(0, 1))
        out[s] = np.max(np.abs(moved - phi))
    return out


def _modulus_2d_nb(phi, shifts):
    n0, n1 = phi.shape
    out = np.zeros(shifts.shape[0])
    for s in range(shifts.shape[0]):
        a = shifts[s, 0]
        c = shifts[s, 1]
        best = 0.0
        for i in range(n0):
            ii = (i + a) % n0
            for j in range(n1):
                d = abs(phi[ii, (j + c) % n1] - phi[i, j])
                if d > best:
                    best = d
        out[s] = best
    return out


if _HAVE_NUMBA:
    _modulus_1d_nb = _jit(_modulus_1d_nb)
    _modulus_2d_nb = _jit(_modulus_2d_nb)


def modulus_1d(phi, kmax):
    """``out[k-1] = max_i |phi[i+k] - phi[i]|`` for ``k = 1..kmax``."""
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    if _use_numba:
        return _modulus_1d_nb(phi, int(kmax))
    return _modulus_1d_py(phi, int(kmax))


def modulus_2d(phi, shifts):
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    shifts = np.ascontiguousarray(shifts, dtype=np.int64)
    if _use_numba:
        return _modulus_2d_nb(phi, shifts)
    return _modulus_2d_py(phi, shifts)


# ---------------------------------------------------------------------------
# Monte Carlo: compound Poisson paths on the grid with rate thinning

def _cum_cost(t, x, ccum, cost, dt, nt):
    k = int(t / dt)
    if k > nt - 1:
        k = nt - 1
    return ccum[k, x] + (t - k * dt) * cost[k, x]


def _thin_paths_nb(start, rates, bound, offs, cum, n, dt, nt, horizon,
                   ptr, times, u_acc, u_jump, cost, ccum, terminal):
    npaths = start.shape[0]
    levels = np.empty((npaths, nt + 1), dtype=np.int64)
    values = np.empty(npaths)
    for p in range(npaths):
        pos = start[p]
        levels[p, 0] = pos
        lvl = 1
        acc = 0.0
        last = 0.0
        for e in range(ptr[p], ptr[p + 1]):
            tau = times[e]
            while lvl <= nt and lvl * dt <= tau:
                levels[p, lvl] = pos
                lvl += 1
            acc += _cum_cost_nb(tau, pos, ccum, cost, dt, nt) - _cum_cost_nb(last, pos, ccum, cost, dt, nt)
            last = tau
            k = int(tau / dt)
            if k > nt - 1:
                k = nt - 1
            if u_acc[e] * bound < rates[k, pos]:
                j = np.searchsorted(cum, u_jump[e], side="right")
                if j > offs.shape[0] - 1:
                    j = offs.shape[0] - 1
                pos = (pos + offs[j]) % n
        while lvl <= nt:
            levels[p, lvl] = pos
            lvl += 1
        acc += _cum_cost_nb(horizon, pos, ccum, cost, dt, nt) - _cum_cost_nb(last, pos, ccum, cost, dt, nt)
        values[p] = acc + terminal[pos]
    return levels, values


def _thin_paths_py(start, rates, bound, offs, cum, n, dt, nt, horizon,
                   ptr, times, u_acc, u_jump, cost, ccum, terminal):
    def cum_cost(t, x):
        k = np.minimum((t / dt).astype(np.int64), nt - 1)
        return ccum[k, x] + (t - k * dt) * cost[k, x]

    npaths = start.shape[0]
    counts = np.diff(ptr)
    pos = start.astype(np.int64).copy()
    last = np.zeros(npaths)
    acc = np.zeros(npaths)
    post = np.empty(times.shape[0], dtype=np.int64)
    for r in range(int(counts.max(initial=0))):
        active = np.nonzero(counts > r)[0]
        e = ptr[active] + r
        tau = times[e]
        x = pos[active]
        acc[active] += cum_cost(tau, x) - cum_cost(last[active], x)
        last[active] = tau
        k = np.minimum((tau / dt).astype(np.int64), nt - 1)
        accept = u_acc[e] * bound < rates[k, x]
        j = np.minimum(np.searchsorted(cum, u_jump[e], side="right"), offs.shape[0] - 1)
        x = np.where(accept, (x + offs[j]) % n, x)
        pos[active] = x
        post[e] = x
    levels = np.empty((npaths, nt + 1), dtype=np.int64)
    levels[:, 0] = start
    path_of = np.repeat(np.arange(npaths), counts)
    for lvl in range(1, nt + 1):
        before = np.bincount(path_of, weights=(times < lvl * dt), minlength=npaths).astype(np.int64)
        idx = ptr[:-1] + before - 1
        levels[:, lvl] = np.where(before > 0, post[np.maximum(idx, 0)] if post.size else start, start)
    full = np.full(npaths, float(horizon))
    acc += cum_cost(full, pos) - cum_cost(last, pos)
    return levels, acc + terminal[pos]


def _stable_paths_nb(z0, rates, incr, expo, dt, nt, n, cost, terminal, amplitude):
    npaths = z0.shape[0]
    levels = np.empty((npaths, nt + 1), dtype=np.int64)
    values = np.empty(npaths)
    scale = dt ** expo
    for p in range(npaths):
        z = z0[p]
        acc = 0.0
        for k in range(nt):
            x = int(np.floor(z * n + 0.5)) % n
            levels[p, k] = x
            r = rates[k, x]
            acc += cost[k, x] * dt
            if amplitude:
                z = z + r * scale * incr[p, k]
            else:
                z = z + (r * dt) ** expo * incr[p, k]
            z = z - np.floor(z)
        x = int(np.floor(z * n + 0.5)) % n
        levels[p, nt] = x
        values[p] = acc + terminal[x]
    return levels, values


def _stable_paths_py(z0, rates, incr, expo, dt, nt, n, cost, terminal, amplitude):
    npaths = z0.shape[0]
    levels = np.empty((npaths, nt + 1), dtype=np.int64)
    z = z0.astype(np.float64).copy()
    acc = np.zeros(npaths)
    scale = dt ** expo
    for k in range(nt):
        x = np.floor(z * n + 0.5).astype(np.int64) % n
        levels[:, k] = x
        r = rates[k, x]
        acc += cost[k, x] * dt
        if amplitude:
            z = z + r * scale * incr[:, k]
        else:
            z = z + (r * dt) ** expo * incr[:, k]
        z = z - np.floor(z)
    x = np.floor(z * n + 0.5).astype(np.int64) % n
    levels[:, nt] = x
    return levels, acc + terminal[x]


if _HAVE_NUMBA:
    _cum_cost_nb = _jit(_cum_cost)
    _thin_paths_nb = _jit(_thin_paths_nb)
    _stable_paths_nb = _jit(_stable_paths_nb)
else:  # pragma: no cover
    _cum_cost_nb = _cum_cost


def thin_paths(*args):
    """Exact simulation of the time-changed compound Poisson chain.

    Proposals arrive at rate ``bound * W``; a proposal at time ``tau`` in step
    ``k`` is accepted with probability ``rates[k, pos] / bound`` and then
    jumps by an offset drawn from ``cum``.  Returns grid positions at every
    time level and per-path accumulated ``cost`` plus ``terminal``.
    """
    if _use_numba:
        return _thin_paths_nb(*args)
    return _thin_paths_py(*args)


def stable_paths(*args):
    """Euler paths driven by pre-sampled standard stable increments."""
    if _use_numba:
        return _stable_paths_nb(*args)
    return _stable_paths_py(*args)
