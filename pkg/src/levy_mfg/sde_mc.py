"""Monte Carlo for the time-changed jump process ``dZ = b(t, Z) dX``.

Two samplers are available:

* ``compound-poisson``: exact simulation of the continuous-time grid chain
  whose generator is ``b(t, x) L_h`` (thinning of a dominating Poisson
  clock, offsets drawn from the operator weights).  Works for every kind and
  is consistent with the forward solver by construction.
* ``stable-increment``: Euler paths driven by symmetric stable increments
  (1D symmetric stable specs only).  ``mode='time-change'`` runs the clock
  at rate ``b``; ``mode='amplitude'`` multiplies the increment by ``b``.

Paths are processed in fixed chunks, each with its own counter-based
generator spawned from the master seed, so the output does not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernels
from .errors import ValidationError
from .grid_levy import DiscreteOperator, Grid
from .hamiltonian import ConjugatePair

CHUNK = 8192
METHODS = ("compound-poisson", "stable-increment")
MODES = ("time-change", "amplitude")


def _generators(seed: int, n_paths: int, tag: int = 0) -> list[np.random.Generator]:
    n_chunks = max(1, math.ceil(n_paths / CHUNK))
    ss = np.random.SeedSequence([int(seed), int(tag)])
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(n_chunks)]


def _chunks(n_paths: int) -> list[tuple[int, int]]:
    return [(s, min(s + CHUNK, n_paths)) for s in range(0, n_paths, CHUNK)]


def _run_chunks(fn, n_paths: int, seed: int, tag: int = 0) -> list:
    gens = _generators(seed, n_paths, tag)
    jobs = list(zip(_chunks(n_paths), gens))
    workers = min(_kernels.worker_count(), len(jobs))
    if workers <= 1:
        return [fn(lo, hi, g) for (lo, hi), g in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(job[0][0], job[0][1], job[1]), jobs))


def default_method(op: DiscreteOperator) -> str:
    spec = op.spec
    if spec is not None and spec.kind == "stable" and spec.d == 1 and spec.symmetric:
        return "stable-increment"
    return "compound-poisson"


def _rates(field, grid: Grid, name: str) -> np.ndarray:
    """Per-interval rates of shape ``(n_t, n)`` from a level field or a slice."""
    arr = np.asarray(field, dtype=np.float64)
    if grid.d != 1:
        raise ValidationError("mc: path simulation is one-dimensional")
    if arr.shape == grid.shape:
        arr = np.broadcast_to(arr, (grid.n_t, grid.n))
    elif arr.shape == (grid.n_t + 1, grid.n):
        arr = arr[:-1]
    elif arr.shape != (grid.n_t, grid.n):
        raise ValidationError(f"mc: {name} has shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"mc: {name} must be finite and >= 0")
    return np.ascontiguousarray(arr)


def _stable_scale(op: DiscreteOperator) -> float:
    """``s`` with symbol ``-s |xi|^order`` for the spec behind ``op``."""
    return float(-op.spec.symbol(1.0).real)


def _simulate(op: DiscreteOperator, rates: np.ndarray, m0: np.ndarray, n_paths: int, seed: int,
              cost: np.ndarray, terminal: np.ndarray, method: str, mode: str, starts=None):
    grid = op.grid
    n, nt, dt, T = grid.n, grid.n_t, grid.dt, grid.T
    if method not in METHODS:
        raise ValidationError(f"mc: unknown method {method!r}")
    if mode not in MODES:
        raise ValidationError(f"mc: unknown mode {mode!r}")
    if method == "stable-increment":
        spec = op.spec
        if spec is None or spec.kind != "stable" or spec.d != 1 or not spec.symmetric:
            raise ValidationError("mc: stable increments need a 1D symmetric stable spec")
    elif mode == "amplitude":
        raise ValidationError("mc: amplitude mode is only defined for stable increments")
    ccum = np.zeros((nt, n))
    ccum[1:] = np.cumsum(cost[:-1] * dt, axis=0)
    cost = np.ascontiguousarray(cost)
    terminal = np.ascontiguousarray(terminal, dtype=np.float64)
    p0 = None if starts is not None else np.asarray(m0, dtype=np.float64) / np.sum(m0)

    def start_positions(lo, hi, rng):
        if starts is not None:
            return np.ascontiguousarray(np.asarray(starts, dtype=np.int64)[lo:hi])
        return rng.choice(n, size=hi - lo, p=p0).astype(np.int64)

    if method == "compound-poisson":
        bound = float(rates.max())
        W = op.total
        offs = np.ascontiguousarray(op.offsets.astype(np.int64) % n)
        cum = np.cumsum(op.weights) / W if W > 0 else np.ones(1)
        if offs.size == 0:
            offs = np.zeros(1, dtype=np.int64)

        def run(lo, hi, rng):
            x0 = start_positions(lo, hi, rng)
            P = hi - lo
            lam = bound * W * T
            counts = rng.poisson(lam, size=P) if lam > 0 else np.zeros(P, dtype=np.int64)
            ptr = np.zeros(P + 1, dtype=np.int64)
            ptr[1:] = np.cumsum(counts)
            total = int(ptr[-1])
            times = rng.uniform(0.0, T, size=total)
            # sort within each path
            path = np.repeat(np.arange(P), counts)
            times = times[np.lexsort((times, path))]
            u_acc = rng.uniform(size=total)
            u_jump = rng.uniform(size=total)
            return _kernels.thin_paths(x0, rates, bound if bound > 0 else 1.0, offs, cum, n, dt, nt, T,
                                       ptr, times, u_acc, u_jump, cost, ccum, terminal)
    else:
        alpha = op.order
        scale = _stable_scale(op) ** (1.0 / alpha)

        def run(lo, hi, rng):
            P = hi - lo
            if starts is not None:
                z0 = np.asarray(starts, dtype=np.int64)[lo:hi] * grid.h
            else:
                z0 = start_positions(lo, hi, rng) * grid.h
            incr = stats.levy_stable.rvs(alpha, 0.0, size=(P, nt), random_state=rng) * scale
            return _kernels.stable_paths(np.ascontiguousarray(z0, dtype=np.float64), rates,
                                         np.ascontiguousarray(incr), 1.0 / alpha, dt, nt, n, cost, terminal,
                                         mode == "amplitude")

    parts = _run_chunks(run, n_paths, seed)
    levels = np.concatenate([p[0] for p in parts], axis=0)
    values = np.concatenate([p[1] for p in parts])
    return levels, values


@dataclass
class SdeResult:
    times: np.ndarray
    hist: np.ndarray
    se: np.ndarray
    n_paths: int
    method: str
    mode: str
    seed: int

    def as_dict(self) -> dict:
        return {"n_paths": self.n_paths, "method": self.method, "mode": self.mode, "seed": self.seed}


def simulate_sde(op: DiscreteOperator, b, m0, n_paths: int, seed: int = 0, method: str | None = None,
                 mode: str = "time-change") -> SdeResult:
    """Empirical laws of ``Z`` on the grid at every time level, with binomial
    standard errors per cell."""
    grid = op.grid
    if n_paths < 1:
        raise ValidationError("mc: n_paths must be >= 1")
    method = default_method(op) if method is None else method
    rates = _rates(b, grid, "drift")
    zero = np.zeros((grid.n_t, grid.n))
    levels, _ = _simulate(op, rates, np.asarray(m0), n_paths, seed, zero, np.zeros(grid.n), method, mode)
    hist = np.stack([np.bincount(levels[:, k], minlength=grid.n) for k in range(grid.n_t + 1)]) / n_paths
    se = np.sqrt(hist * (1 - hist) / n_paths)
    return SdeResult(times=grid.times, hist=hist, se=se, n_paths=n_paths, method=method, mode=mode, seed=seed)


@dataclass
class GainEstimate:
    x_index: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_paths: int

    def as_dict(self) -> dict:
        return {"n_paths": self.n_paths, "max_se": float(np.max(self.se))}


def estimate_gain(op: DiscreteOperator, policy, f, g, pair: ConjugatePair, n_paths: int, seed: int = 0,
                  starts=None, method: str = "compound-poisson", mode: str = "time-change") -> GainEstimate:
    """Monte Carlo estimate of ``J(0, x)`` for a deterministic feedback policy.

    ``policy`` gives the clock rate ``zeta`` on each time interval (shape
    ``(n_t, n)`` or a constant slice).  On interval ``k`` the running gain is
    ``-L(zeta_k) + f^{k+1}`` (right-endpoint sampling, as in the backward
    scheme); it is integrated exactly along each path, then ``g`` is added
    at the final position.  ``n_paths`` paths start from each index in
    ``starts`` (default: every grid point).
    """
    grid = op.grid
    zeta = _rates(policy, grid, "policy")
    with np.errstate(invalid="ignore"):
        Lz = np.asarray(pair.L(zeta), dtype=np.float64)
    if not np.all(np.isfinite(Lz)):
        raise ValidationError("mc: cost L is infinite on some policy value")
    fa = np.asarray(f, dtype=np.float64)
    if fa.shape == grid.shape:
        fa = np.broadcast_to(fa, (grid.n_t + 1, grid.n))
    if fa.shape != (grid.n_t + 1, grid.n):
        raise ValidationError(f"mc: source f has shape {fa.shape}")
    cost = -Lz + fa[1:]
    starts = np.arange(grid.n) if starts is None else np.asarray(starts, dtype=np.int64)
    all_starts = np.repeat(starts, n_paths)
    _, values = _simulate(op, zeta, np.ones(grid.n), all_starts.size, seed, cost,
                          np.asarray(g, dtype=np.float64), method, mode, starts=all_starts)
    values = values.reshape(starts.size, n_paths)
    mean = values.mean(axis=1)
    se = values.std(axis=1, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.full(starts.size, np.inf)
    return GainEstimate(x_index=starts, mean=mean, se=se, n_paths=n_paths)


# ---------------------------------------------------------------------------
# self-similar control equivalence

@dataclass
class SelfSimilarReport:
    max_gap: float
    max_gap_closed: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_gap <= self.tolerance and self.max_gap_closed <= self.tolerance

    def as_dict(self) -> dict:
        return {"max_gap": self.max_gap, "max_gap_closed": self.max_gap_closed,
                "tolerance": self.tolerance, "ok": self.ok}


def check_selfsimilar_equivalence(sigma: float, q: float, lu: np.ndarray, zeta_max: float = 10.0,
                                  samples: int = 20001) -> SelfSimilarReport:
    """Compare ``sup_lambda (lambda^{2 sigma} z - Lhat(lambda))`` with
    ``sup_zeta (zeta z - zeta^q/q)`` pointwise in ``z = L_h u``, each by
    brute force over its own uniform control grid.

    The amplitude cost is ``Lhat(lambda) = L(lambda^{2 sigma}) = lambda^{2 sigma q}/q``,
    which is what the substitution ``zeta = lambda^{2 sigma}`` produces.
    """
    if not (0 < sigma < 0.5) or not q > 1:
        raise ValidationError("self-similar: need sigma in (0, 1/2) and q > 1")
    z = np.asarray(lu, dtype=np.float64).reshape(-1)
    zeta = np.linspace(0.0, zeta_max, samples)
    lam = np.linspace(0.0, zeta_max ** (1 / (2 * sigma)), samples)
    by_zeta = np.max(np.multiply.outer(z, zeta) - zeta**q / q, axis=1)
    by_lam = np.max(np.multiply.outer(z, lam ** (2 * sigma)) - lam ** (2 * sigma * q) / q, axis=1)
    closed = (q - 1) / q * np.maximum(z, 0.0) ** (q / (q - 1))
    zs = np.maximum(z, 0.0) ** (1 / (q - 1))
    if np.any(zs >= zeta_max):
        raise ValidationError("self-similar: zeta grid does not contain the maximizer; raise zeta_max")

    def resolution(grid, phi, opt):
        # the grid max lies between the true sup and the better end of the bracketing cell
        j = np.clip(np.searchsorted(grid, opt, side="right") - 1, 0, grid.size - 2)
        return phi(opt) - np.maximum(phi(grid[j]), phi(grid[j + 1]))

    err_zeta = resolution(zeta, lambda s: s * z - s**q / q, zs)
    err_lam = resolution(lam, lambda s: s ** (2 * sigma) * z - s ** (2 * sigma * q) / q,
                         zs ** (1 / (2 * sigma)))
    tol = float(np.max(np.maximum(err_zeta, err_lam))) * (1 + 1e-9) + 1e-13
    return SelfSimilarReport(max_gap=float(np.max(np.abs(by_zeta - by_lam))),
                             max_gap_closed=float(np.max(np.abs(by_zeta - closed))), tolerance=float(tol))
