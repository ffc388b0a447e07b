"""Smoothing monotone couplings and the damped Picard loop for the coupled
backward/forward system."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fp import as_measure, solve_fp, sup_tv, uniqueness_probe
from .grid_levy import DiscreteOperator, Grid, apply_operator, holder_seminorm
from .hamiltonian import ConjugatePair
from .hjb import HjbProblem, extract_drift, lu_bound_constant, solve_hjb
from .regularity import uniqueness_thresholds


def gaussian_kernel(grid: Grid, width: float) -> np.ndarray:
    """Periodized Gaussian density on the grid (``sum eta h = 1``)."""
    if not width > 0:
        raise ValidationError(f"coupling: mollifier width must be > 0, got {width!r}")
    axes = []
    for _ in range(grid.d):
        x = grid.x
        k = np.arange(-8, 9)[:, None]
        axes.append(np.exp(-0.5 * ((x[None, :] + k) / width) ** 2).sum(axis=0))
    eta = axes[0] if grid.d == 1 else np.outer(axes[0], axes[1])
    return eta / (eta.sum() * grid.h**grid.d)


def _fft(a):
    return np.fft.fftn(a)


def _ifft(a):
    return np.real(np.fft.ifftn(a))


@dataclass
class Coupling:
    """``f(m)(t) = A (rho * rho * m(t)) + c`` and ``g(m_T) = A_g (rho * rho * m_T) + c_g``.

    ``rho`` is an even density with nonnegative Fourier coefficients; the
    monotonicity pairing then equals ``A h^d sum (rho * mu)^2``.
    """

    grid: Grid
    rho: np.ndarray
    A: float = 1.0
    offset: float = 0.0
    A_g: float = 0.0
    offset_g: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.shape != self.grid.shape:
            raise ValidationError(f"coupling: mollifier shape {rho.shape} does not match grid {self.grid.shape}")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise ValidationError("coupling: mollifier must be finite and nonnegative")
        flipped = np.roll(np.flip(rho, axis=tuple(range(rho.ndim))), 1, axis=tuple(range(rho.ndim)))
        if not np.allclose(rho, flipped, rtol=1e-12, atol=1e-14 * rho.max()):
            raise ValidationError("coupling: mollifier must be even")
        coef = _fft(rho)
        if np.min(coef.real) < -1e-12 * np.max(np.abs(coef)):
            raise ValidationError("coupling: mollifier has negative Fourier coefficients")
        if self.A < 0 or self.A_g < 0:
            raise ValidationError("coupling: amplitudes must be >= 0 for a monotone coupling")
        self.rho = rho
        cell = self.grid.h**self.grid.d
        self._rho_hat = coef.real * cell
        self.kernel = _ifft(self._rho_hat**2 / cell)

    def smooth(self, m: np.ndarray, times: int = 2) -> np.ndarray:
        """``rho * ... * m`` (``times`` convolutions) at the grid points; the
        leading axes of ``m`` are batch axes."""
        d = self.grid.d
        ax = tuple(range(m.ndim - d, m.ndim))
        mh = np.fft.fftn(m, axes=ax)
        return np.real(np.fft.ifftn(mh * self._rho_hat**times / self.grid.h**d, axes=ax))

    def f(self, m_traj: np.ndarray) -> np.ndarray:
        return self.A * self.smooth(np.asarray(m_traj, dtype=np.float64)) + self.offset

    def g(self, m_T: np.ndarray) -> np.ndarray:
        return self.A_g * self.smooth(np.asarray(m_T, dtype=np.float64)) + self.offset_g

    def pairing(self, m1: np.ndarray, m2: np.ndarray) -> float:
        """``<f(m1) - f(m2), m1 - m2>`` for one time slice."""
        mu = np.asarray(m1) - np.asarray(m2)
        return float(np.sum((self.f(m1) - self.f(m2)) * mu))

    def pairing_identity(self, m1: np.ndarray, m2: np.ndarray) -> float:
        """``A h^d sum (rho * (m1 - m2))^2``."""
        mu = np.asarray(m1) - np.asarray(m2)
        return float(self.A * self.grid.h**self.grid.d * np.sum(self.smooth(mu, times=1) ** 2))

    def certified_bound(self, alpha: float = 1.0) -> tuple[float, float]:
        """Bounds ``(M_f, M_g)`` on ``||f(m)(t)||_alpha`` and ``||g(m)||_alpha``
        valid for every probability vector ``m``."""
        K = self.kernel
        base = float(K.max()) + holder_seminorm(K, alpha)
        return abs(self.A) * base + abs(self.offset), abs(self.A_g) * base + abs(self.offset_g)

    @property
    def M(self) -> float:
        mf, mg = self.certified_bound(1.0)
        return mf + mg


def make_coupling(grid: Grid, width: float = 0.05, A: float = 1.0, offset: float = 0.0,
                  A_g: float = 0.0, offset_g: float = 0.0, rho: np.ndarray | None = None) -> Coupling:
    """Coupling with ``rho = eta * eta~`` built from a periodized Gaussian ``eta``
    (``rho`` may be supplied instead)."""
    if rho is None:
        eta = gaussian_kernel(grid, width)
        cell = grid.h**grid.d
        hat = _fft(eta) * cell
        # eta * reflected eta has Fourier coefficients |eta_hat|^2 >= 0
        rho = _ifft(np.abs(hat) ** 2 / cell)
        rho = np.maximum(rho, 0.0)
        rho = 0.5 * (rho + np.roll(np.flip(rho, axis=tuple(range(grid.d))), 1, axis=tuple(range(grid.d))))
    return Coupling(grid=grid, rho=rho, A=A, offset=offset, A_g=A_g, offset_g=offset_g,
                    meta={"width": width})


# ---------------------------------------------------------------------------
# fixed point

@dataclass
class MfgSolution:
    u: np.ndarray
    m: np.ndarray
    b: np.ndarray
    history: list[float]
    converged: bool
    iterations: int
    residuals: dict
    verdict: dict
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"converged": self.converged, "iterations": self.iterations,
                "final_increment": self.history[-1] if self.history else 0.0,
                "residuals": dict(self.residuals), "thresholds": dict(self.verdict)}


def initial_guesses(grid: Grid, k: int, seed: int = 0) -> list[np.ndarray]:
    """Point mass, uniform, then random mixtures of point masses and uniform."""
    rng = np.random.default_rng(seed)
    out = []
    pm = np.zeros(grid.shape)
    pm[(0,) * grid.d] = 1.0
    out.append(pm)
    out.append(np.full(grid.shape, 1.0 / grid.size))
    while len(out) < k:
        w = rng.dirichlet(np.ones(4))
        m = w[0] * np.full(grid.shape, 1.0 / grid.size)
        for wi in w[1:]:
            idx = tuple(rng.integers(0, grid.n, size=grid.d))
            m[idx] += wi
        out.append(m / m.sum())
    return out[:k]


def run_verdict(op: DiscreteOperator, pair: ConjugatePair, alpha: float = 1.0) -> dict:
    if op.order <= 0 or not (0 < pair.gamma <= 1):
        return {"mfg_unique": False, "note": "thresholds not applicable"}
    rep = uniqueness_thresholds(op.order, alpha, pair.gamma, symmetric=op.is_symmetric(), exact=True)
    d = rep.as_dict()
    d["note"] = "numerical evidence only"
    return d


def _hjb(op, pair, coupling, m_traj, alpha, R):
    prob = HjbProblem(op=op, pair=pair, g=coupling.g(m_traj[-1]), f=coupling.f(m_traj), alpha=alpha, R=R)
    return prob, solve_hjb(prob)


def solve_mfg(op: DiscreteOperator, pair: ConjugatePair, coupling: Coupling, m0, tau: float = 0.5,
              tol: float = 1e-6, max_iters: int = 200, init: np.ndarray | None = None,
              alpha: float = 1.0, scheme: str = "picard") -> MfgSolution:
    """Damped Picard iteration ``m <- (1 - tau) m + tau Phi(m)``.

    ``Phi(m)`` solves the backward equation with data ``(f(m), g(m(T)))``,
    takes ``b = F'(L u)`` and runs the forward equation from ``m0``.  The loop
    stops once ``sup_t TV(m^{k+1}, m^k) < tol``.  ``scheme='fictitious'`` uses
    the averaging weight ``1/(k+2)`` instead of ``tau``.  The returned ``m``
    is the forward flow of the returned ``u``.
    """
    grid = op.grid
    m0 = as_measure(m0, grid)
    if not (0 < tau <= 1):
        raise ValidationError(f"mfg: damping tau must lie in (0, 1], got {tau!r}")
    if scheme not in ("picard", "fictitious"):
        raise ValidationError(f"mfg: unknown scheme {scheme!r}")
    guess = m0 if init is None else as_measure(init, grid)
    m = np.broadcast_to(guess, (grid.n_t + 1,) + grid.shape).copy()
    # a-priori working range from the certified data bound
    R = None
    if op.spec is not None and alpha > op.order:
        R = lu_bound_constant(op, alpha) * coupling.M * (grid.T + 1.0)
    history: list[float] = []
    best = (np.inf, m)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        _, sol = _hjb(op, pair, coupling, m, alpha, R)
        b = extract_drift(sol.u, op, pair)
        phi = solve_fp(b, m0, op).m
        weight = tau if scheme == "picard" else 1.0 / (it + 1)
        new = (1 - weight) * m + weight * phi
        inc = sup_tv(new, m)
        history.append(inc)
        m = new
        if inc < best[0]:
            best = (inc, m)
        if inc < tol:
            converged = True
            break
    if not converged:
        m = best[1]
    prob, sol = _hjb(op, pair, coupling, m, alpha, R)
    b = extract_drift(sol.u, op, pair)
    fp_sol = solve_fp(b, m0, op)
    m_out = fp_sol.m
    # residuals of the returned pair: u against the backward solve with data
    # built from m_out, and m_out against the forward flow of that solve's drift
    _, check = _hjb(op, pair, coupling, m_out, alpha, R)
    residuals = {
        "hjb": float(np.max(np.abs(check.u - sol.u))),
        "fp": sup_tv(solve_fp(extract_drift(check.u, op, pair), m0, op).m, m_out),
        "fixed_point": sup_tv(m_out, m),
        "mass_defect": float(np.max(fp_sol.mass_defect)),
        "min_mass": float(m_out.min()),
    }
    return MfgSolution(u=sol.u, m=m_out, b=b, history=history, converged=converged, iterations=it,
                       residuals=residuals, verdict=run_verdict(op, pair, alpha),
                       meta={"tau": tau, "tol": tol, "scheme": scheme, "R": sol.R})


@dataclass
class UniquenessExperiment:
    runs: list[MfgSolution]
    max_u_distance: float
    max_m_distance: float
    verdict: dict
    status: str

    def as_dict(self) -> dict:
        return {"runs": len(self.runs), "converged": [r.converged for r in self.runs],
                "iterations": [r.iterations for r in self.runs],
                "max_u_distance": self.max_u_distance, "max_m_distance": self.max_m_distance,
                "thresholds": self.verdict, "status": self.status}


def uniqueness_experiment(op: DiscreteOperator, pair: ConjugatePair, coupling: Coupling, m0, k: int = 4,
                          tau: float = 0.5, tol: float = 1e-6, max_iters: int = 200, seed: int = 0,
                          alpha: float = 1.0) -> UniquenessExperiment:
    """Solve from ``k`` distinct initial guesses and compare the results.

    Status is ``pass``/``fail`` (agreement within ``10 tol``) only when the
    threshold verdict says unique and all runs converged; otherwise it is
    ``informational``.
    """
    runs = [solve_mfg(op, pair, coupling, m0, tau=tau, tol=tol, max_iters=max_iters, init=g, alpha=alpha)
            for g in initial_guesses(op.grid, k, seed)]
    du = max((float(np.max(np.abs(a.u - b.u))) for a, b in itertools.combinations(runs, 2)), default=0.0)
    dm = max((sup_tv(a.m, b.m) for a, b in itertools.combinations(runs, 2)), default=0.0)
    verdict = run_verdict(op, pair, alpha)
    if verdict.get("mfg_unique") and all(r.converged for r in runs):
        status = "pass" if max(du, dm) < 10 * tol else "fail"
    else:
        status = "informational"
    return UniquenessExperiment(runs=runs, max_u_distance=du, max_m_distance=dm, verdict=verdict, status=status)


# ---------------------------------------------------------------------------
# surrogate checks

@dataclass
class SReport:
    checks: dict

    @property
    def ok(self) -> bool:
        return all(c.get("pass", True) for c in self.checks.values())

    def as_dict(self) -> dict:
        return {"ok": self.ok, **self.checks}


def check_S_conditions(sol: MfgSolution, op: DiscreteOperator, pair: ConjugatePair, coupling: Coupling,
                       m0, alpha: float = 1.0, levels: int = 5, tol: float = 1e-8) -> SReport:
    """Numerical surrogates for the structural conditions of the well-posedness
    theory, evaluated on a finished run."""
    grid = op.grid
    checks: dict = {}
    checks["S1"] = {"hjb_residual": sol.residuals["hjb"], "pass": sol.residuals["hjb"] <= tol}
    # S2: perturb the running data by eps_k cos(2 pi x) and watch L u converge
    bump = np.cos(2 * np.pi * grid.coords()[0])
    base_prob = HjbProblem(op=op, pair=pair, g=coupling.g(sol.m[-1]), f=coupling.f(sol.m), alpha=alpha)
    lu0 = apply_operator(op, solve_hjb(base_prob).u)
    diffs = []
    for k in range(1, levels + 1):
        eps = 2.0**-k
        p = HjbProblem(op=op, pair=pair, g=base_prob.g, f=base_prob.f + eps * bump, alpha=alpha)
        diffs.append(float(np.max(np.abs(apply_operator(op, solve_hjb(p).u) - lu0))))
    mono = all(b <= a * (1 + 1e-12) for a, b in zip(diffs, diffs[1:]))
    checks["S2"] = {"eps": [2.0**-k for k in range(1, levels + 1)], "lu_differences": diffs,
                    "pass": mono and (diffs[-1] <= diffs[0] or diffs[0] == 0.0)}
    # S3: drift bound from the a-priori range
    lu = apply_operator(op, sol.u)
    measured = float(np.max(pair.dF(lu)))
    if op.spec is not None and alpha > op.order:
        R = lu_bound_constant(op, alpha) * coupling.M * (grid.T + 1.0)
        K_hjb = pair.sup_dF(-R, R)
    else:
        K_hjb = float("inf")
    checks["S3"] = {"sup_dF": measured, "K_HJB": K_hjb, "margin": K_hjb - measured,
                    "pass": measured <= K_hjb * (1 + 1e-12) + 1e-15}
    # S4: time derivative of u
    ut = np.max(np.abs(np.diff(sol.u, axis=0))) / grid.dt if grid.n_t else 0.0
    R_run = float(sol.meta.get("R", np.max(np.abs(lu))))
    bound = float(np.max(np.abs(pair.F(np.linspace(-R_run, R_run, 4001))))) + float(np.max(np.abs(coupling.f(sol.m))))
    checks["S4"] = {"sup_ut": float(ut), "bound": bound, "pass": bool(np.isfinite(ut)) and ut <= bound * (1 + 1e-9) + 1e-12}
    # S5: forward uniqueness probe
    probe = uniqueness_probe(sol.b, m0, op)
    checks["S5"] = {**probe.as_dict(), "pass": True}
    return SReport(checks=checks)
