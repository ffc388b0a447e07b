"""Explicit monotone scheme for the backward equation

    -u_t - F(L u) = f,   u(T) = g

and extraction of the drift ``b = F'(L u)`` that feeds the forward equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CflError, NumericalError, ValidationError
from .grid_levy import DiscreteOperator, Grid, apply_operator, holder_norm, holder_seminorm
from .hamiltonian import ConjugatePair

THETA = 0.9
RANGE_MODES = ("certified", "observed")
MAX_SUBSTEPS = 256


def _time_field(f, grid: Grid, name: str) -> np.ndarray:
    shape = (grid.n_t + 1,) + grid.shape
    if f is None:
        return np.zeros(shape)
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape == grid.shape:
        arr = np.broadcast_to(arr, shape).copy()
    if arr.shape != shape:
        raise ValidationError(f"hjb: {name} has shape {arr.shape}, expected {shape} or {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"hjb: {name} has non-finite entries")
    return arr


def certified_M(f: np.ndarray, g: np.ndarray, alpha: float) -> float:
    """``sup_t ||f(t)||_alpha + ||g||_alpha`` with ``||.||_alpha = sup|.| + [.]_alpha``."""
    f = np.asarray(f, dtype=np.float64)
    fm = max((holder_norm(f[k], alpha) for k in range(f.shape[0])), default=0.0)
    return fm + holder_norm(np.asarray(g, dtype=np.float64), alpha)


def lu_bound_constant(op: DiscreteOperator, alpha: float) -> float:
    """``4 (K/(alpha - order) + nu(B_1^c))``, the growth rate of ``||L u(t)||``."""
    if op.spec is None:
        raise ValidationError("hjb: operator has no measure spec to derive constants from")
    if not alpha > op.order:
        raise ValidationError(f"hjb: alpha must exceed the order {op.order}, got {alpha!r}")
    return 4.0 * (op.spec.small_jump_constant() / (alpha - op.order) + op.spec.tail_mass())


@dataclass
class HjbProblem:
    """Data of one backward solve; ``f`` is sampled on the time grid (or
    constant in time), ``g`` is the terminal slice."""

    op: DiscreteOperator
    pair: ConjugatePair
    g: np.ndarray
    f: np.ndarray | None = None
    alpha: float = 1.0
    R: float | None = None
    theta: float = THETA
    max_substeps: int = MAX_SUBSTEPS
    range_mode: str = "certified"

    def __post_init__(self):
        grid = self.op.grid
        self.f = _time_field(self.f, grid, "source f")
        self.g = np.asarray(self.g, dtype=np.float64)
        if self.g.shape != grid.shape:
            raise ValidationError(f"hjb: terminal g has shape {self.g.shape}, expected {grid.shape}")
        if not np.all(np.isfinite(self.g)):
            raise ValidationError("hjb: terminal g has non-finite entries")
        if not self.pair.differentiable:
            raise ValidationError(f"hjb: pair ({self.pair.tag}) fails (A1); use its smooth approximation (c)")
        if not (0 < self.theta <= 1):
            raise ValidationError("hjb: CFL fraction theta must lie in (0, 1]")
        if self.range_mode not in RANGE_MODES:
            raise ValidationError(f"hjb: range_mode must be one of {RANGE_MODES}, got {self.range_mode!r}")

    @property
    def grid(self) -> Grid:
        return self.op.grid

    def data_bound(self) -> float:
        return certified_M(self.f, self.g, self.alpha)

    def working_range(self) -> float:
        """``R = 4 (K/(alpha-order) + nu(B_1^c)) M (T + 1)`` unless overridden.

        In ``observed`` mode the range starts at ``2 ||L_h g||`` and only
        grows when the iterates leave it.
        """
        if self.R is not None:
            return float(self.R)
        if self.range_mode == "observed":
            return 2.0 * float(np.max(np.abs(apply_operator(self.op, self.g)))) + 1e-12
        if self.op.spec is None or not self.alpha > self.op.order:
            return float(np.max(np.abs(apply_operator(self.op, self.g)))) * 4.0 + 1.0
        return lu_bound_constant(self.op, self.alpha) * self.data_bound() * (self.grid.T + 1.0)


@dataclass
class HjbSolution:
    u: np.ndarray
    substeps: np.ndarray
    R: float
    sup_dF: float
    lu_max: float
    enlargements: int = 0
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "substeps_total": int(self.substeps.sum()), "substeps_max": int(self.substeps.max(initial=0)),
            "R": self.R, "sup_dF": self.sup_dF, "lu_max": self.lu_max, "enlargements": self.enlargements,
            "u_sup": float(np.max(np.abs(self.u))),
        }


def _required_substeps(dt: float, sup_dF: float, W: float, theta: float) -> int:
    need = dt * sup_dF * W / theta
    return max(1, int(math.ceil(need * (1 - 1e-12))))


def solve_hjb(problem: HjbProblem, schedule: np.ndarray | None = None) -> HjbSolution:
    """March ``u^k = u^{k+1} + dt (F(L_h u^{k+1}) + f^{k+1})`` backward from ``g``.

    Each step is split into equal sub-steps so that ``dt' sup F' W <= theta``
    with ``sup F'`` taken over ``[-R, R]``.  Whenever ``|L_h u|`` leaves the
    range, ``R`` is doubled past it and the step is redone.  ``schedule``
    gives minimum sub-step counts per step (used to put several solves on
    one common schedule).
    """
    op, pair, grid = problem.op, problem.pair, problem.grid
    nt, dt, W = grid.n_t, grid.dt, op.total
    R = max(problem.working_range(), 0.0)
    sup_dF = pair.sup_dF(-R, R)
    u = np.empty((nt + 1,) + grid.shape)
    u[nt] = problem.g
    counts = np.zeros(nt, dtype=np.int64)
    enlargements = 0
    lu_max = 0.0
    for k in range(nt - 1, -1, -1):
        src = problem.f[k + 1]
        while True:
            cur = u[k + 1]
            m = _required_substeps(dt, sup_dF, W, problem.theta)
            if schedule is not None:
                m = max(m, int(schedule[k]))
            if m > problem.max_substeps:
                raise CflError(f"hjb: step {k} needs {m} sub-steps (> {problem.max_substeps}); "
                               f"dt * sup F' * W = {dt * sup_dF * W:.6g}")
            h = dt / m
            step_max = 0.0
            for _ in range(m):
                lu = apply_operator(op, cur)
                lmax = float(np.max(np.abs(lu)))
                if lmax > R:
                    break
                step_max = max(step_max, lmax)
                cur = cur + h * (pair.F(lu) + src)
            else:
                break
            R = 2.0 * lmax
            sup_dF = pair.sup_dF(-R, R)
            enlargements += 1
        if not np.all(np.isfinite(cur)):
            raise NumericalError(f"hjb: non-finite values at time step {k}")
        lu_max = max(lu_max, step_max)
        u[k] = cur
        counts[k] = m
    return HjbSolution(u=u, substeps=counts, R=R, sup_dF=sup_dF, lu_max=lu_max, enlargements=enlargements)


def solve_hjb_many(problems: list[HjbProblem], rounds: int = 8) -> list[HjbSolution]:
    """Solve several problems on one shared sub-step schedule, so that
    comparison and stability statements hold exactly between them.

    The schedule is the per-step maximum of the individual requirements,
    iterated until every solve accepts it unchanged.
    """
    sols = [solve_hjb(p) for p in problems]
    for _ in range(rounds):
        common = np.max(np.stack([s.substeps for s in sols]), axis=0)
        if all(np.array_equal(s.substeps, common) for s in sols):
            return sols
        sols = [s if np.array_equal(s.substeps, common) else solve_hjb(p, schedule=common)
                for s, p in zip(sols, problems)]
    raise NumericalError("hjb: no common sub-step schedule found")


def hjb_residual(problem: HjbProblem, u: np.ndarray) -> float:
    """Max residual of the single-step discrete equation (zero for an
    un-sub-stepped solve; sub-stepped solves carry an O(dt^2) per-step gap)."""
    grid = problem.grid
    dt = grid.dt
    lu = apply_operator(problem.op, u[1:])
    res = (u[:-1] - u[1:]) / dt - problem.pair.F(lu) - problem.f[1:]
    term = np.max(np.abs(u[-1] - problem.g))
    return float(max(np.max(np.abs(res)), term))


def extract_drift(u: np.ndarray, op: DiscreteOperator, pair: ConjugatePair) -> np.ndarray:
    """``b(t) = F'(L_h u(t))`` at every time level."""
    return np.asarray(pair.dF(apply_operator(op, u)), dtype=np.float64)


# ---------------------------------------------------------------------------
# reports

@dataclass
class StabilityReport:
    gap: np.ndarray
    bound: np.ndarray
    tolerance: float

    @property
    def max_excess(self) -> float:
        return float(np.max(self.gap - self.bound))

    @property
    def ok(self) -> bool:
        return self.max_excess <= self.tolerance

    def as_dict(self) -> dict:
        return {"max_gap": float(self.gap.max()), "max_excess": self.max_excess,
                "tolerance": self.tolerance, "ok": self.ok}


def stability_gap(u1: np.ndarray, u2: np.ndarray, p1: HjbProblem, p2: HjbProblem) -> StabilityReport:
    """Per-time ``||u1(t) - u2(t)||`` against ``(T - t)||f1 - f2|| + ||g1 - g2||``."""
    if p1.grid != p2.grid or p1.op is not p2.op and not (
            np.array_equal(p1.op.offsets, p2.op.offsets) and np.array_equal(p1.op.weights, p2.op.weights)):
        raise ValidationError("stability: problems differ in grid or operator")
    if u1.shape != u2.shape:
        raise ValidationError("stability: solutions differ in shape")
    axes = tuple(range(1, u1.ndim))
    gap = np.max(np.abs(u1 - u2), axis=axes)
    df = float(np.max(np.abs(p1.f - p2.f)))
    dg = float(np.max(np.abs(p1.g - p2.g)))
    t = p1.grid.times
    bound = (p1.grid.T - t) * df + dg
    scale = max(1.0, float(np.max(np.abs(u1))), float(np.max(np.abs(u2))))
    return StabilityReport(gap=gap, bound=bound, tolerance=1e-12 * scale * (p1.grid.n_t + 1))


@dataclass
class HolderPropagationReport:
    alpha: float
    M: float
    sup_u: np.ndarray
    semi_u: np.ndarray
    lu_norm: np.ndarray
    u_bound: np.ndarray
    lu_bound: np.ndarray
    tolerance: float

    @property
    def u_violations(self) -> int:
        return int(np.sum(np.maximum(self.sup_u, self.semi_u) > self.u_bound + self.tolerance))

    @property
    def lu_violations(self) -> int:
        return int(np.sum(self.lu_norm > self.lu_bound + self.tolerance))

    @property
    def ok(self) -> bool:
        return self.u_violations == 0 and self.lu_violations == 0

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "M": self.M, "u_violations": self.u_violations,
                "lu_violations": self.lu_violations, "ok": self.ok,
                "max_u_ratio": float(np.max(np.maximum(self.sup_u, self.semi_u) / np.maximum(self.u_bound, 1e-300))),
                "max_lu_ratio": float(np.max(self.lu_norm / np.maximum(self.lu_bound, 1e-300)))}


def holder_propagation_report(u: np.ndarray, problem: HjbProblem, alpha: float | None = None,
                              M: float | None = None) -> HolderPropagationReport:
    """Measure ``max(||u(t)||, [u(t)]_alpha)`` against ``M (T - t + 1)`` and
    ``||L_h u(t)||_{alpha - order}`` against ``4 (K/(alpha-order) + nu(B_1^c)) M (T - t + 1)``."""
    op = problem.op
    alpha = problem.alpha if alpha is None else alpha
    if not alpha > op.order:
        raise ValidationError(f"holder propagation: alpha must exceed the order {op.order}")
    M = certified_M(problem.f, problem.g, alpha) if M is None else M
    grid = problem.grid
    ex = alpha - op.order
    lu = apply_operator(op, u)
    sup_u = np.max(np.abs(u), axis=tuple(range(1, u.ndim)))
    semi_u = np.array([holder_seminorm(x, alpha) for x in u])
    lu_norm = np.array([float(np.max(np.abs(x))) + holder_seminorm(x, ex) for x in lu])
    growth = M * (grid.T - grid.times + 1.0)
    return HolderPropagationReport(
        alpha=alpha, M=M, sup_u=sup_u, semi_u=semi_u, lu_norm=lu_norm, u_bound=growth,
        lu_bound=lu_bound_constant(op, alpha) * growth,
        tolerance=10.0 * grid.h ** (1.0 - op.order) * max(M, 1e-300),
    )
