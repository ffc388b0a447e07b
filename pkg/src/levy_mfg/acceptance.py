"""Acceptance checks shared by ``verify-all`` and the test-suite.

Each ``criterion_N`` returns a :class:`CriterionResult` whose ``metrics``
are deterministic for a fixed seed; wall-clock time is kept separately so
that summaries can be compared byte for byte.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.linalg import expm

from . import fp, hjb, mfg, regularity, sde_mc
from .grid_levy import Grid, LevyMeasureSpec, assemble_operator, check_operator_bounds, holder_exponent
from .hamiltonian import make_table1_pair

TITLES = {
    1: "threshold arithmetic",
    2: "bootstrap recursion",
    3: "operator correctness",
    4: "operator bounds",
    5: "backward equation contract",
    6: "forward equation contract",
    7: "duality identity",
    8: "dual regularity",
    9: "degenerate example",
    10: "Monte Carlo cross-validation",
    11: "determinism",
}

BUDGETS = {1: 1.0, 2: 1.0, 3: 10.0, 4: 30.0, 5: 60.0, 6: 60.0, 7: 60.0, 8: 120.0, 9: 300.0, 10: 180.0,
           11: 600.0}


@dataclass
class CriterionResult:
    number: int
    passed: bool
    metrics: dict
    seconds: float = 0.0

    @property
    def title(self) -> str:
        return TITLES[self.number]

    @property
    def within_budget(self) -> bool:
        return self.seconds < BUDGETS[self.number]

    def line(self) -> str:
        return f"criterion {self.number:2d} {self.title:<30s} {'PASS' if self.passed else 'FAIL'}"

    def as_dict(self, stable: bool = False) -> dict:
        d = {"number": self.number, "title": self.title, "passed": self.passed, "metrics": self.metrics}
        if not stable:
            d["seconds"] = self.seconds
            d["budget_seconds"] = BUDGETS[self.number]
        return d


def _rng(seed: int, number: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1000 + number]))


def _lipschitz_field(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Random periodic piecewise-linear field through a handful of nodes."""
    k = int(rng.integers(3, 12))
    nodes = np.sort(rng.uniform(0, 1, k))
    vals = rng.uniform(-1, 1, k)
    xp = np.concatenate([nodes - 1, nodes, nodes + 1])
    return np.interp(grid.x, xp, np.tile(vals, 3))


# ---------------------------------------------------------------------------


def criterion_1(seed: int = 0) -> CriterionResult:
    flips = {
        "nonsymmetric": ((2 - math.sqrt(2)) / 2, regularity.flip_point(1.0, 1.0, symmetric=False)),
        "symmetric": ((7 - math.sqrt(33)) / 4, regularity.flip_point(1.0, 1.0, symmetric=True)),
    }
    caps = {
        "nonsymmetric": ((3 - math.sqrt(5)) / 2, regularity.fp_cap(symmetric=False)),
        "symmetric": ((5 - math.sqrt(17)) / 2, regularity.fp_cap(symmetric=True)),
    }
    metrics: dict = {}
    ok = True
    for name, (target, found) in flips.items():
        sym = name == "symmetric"
        below = regularity.uniqueness_thresholds(found - 1e-9, 1.0, 1.0, symmetric=sym).mfg_unique
        above = regularity.uniqueness_thresholds(found + 1e-9, 1.0, 1.0, symmetric=sym).mfg_unique
        err = abs(found - target)
        ok &= err < 1e-12 and below and not above
        metrics[f"flip_{name}"] = {"target": target, "found": found, "error": err,
                                   "unique_below": below, "unique_above": above}
    for name, (target, found) in caps.items():
        sym = name == "symmetric"
        below = regularity.uniqueness_thresholds(found - 1e-9, 1.0, 1.0, symmetric=sym).fp_interval_nonempty
        above = regularity.uniqueness_thresholds(found + 1e-9, 1.0, 1.0, symmetric=sym).fp_interval_nonempty
        err = abs(found - target)
        ok &= err < 1e-12 and below and not above
        metrics[f"interval_{name}"] = {"target": target, "found": found, "error": err,
                                       "nonempty_below": below, "nonempty_above": above}
    qc = regularity.critical_q(Fraction(1, 2))
    ok &= qc == 1
    metrics["q_c_half"] = str(qc)
    diag = regularity.uniqueness_thresholds(0.2, 1.0, 1.0, symmetric=False).as_dict()
    ok &= diag["mfg_unique"] is True
    metrics["diagnose_example"] = {"order": 0.2, "mfg_unique": diag["mfg_unique"]}
    return CriterionResult(1, bool(ok), metrics)


def criterion_2(seed: int = 0) -> CriterionResult:
    orders = np.linspace(0.02, 0.48, 20)
    worst_err, worst_ratio, worst_tail, bad = 0.0, 0.0, 0.0, []
    tested = 0
    for order in orders:
        # valid regime: order < 1/2 and beta > order/(1 - order)
        lo = order / (1 - order)
        for beta in np.linspace(lo + 0.02 * (1 - lo), 1.0, 20):
            st = regularity.bootstrap_recursion(float(order), float(beta), n_max=500)
            tested += 1
            target = (2 - order) / (1 - order) - beta
            err = abs(float(st.omegas[-1]) - target)
            ratio, tail = st.cauchy_certificate(50)
            worst_err = max(worst_err, err)
            worst_ratio = max(worst_ratio, ratio)
            worst_tail = max(worst_tail, tail)
            if not (err < 1e-10 and st.strictly_decreasing and st.in_regime and ratio < 1):
                bad.append([float(order), float(beta)])
    return CriterionResult(2, not bad, {"grid_points": tested, "max_limit_error": worst_err,
                                        "max_increment_ratio": worst_ratio,
                                        "max_relative_tail_bound": worst_tail, "failures": bad[:10]})


def criterion_3(seed: int = 0) -> CriterionResult:
    metrics: dict = {}
    ok = True
    modes = np.array([1, 2, 4, 8])
    for order in (0.2, 0.5):
        spec = LevyMeasureSpec.stable(order)
        errs = []
        for n in (128, 256, 512):
            op = assemble_operator(spec, Grid(n))
            exact = spec.symbol(2 * np.pi * modes).real
            errs.append(float(np.max(np.abs(op.eigenvalue(modes).real - exact) / np.abs(exact))))
        rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        slope = -np.polyfit(np.log([128, 256, 512]), np.log(errs), 1)[0]
        ok &= slope >= 0.7 and min(rates) > 0
        metrics[f"order_{order}"] = {"errors": errs, "pairwise_rates": rates, "empirical_order": float(slope)}
    # atomic measure on grid points: the discrete action is the exact one
    grid = Grid(256)
    atoms = [(-0.25, 0.5), (0.125, 0.75), (0.5, 1.0), (-0.03125, 2.0)]
    op = assemble_operator(LevyMeasureSpec.atomic(atoms), grid)
    rng = _rng(seed, 3)
    worst = 0.0
    for _ in range(5):
        phi = rng.standard_normal(grid.n)
        exact = sum(m * (np.roll(phi, -int(round(z * grid.n))) - phi) for z, m in atoms)
        worst = max(worst, float(np.max(np.abs(op.apply(phi) - exact)) / max(1.0, np.max(np.abs(exact)))))
    ok &= worst <= 1e-14
    metrics["atomic_max_relative_error"] = worst
    return CriterionResult(3, bool(ok), metrics)


def criterion_4(seed: int = 0, fields: int = 50) -> CriterionResult:
    rng = _rng(seed, 4)
    grid = Grid(256)
    ops = {}
    for order in (0.2, 0.5):
        spec = LevyMeasureSpec.stable(order)
        ops[order] = (assemble_operator(spec, grid), spec.small_jump_constant("quadrature"),
                      spec.tail_mass("quadrature"))
    violations = 0
    worst_sup, worst_holder = 0.0, 0.0
    for i in range(fields):
        order = (0.2, 0.5)[i % 2]
        op, K, tail = ops[order]
        phi = _lipschitz_field(grid, rng)
        p = 1.0 if i % 4 < 2 else float(rng.uniform(order + 0.1, 1.0))
        rep = check_operator_bounds(op, phi, p, K=K, tail=tail)
        violations += int(not rep.ok)
        worst_sup = max(worst_sup, rep.sup_norm / (rep.sup_bound + rep.tolerance))
        worst_holder = max(worst_holder, rep.holder / (rep.holder_bound + rep.tolerance))
    return CriterionResult(4, violations == 0, {
        "fields": fields, "violations": violations, "max_sup_ratio": worst_sup,
        "max_holder_ratio": worst_holder,
        "oracle_K": {str(k): v[1] for k, v in ops.items()}, "oracle_tail": {str(k): v[2] for k, v in ops.items()}})


def criterion_5(seed: int = 0, pairs: int = 50, n: int = 256) -> CriterionResult:
    rng = _rng(seed, 5)
    grid = Grid(n, T=0.5, n_t=50)
    op = assemble_operator(LevyMeasureSpec.stable(0.2), grid)
    hams = [make_table1_pair("c", kappa=1.0, eps=0.1), make_table1_pair("d", q=2.0),
            make_table1_pair("e"), make_table1_pair("d", q=2.8)]
    comparison_violations = 0
    stability_violations = 0
    worst_excess = -np.inf
    for i in range(pairs):
        pair = hams[i % len(hams)]
        g1 = _lipschitz_field(grid, rng)
        f1 = 0.5 * np.cos(2 * np.pi * (grid.x - rng.uniform()))
        g2 = g1 + rng.uniform(0, 0.5) * (1 + _lipschitz_field(grid, rng)) / 2
        f2 = f1 + rng.uniform(0, 0.5) * (1 + np.sin(2 * np.pi * (grid.x - rng.uniform()))) / 2
        p1 = hjb.HjbProblem(op, pair, g1, f1, range_mode="observed")
        p2 = hjb.HjbProblem(op, pair, g2, f2, range_mode="observed")
        s1, s2 = hjb.solve_hjb_many([p1, p2])
        scale = max(1.0, float(np.max(np.abs(s2.u))))
        comparison_violations += int(np.any(s1.u > s2.u + 1e-12 * scale))
        rep = hjb.stability_gap(s1.u, s2.u, p1, p2)
        stability_violations += int(not rep.ok)
        worst_excess = max(worst_excess, rep.max_excess)
    # constant shift of the terminal data moves the solution by the same constant
    shift_err = 0.0
    for pair in hams:
        g = np.cos(2 * np.pi * grid.x)
        c = 0.375
        p1, p2 = (hjb.HjbProblem(op, pair, g, range_mode="observed"),
                  hjb.HjbProblem(op, pair, g + c, range_mode="observed"))
        s1, s2 = hjb.solve_hjb_many([p1, p2])
        shift_err = max(shift_err, float(np.max(np.abs(s2.u - s1.u - c))))
    # Hölder propagation on cosine data
    holder_bad = 0
    ratios = []
    for k in (1, 2, 4):
        for pair in hams:
            g = np.cos(2 * np.pi * k * grid.x) / (2 * np.pi * k)
            f = 0.5 * np.sin(2 * np.pi * k * grid.x) / (2 * np.pi * k)
            prob = hjb.HjbProblem(op, pair, g, f, alpha=1.0, range_mode="observed")
            rep = hjb.holder_propagation_report(hjb.solve_hjb(prob).u, prob)
            holder_bad += int(not rep.ok)
            d = rep.as_dict()
            ratios.append(max(d["max_u_ratio"], d["max_lu_ratio"]))
    ok = comparison_violations == 0 and stability_violations == 0 and shift_err <= 1e-12 and holder_bad == 0
    return CriterionResult(5, ok, {
        "pairs": pairs, "comparison_violations": comparison_violations,
        "stability_violations": stability_violations, "max_stability_excess": float(worst_excess),
        "shift_max_error": shift_err, "holder_cases": 12, "holder_violations": holder_bad,
        "max_holder_ratio": float(max(ratios))})


def criterion_6(seed: int = 0) -> CriterionResult:
    rng = _rng(seed, 6)
    metrics: dict = {}
    # structural: mass and sign under CFL on a rough time-varying drift
    grid = Grid(256, T=1.0, n_t=100)
    op = assemble_operator(LevyMeasureSpec.stable(0.4), grid)
    b = fp.generate_drift(grid, 0.6, B=2.0, seed=int(rng.integers(2**31)))
    m0 = rng.dirichlet(np.ones(grid.n))
    sol = fp.solve_fp(b, m0, op)
    defect = float(np.max(sol.mass_defect))
    negatives = int(np.sum(sol.m < 0))
    metrics["max_mass_defect_per_step"] = defect
    metrics["negative_entries"] = negatives
    # linear case against the matrix exponential on a dense n = 64 grid
    T = 0.5
    errs = []
    base = Grid(64, T=T, n_t=25)
    op64 = assemble_operator(LevyMeasureSpec.stable(0.5), base)
    bx = 0.5 + 0.5 * rng.random(64)
    m0 = rng.dirichlet(np.ones(64))
    exact = expm(T * (op64.matrix().T * bx[None, :])) @ m0
    for nt in (25, 50, 100, 200):
        g = base.with_steps(nt)
        opn = assemble_operator(LevyMeasureSpec.stable(0.5), g)
        s = fp.solve_fp(np.broadcast_to(bx, (nt + 1, 64)), m0, opn, substeps=np.ones(nt, dtype=np.int64))
        errs.append(float(np.sum(np.abs(s.m[-1] - exact))))
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    metrics["linear_errors"] = errs
    metrics["halving_ratios"] = ratios
    ok = defect <= 1e-12 and negatives == 0 and all(1.8 <= r <= 2.2 for r in ratios)
    return CriterionResult(6, ok, metrics)


def criterion_7(seed: int = 0, tuples: int = 10) -> CriterionResult:
    rng = _rng(seed, 7)
    exact_worst = 0.0
    ratios = []
    for _ in range(tuples):
        order = float(rng.uniform(0.1, 0.8))
        s = int(rng.integers(2**31))
        m0 = rng.dirichlet(np.ones(64))
        phi = np.cos(2 * np.pi * (np.arange(64) / 64 - rng.uniform())) + 0.3 * rng.standard_normal(64)
        frac = float(rng.choice([0.25, 0.5, 0.75, 1.0]))
        res = []
        for nt in (40, 80, 160):
            g = Grid(64, T=1.0, n_t=nt)
            op = assemble_operator(LevyMeasureSpec.stable(order), g)
            b = fp.generate_drift(g, 0.8, B=1.0, seed=s, time_varying=True)
            res.append(fp.holmgren_residual(b, m0, phi, op, frac, mode="independent"))
            exact_worst = max(exact_worst, fp.holmgren_residual(b, m0, phi, op, frac, mode="exact-adjoint"))
        ratios.extend(res[i] / res[i + 1] for i in range(2))
    ok = exact_worst <= 1e-10 and all(1.6 <= r <= 2.4 for r in ratios)
    return CriterionResult(7, ok, {"tuples": tuples, "exact_adjoint_max_residual": exact_worst,
                                   "independent_halving_ratios": [float(r) for r in ratios]})


def criterion_8(seed: int = 0, n: int = 1024) -> CriterionResult:
    order = 0.1
    grid = Grid(n, T=1.0, n_t=100)
    op = assemble_operator(LevyMeasureSpec.stable(order), grid)
    s = int(_rng(seed, 8).integers(2**31))
    b, nominal, beta_hat = fp.calibrated_drift(grid, 0.9, B=1.0, seed=s)
    w = fp.solve_dual(b, np.cos(2 * np.pi * grid.x), op)
    measured, r2 = holder_exponent(w[-1], grid.h)
    target = beta_hat - order / (1 - order) - 0.1
    regime = beta_hat > order + order / (1 - order)
    return CriterionResult(8, bool(regime and measured >= target), {
        "beta_hat": beta_hat, "nominal_exponent": nominal, "w_exponent": measured, "w_fit_r2": r2,
        "target": target, "in_regime": bool(regime)})


def degenerate_example(n: int = 128):
    grid = Grid(n, T=0.25, n_t=50)
    op = assemble_operator(LevyMeasureSpec.stable(0.2), grid)
    pair = make_table1_pair("d", q=2.8)
    coupling = mfg.make_coupling(grid, width=0.05, A=1.0, A_g=1.0)
    d = np.minimum(np.abs(grid.x - 0.5), 1 - np.abs(grid.x - 0.5))
    m0 = np.exp(-0.5 * (d / 0.1) ** 2)
    return op, pair, coupling, m0 / m0.sum()


def criterion_9(seed: int = 0, tol: float = 1e-7) -> CriterionResult:
    op, pair, coupling, m0 = degenerate_example()
    exp = mfg.uniqueness_experiment(op, pair, coupling, m0, k=4, tau=0.5, tol=tol, max_iters=300, seed=seed)
    runs = exp.runs
    inc = max(r.history[-1] for r in runs)
    hjb_res = max(r.residuals["hjb"] for r in runs)
    fp_res = max(r.residuals["fp"] for r in runs)
    ok = (all(r.converged for r in runs) and inc < 1e-6 and hjb_res < 1e-6 and fp_res < 1e-6
          and max(exp.max_u_distance, exp.max_m_distance) < 1e-5 and exp.verdict.get("mfg_unique") is True)
    return CriterionResult(9, bool(ok), {
        "q_c": regularity.critical_q(0.1), "q": 2.8, "iterations": [r.iterations for r in runs],
        "max_final_increment": inc, "max_hjb_residual": hjb_res, "max_fp_residual": fp_res,
        "max_fixed_point_residual": max(r.residuals["fixed_point"] for r in runs),
        "max_u_distance": exp.max_u_distance, "max_m_distance": exp.max_m_distance,
        "mfg_unique": exp.verdict.get("mfg_unique")})


def mc_operator(n: int = 64, T: float = 0.5, n_t: int = 200):
    grid = Grid(n, T=T, n_t=n_t)
    return assemble_operator(LevyMeasureSpec.atomic([(-0.25, 0.5), (0.25, 0.5), (0.5, 1.0)]), grid)


def criterion_10(seed: int = 0, n_paths: int = 100_000, gain_paths: int = 4000) -> CriterionResult:
    op = mc_operator()
    grid = op.grid
    metrics: dict = {}
    m0 = np.zeros(grid.n)
    m0[grid.n // 8] = 1.0
    ones = np.ones((grid.n_t + 1, grid.n))
    law = fp.solve_fp(ones, m0, op).m[-1]
    exact = expm(grid.T * op.matrix().T) @ m0
    scheme_tol = fp.tv_distance(law, exact)
    sim = sde_mc.simulate_sde(op, ones, m0, n_paths, seed=seed)
    tv = fp.tv_distance(sim.hist[-1], law)
    bound = 3 / math.sqrt(n_paths) + scheme_tol
    ok = tv <= bound
    metrics["law"] = {"tv": tv, "bound": bound, "scheme_tolerance": scheme_tol, "n_paths": n_paths}
    # dynamic-programming upper bound for sampled feedback policies
    pair = make_table1_pair("d", q=2.0)
    g = np.cos(2 * np.pi * grid.x)
    f = np.broadcast_to(0.5 * np.sin(2 * np.pi * grid.x), (grid.n_t + 1, grid.n))
    sol = hjb.solve_hjb(hjb.HjbProblem(op, pair, g, f))
    fine = hjb.solve_hjb(hjb.HjbProblem(assemble_operator(op.spec, grid.with_steps(2 * grid.n_t)), pair, g,
                                        np.broadcast_to(f[0], (2 * grid.n_t + 1, grid.n))))
    tol = 2 * float(np.max(np.abs(fine.u[0] - sol.u[0]))) + 1e-12
    u0 = sol.u[0]
    optimal = hjb.extract_drift(sol.u, op, pair)[1:]
    rng = _rng(seed, 10)
    policies = {
        "optimal": optimal,
        "zero": np.zeros_like(optimal),
        "constant": np.full_like(optimal, float(rng.uniform(0.2, 1.5))),
        "damped_optimal": optimal * float(rng.uniform(0.3, 0.9)),
        "random": rng.uniform(0, 1.5, optimal.shape),
    }
    starts = np.arange(0, grid.n, 4)
    worst = -np.inf
    gains = {}
    for i, (name, pol) in enumerate(policies.items()):
        est = sde_mc.estimate_gain(op, pol, f, g, pair, gain_paths, seed=seed + 1 + i, starts=starts)
        slack = float(np.max(est.mean - u0[starts] - 3 * est.se - tol))
        worst = max(worst, slack)
        gains[name] = {"max_excess": float(np.max(est.mean - u0[starts])), "max_se": float(np.max(est.se)),
                       "slack": slack}
    ok &= worst <= 0
    metrics["gain"] = {"policies": gains, "scheme_tolerance": tol, "paths_per_start": gain_paths,
                       "starts": int(starts.size)}
    return CriterionResult(10, bool(ok), metrics)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_criterion(number: int, seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[number](seed=seed)
    res.seconds = time.perf_counter() - t0
    return res


def criterion_11(run_twice: Callable[[], tuple[bytes, bytes]]) -> CriterionResult:
    """Compare two serialized summaries produced by ``run_twice``."""
    t0 = time.perf_counter()
    a, b = run_twice()
    res = CriterionResult(11, a == b, {"bytes": len(a), "identical": a == b})
    res.seconds = time.perf_counter() - t0
    return res


@dataclass
class SuiteResult:
    results: list[CriterionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def as_dict(self, stable: bool = False) -> dict:
        return {"passed": self.passed, "criteria": [r.as_dict(stable) for r in self.results]}


def run_suite(numbers, seed: int = 0) -> SuiteResult:
    return SuiteResult([run_criterion(k, seed) for k in numbers if k in CRITERIA])
