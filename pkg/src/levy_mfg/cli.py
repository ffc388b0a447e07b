"""Command line entry point ``levy-mfg``.

Exit codes: 0 success, 1 a verification criterion failed, 2 invalid input,
3 numerical failure (stability condition, non-finite values), 4 an
iteration did not converge.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acceptance, config, fp, hjb, mfg, output, regularity, sde_mc
from .errors import ConvergenceError, NumericalError, ValidationError
from .grid_levy import assemble_operator, holder_exponent
from .hamiltonian import check_pair

log = logging.getLogger("levy_mfg")

EXIT_OK, EXIT_FAILED, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 1, 2, 3, 4
COMMANDS = ("solve-hjb", "solve-fp", "solve-dual", "solve-mfg", "diagnose", "simulate-sde", "verify-all")


class Run:
    """Output directory, hashes and headers for one invocation."""

    def __init__(self, cfg: config.ExperimentConfig, command: str, out: Path, stable: bool):
        self.cfg = cfg
        self.command = command
        self.out = out
        self.stable = stable
        self.hash = output.config_hash(cfg.hashable())
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        self.csv = "csv" in cfg.output.formats
        self.json = "json" in cfg.output.formats
        out.mkdir(parents=True, exist_ok=True)

    def header(self, kind: str) -> list[str]:
        return output.header_lines(self.hash, self.cfg.seed, kind, {"command": self.command})

    def field(self, name: str, times, x, values, column: str = "value") -> None:
        if self.csv:
            output.write_field(self.out / name, self.header(name), times, x, values, column)
            self.files.append(name)

    @contextlib.contextmanager
    def timed(self, label: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = time.perf_counter() - t0

    def summary(self, status: str, exit_code: int, results: dict) -> dict:
        s = {"command": self.command, "version": __version__, "config_hash": self.hash, "seed": self.cfg.seed,
             "status": status, "exit_code": exit_code, "config": self.cfg.hashable(), "results": results,
             "files": sorted(self.files)}
        if not self.stable:
            s["timings"] = self.timings
        return s

    def finish(self, status: str, exit_code: int, results: dict) -> int:
        summary = self.summary(status, exit_code, results)
        if self.json:
            output.write_json(self.out / "summary.json", summary)
        return exit_code


# ---------------------------------------------------------------------------
# data construction


def _m0(cfg, grid) -> np.ndarray:
    d = cfg.data
    if d.m0 == "uniform":
        return fp.uniform_measure(grid)
    if d.m0 == "point":
        return fp.point_mass(grid, int(round(d.m0_center * grid.n)) % grid.n)
    dist = np.minimum(np.abs(grid.x - d.m0_center), 1 - np.abs(grid.x - d.m0_center))
    m = np.exp(-0.5 * (dist / d.m0_width) ** 2)
    return m / m.sum()


def _terminal_and_source(cfg, grid):
    d = cfg.data
    wave = 2 * np.pi * d.mode * grid.x
    g = d.g_amp * np.cos(wave) if d.g == "cos" else np.zeros(grid.n)
    f = np.broadcast_to(d.f_amp * np.sin(wave), (grid.n_t + 1, grid.n))
    return g, f


def _drift(cfg, grid) -> np.ndarray:
    d = cfg.data
    if d.drift == "constant":
        return np.full((grid.n_t + 1, grid.n), d.drift_B)
    return fp.generate_drift(grid, d.drift_beta, d.drift_B, seed=cfg.seed, time_varying=d.time_varying)


def _one_dimensional(cfg, command: str) -> None:
    if cfg.grid.d != 1:
        raise ValidationError(f"{command}: grid.d = 2 is supported for operators only (use diagnose)")


def _operator(run: Run):
    cfg = run.cfg
    grid = cfg.make_grid()
    with run.timed("assemble"):
        op = assemble_operator(cfg.make_spec(), grid)
    if run.csv:
        op.to_csv(run.out / "operator.csv", run.header("operator.csv"))
        run.files.append("operator.csv")
    return op


# ---------------------------------------------------------------------------
# commands


def cmd_solve_hjb(run: Run) -> int:
    cfg = run.cfg
    _one_dimensional(cfg, "solve-hjb")
    op = _operator(run)
    grid = op.grid
    pair = cfg.make_pair()
    g, f = _terminal_and_source(cfg, grid)
    prob = hjb.HjbProblem(op, pair, g, f, alpha=cfg.solver.alpha, theta=cfg.solver.theta,
                          range_mode=cfg.solver.range)
    with run.timed("solve"):
        sol = hjb.solve_hjb(prob)
    b = hjb.extract_drift(sol.u, op, pair)
    run.field("u.csv", grid.times, grid.x, sol.u)
    run.field("b.csv", grid.times, grid.x, b)
    results = {"hjb": sol.summary(), "residual": hjb.hjb_residual(prob, sol.u),
               "holder": hjb.holder_propagation_report(sol.u, prob).as_dict()
               if cfg.solver.alpha > op.order else None}
    return run.finish("ok", EXIT_OK, results)


def cmd_solve_fp(run: Run) -> int:
    cfg = run.cfg
    _one_dimensional(cfg, "solve-fp")
    op = _operator(run)
    grid = op.grid
    b = _drift(cfg, grid)
    with run.timed("solve"):
        sol = fp.solve_fp(b, _m0(cfg, grid), op)
    run.field("b.csv", grid.times, grid.x, b)
    run.field("m.csv", grid.times, grid.x, sol.m, "mass")
    results = {"fp": sol.summary(), "drift_exponent": fp.measured_drift_exponent(b, grid)}
    return run.finish("ok", EXIT_OK, results)


def cmd_solve_dual(run: Run) -> int:
    cfg = run.cfg
    _one_dimensional(cfg, "solve-dual")
    op = _operator(run)
    grid = op.grid
    b = _drift(cfg, grid)
    phi = np.cos(2 * np.pi * cfg.data.mode * grid.x)
    K = fp.time_index(grid, cfg.data.t0)
    with run.timed("solve"):
        w = fp.solve_dual(b, phi, op, direction="backward", t0_index=K, mode=cfg.data.dual_mode)
    run.field("w.csv", grid.times[:K + 1], grid.x, w)
    residual = fp.holmgren_residual(b, _m0(cfg, grid), phi, op, cfg.data.t0, mode=cfg.data.dual_mode)
    exponent, r2 = holder_exponent(w[0], grid.h)
    results = {"t0": cfg.data.t0, "mode": cfg.data.dual_mode, "duality_residual": residual,
               "w0_holder_exponent": exponent, "w0_fit_r2": r2,
               "drift_exponent": fp.measured_drift_exponent(b, grid)}
    return run.finish("ok", EXIT_OK, results)


def cmd_solve_mfg(run: Run) -> int:
    cfg = run.cfg
    _one_dimensional(cfg, "solve-mfg")
    op = _operator(run)
    grid = op.grid
    pair = cfg.make_pair()
    c = cfg.coupling
    coupling = mfg.make_coupling(grid, width=c.width, A=c.A, offset=c.offset, A_g=c.A_g, offset_g=c.offset_g)
    m0 = _m0(cfg, grid)
    s = cfg.solver
    with run.timed("solve"):
        sol = mfg.solve_mfg(op, pair, coupling, m0, tau=s.tau, tol=s.tol, max_iters=s.max_iters,
                            alpha=s.alpha, scheme=s.scheme)
    run.field("u.csv", grid.times, grid.x, sol.u)
    run.field("b.csv", grid.times, grid.x, sol.b)
    run.field("m.csv", grid.times, grid.x, sol.m, "mass")
    results = {"mfg": sol.summary(), "history": sol.history}
    if sol.converged and s.restarts > 1:
        with run.timed("restarts"):
            exp = mfg.uniqueness_experiment(op, pair, coupling, m0, k=s.restarts, tau=s.tau, tol=s.tol,
                                            max_iters=s.max_iters, seed=cfg.seed, alpha=s.alpha)
        results["uniqueness"] = exp.as_dict()
    if sol.converged:
        results["structure"] = mfg.check_S_conditions(sol, op, pair, coupling, m0, alpha=s.alpha).as_dict()
        return run.finish("ok", EXIT_OK, results)
    return run.finish("not converged", EXIT_CONVERGENCE, results)


def cmd_diagnose(run: Run) -> int:
    cfg = run.cfg
    spec = cfg.make_spec()
    pair = cfg.make_pair()
    dg = cfg.diagnose
    gamma = pair.gamma if dg.gamma is None else dg.gamma
    order = spec.order
    results: dict = {"order": order, "symmetric": spec.symmetric, "alpha": dg.alpha, "gamma": gamma,
                     "pair": check_pair(pair).as_dict()}
    if order > 0 and 0 < gamma <= 1:
        results["thresholds"] = regularity.uniqueness_thresholds(order, dg.alpha, gamma, symmetric=spec.symmetric,
                                                                 beta=dg.beta).as_dict()
        results["flip_point"] = regularity.flip_point(dg.alpha, gamma, spec.symmetric)
        results["fp_cap"] = regularity.fp_cap(spec.symmetric)
    if 0 < spec.sigma <= 0.5:
        results["critical_q"] = regularity.critical_q(spec.sigma)
    if dg.beta is not None and 0 < order < 1:
        st = regularity.bootstrap_recursion(order, dg.beta)
        results["recursion"] = st.as_dict()
        if st.in_regime:
            results["scaling"] = dataclasses.asdict(regularity.optimal_scaling_exponents(
                order, dg.beta, st.omega_inf, spec.symmetric))
    results["constants"] = {"K": spec.small_jump_constant(), "tail_mass": spec.tail_mass()}
    return run.finish("ok", EXIT_OK, results)


def cmd_simulate_sde(run: Run) -> int:
    cfg = run.cfg
    _one_dimensional(cfg, "simulate-sde")
    op = _operator(run)
    grid = op.grid
    mc = cfg.mc
    b = _drift(cfg, grid)
    method = None if mc.method == "auto" else mc.method
    with run.timed("simulate"):
        res = sde_mc.simulate_sde(op, b, _m0(cfg, grid), mc.n_paths, seed=cfg.seed, method=method, mode=mc.mode)
    if run.csv:
        output.write_field_with_errors(run.out / "histogram.csv", run.header("histogram.csv"), grid.times, grid.x,
                                       res.hist, res.se)
        run.files.append("histogram.csv")
    law = fp.solve_fp(b, _m0(cfg, grid), op).m
    results = {"mc": res.as_dict(), "tv_to_forward_solver": fp.tv_distance(res.hist[-1], law[-1]),
               "tv_noise_level": 3 / np.sqrt(mc.n_paths)}
    if mc.gain:
        pair = cfg.make_pair()
        g, f = _terminal_and_source(cfg, grid)
        sol = hjb.solve_hjb(hjb.HjbProblem(op, pair, g, f, range_mode=cfg.solver.range))
        policy = hjb.extract_drift(sol.u, op, pair)[1:]
        with run.timed("gain"):
            est = sde_mc.estimate_gain(op, policy, f, g, pair, mc.gain_paths, seed=cfg.seed + 1)
        if run.csv:
            rows = ((grid.x[i], est.mean[i], est.se[i], sol.u[0, i]) for i in est.x_index)
            output.write_csv(run.out / "gain.csv", run.header("gain.csv"), ["x", "value", "stderr", "u0"], rows)
            run.files.append("gain.csv")
        results["gain"] = {**est.as_dict(), "max_excess_over_u0": float(np.max(est.mean - sol.u[0]))}
    return run.finish("ok", EXIT_OK, results)


def cmd_verify_all(run: Run) -> int:
    cfg = run.cfg
    numbers = sorted(set(cfg.verify.criteria))
    base = [k for k in numbers if k in acceptance.CRITERIA]
    suite = acceptance.run_suite(base, seed=cfg.seed)
    results = suite.results
    if 11 in numbers:
        def twice():
            first = output.dumps(suite.as_dict(stable=True)).encode()
            again = acceptance.run_suite(base, seed=cfg.seed)
            return first, output.dumps(again.as_dict(stable=True)).encode()

        results.append(acceptance.criterion_11(twice))
    for r in results:
        print(r.line())
        run.timings[f"criterion_{r.number}"] = r.seconds
    passed = all(r.passed for r in results)
    summary = {"passed": passed, "criteria": [r.as_dict(stable=True) for r in results]}
    return run.finish("ok" if passed else "failed", EXIT_OK if passed else EXIT_FAILED, summary)


HANDLERS = {
    "solve-hjb": cmd_solve_hjb, "solve-fp": cmd_solve_fp, "solve-dual": cmd_solve_dual,
    "solve-mfg": cmd_solve_mfg, "diagnose": cmd_diagnose, "simulate-sde": cmd_simulate_sde,
    "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levy-mfg", description="Degenerate nonlocal mean field game toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__name__.removeprefix("cmd_").replace("_", " "))
        p.add_argument("--config", type=Path, default=None,
                       help="config file (key = value lines or JSON); default: the shipped default.cfg")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides mc.seed)")
        p.add_argument("--stable-output", action="store_true", help="omit timings from the JSON summary")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config.load(args.config if args.config is not None else config.default_config_path())
        if args.seed is not None:
            if args.seed < 0:
                raise ValidationError("config: --seed must be >= 0")
            cfg.mc.seed = args.seed
        out = args.out if args.out is not None else Path(cfg.output.directory)
        run = Run(cfg, args.command, out, args.stable_output)
        log.info("running %s, config hash %s", args.command, run.hash)
        return HANDLERS[args.command](run)
    except ValidationError as exc:
        print(f"levy-mfg: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError) as exc:
        print(f"levy-mfg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConvergenceError as exc:
        print(f"levy-mfg: no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
