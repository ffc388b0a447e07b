import csv
import json

import numpy as np
import pytest

from levy_mfg import __version__
from levy_mfg.cli import main
from levy_mfg.config import default_config_path, load, loads, parse_flat
from levy_mfg.errors import ValidationError
from levy_mfg.output import config_hash, fmt

SMALL = """
grid.n = 32
grid.T = 0.25
grid.n_t = 10
levy.kind = stable
levy.sigma = 0.1
hamiltonian.tag = d
hamiltonian.q = 2.0
solver.tol = 1e-8
solver.restarts = 2
data.t0 = 0.125
mc.n_paths = 2000
mc.seed = 3
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(tmp_path, command, text=SMALL, *extra):
    out = tmp_path / "out"
    code = main([command, "--config", str(_write(tmp_path, text)), "--out", str(out), *extra])
    return code, out


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = [line[2:] for line in lines if line.startswith("# ")]
    body = list(csv.reader(line for line in lines if not line.startswith("#")))
    return header, body[0], body[1:]


class TestConfig:
    def test_flat_parsing(self):
        flat = parse_flat("# c\ngrid.n = 64  # trailing\nlevy.atoms = [[0.5, 1.0]]\nlevy.kind = atomic\n")
        assert flat == {"grid.n": 64, "levy.atoms": [[0.5, 1.0]], "levy.kind": "atomic"}

    def test_json_matches_flat(self):
        a = loads(SMALL)
        b = loads(json.dumps({"grid": {"n": 32, "T": 0.25, "n_t": 10}, "levy.kind": "stable", "levy": {"sigma": 0.1},
                              "hamiltonian": {"tag": "d", "q": 2.0}, "solver": {"tol": 1e-8, "restarts": 2},
                              "data": {"t0": 0.125}, "mc": {"n_paths": 2000, "seed": 3}}))
        assert a == b
        assert config_hash(a.hashable()) == config_hash(b.hashable())

    def test_default_loads(self):
        cfg = load(default_config_path())
        assert cfg.levy.sigma == 0.1 and cfg.hamiltonian.q == 2.8

    @pytest.mark.parametrize("text,key", [
        ("grid.n = 4\ngrid.n = 8", "given twice"),
        ("grid.size = 4", "unknown key"),
        ("nogrid = 4", "unknown key"),
        ("grid.n 4", "not 'key = value'"),
        ("grid.n = 4.5", "integer"),
        ("levy.sigma = 0.5", "levy.sigma"),
        ("levy.symmetric = true\nlevy.c_plus = 1.0\nlevy.c_minus = 2.0", "c_plus"),
        ("mc.mode = amplitude", "amplitude"),
        ("solver.tau = 0", "solver.tau"),
        ("levy.kind = atomic", "levy.atoms"),
        ("{\"grid\": 3", "invalid JSON"),
    ])
    def test_rejections_name_the_key(self, text, key):
        with pytest.raises(ValidationError, match=key):
            loads(text)

    def test_hash_ignores_output_block(self):
        a = loads(SMALL)
        b = loads(SMALL + "output.directory = elsewhere\n")
        assert config_hash(a.hashable()) == config_hash(b.hashable())
        assert config_hash(a.hashable()) != config_hash(loads(SMALL.replace("grid.n = 32", "grid.n = 64")).hashable())


def test_float_round_trip(rng):
    for x in np.concatenate([rng.standard_normal(200), [np.pi, 1e-300, -0.1, 2.0**-1074]]):
        assert float(fmt(x)) == x


class TestCommands:
    def test_solve_hjb_outputs(self, tmp_path):
        code, out = _run(tmp_path, "solve-hjb")
        assert code == 0
        header, cols, rows = _read_csv(out / "u.csv")
        assert cols == ["t", "x", "value"]
        assert len(rows) == 11 * 32
        assert f"version: {__version__}" in header and "seed: 3" in header
        summary = json.loads((out / "summary.json").read_text())
        assert f"config_hash: {summary['config_hash']}" in header
        assert summary["exit_code"] == 0 and "timings" in summary
        _, cols, _ = _read_csv(out / "operator.csv")
        assert cols == ["offset", "z", "weight"]

    def test_values_round_trip(self, tmp_path):
        from levy_mfg.grid_levy import assemble_operator
        from levy_mfg.hjb import HjbProblem, solve_hjb

        code, out = _run(tmp_path, "solve-hjb")
        cfg = loads(SMALL)
        op = assemble_operator(cfg.make_spec(), cfg.make_grid())
        g = np.cos(2 * np.pi * op.grid.x)
        u = solve_hjb(HjbProblem(op, cfg.make_pair(), g, np.zeros((11, 32)))).u
        _, _, rows = _read_csv(out / "u.csv")
        assert np.array_equal(np.array([float(r[2]) for r in rows]).reshape(11, 32), u)

    def test_solve_fp_mass_column(self, tmp_path):
        code, out = _run(tmp_path, "solve-fp")
        assert code == 0
        _, cols, rows = _read_csv(out / "m.csv")
        assert cols == ["t", "x", "mass"]
        m = np.array([float(r[2]) for r in rows]).reshape(11, 32)
        assert np.all(np.abs(m.sum(axis=1) - 1) <= 1e-12)

    def test_solve_dual(self, tmp_path):
        code, out = _run(tmp_path, "solve-dual")
        assert code == 0
        res = json.loads((out / "summary.json").read_text())["results"]
        assert res["t0"] == 0.125

    def test_solve_mfg(self, tmp_path):
        code, out = _run(tmp_path, "solve-mfg")
        assert code == 0
        res = json.loads((out / "summary.json").read_text())["results"]
        assert res["mfg"]["converged"] and res["uniqueness"]["status"] == "pass"

    def test_simulate_sde_error_columns(self, tmp_path):
        code, out = _run(tmp_path, "simulate-sde", SMALL + "mc.gain = true\nmc.gain_paths = 50\n")
        assert code == 0
        _, cols, _ = _read_csv(out / "histogram.csv")
        assert cols == ["t", "x", "mass", "stderr"]
        _, cols, _ = _read_csv(out / "gain.csv")
        assert cols == ["x", "value", "stderr", "u0"]

    def test_diagnose_degenerate_example(self, tmp_path):
        code, out = _run(tmp_path, "diagnose", SMALL.replace("hamiltonian.q = 2.0", "hamiltonian.q = 2.8"))
        assert code == 0
        res = json.loads((out / "summary.json").read_text())["results"]
        assert res["order"] == pytest.approx(0.2)
        assert res["thresholds"]["mfg_unique"] is True
        assert res["critical_q"] == pytest.approx(2.8947368421052633)

    def test_stable_output_is_byte_identical(self, tmp_path):
        blobs = []
        for i in range(2):
            out = tmp_path / f"o{i}"
            assert main(["simulate-sde", "--config", str(_write(tmp_path, SMALL)), "--out", str(out),
                         "--stable-output"]) == 0
            blobs.append(((out / "summary.json").read_bytes(), (out / "histogram.csv").read_bytes()))
        assert blobs[0] == blobs[1]
        assert "timings" not in json.loads(blobs[0][0])

    def test_thread_cap_does_not_change_output(self, tmp_path, monkeypatch):
        text = SMALL.replace("mc.n_paths = 2000", "mc.n_paths = 20000")
        blobs = []
        for threads in ("1", "3"):
            monkeypatch.setenv("LEVY_MFG_THREADS", threads)
            out = tmp_path / f"t{threads}"
            assert main(["simulate-sde", "--config", str(_write(tmp_path, text)), "--out", str(out),
                         "--stable-output"]) == 0
            blobs.append((out / "histogram.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_seed_flag(self, tmp_path):
        code, out = _run(tmp_path, "solve-fp", SMALL, "--seed", "11")
        header, _, _ = _read_csv(out / "b.csv")
        assert "seed: 11" in header


class TestExitCodes:
    def test_validation(self, tmp_path, capsys):
        code, _ = _run(tmp_path, "solve-hjb", SMALL + "levy.sigma = 0.7\n")
        assert code == 2
        assert "levy.sigma" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["diagnose", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2

    def test_negative_seed(self, tmp_path):
        assert _run(tmp_path, "diagnose", SMALL, "--seed", "-1")[0] == 2

    def test_two_dimensional_solver(self, tmp_path):
        assert _run(tmp_path, "solve-hjb", SMALL.replace("grid.n = 32", "grid.n = 16") + "grid.d = 2\n")[0] == 2

    def test_numerical_failure(self, tmp_path):
        # the exponential pair has no finite certified range bound
        assert _run(tmp_path, "solve-hjb", SMALL.replace("hamiltonian.tag = d", "hamiltonian.tag = e"))[0] == 3

    def test_non_convergence(self, tmp_path):
        text = SMALL.replace("solver.tol = 1e-8", "solver.tol = 1e-14") + "solver.max_iters = 2\n"
        code, out = _run(tmp_path, "solve-mfg", text)
        assert code == 4
        assert json.loads((out / "summary.json").read_text())["status"] == "not converged"
