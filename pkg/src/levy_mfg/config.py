"""Experiment configuration: parsing, defaults and cross-field validation.

The native format is line oriented::

    # comment
    grid.n = 256
    levy.kind = stable
    levy.atoms = [[-0.25, 0.5], [0.5, 1.0]]

Values are read as JSON literals when possible and as bare strings
otherwise.  A JSON document (nested objects or dotted keys) is accepted as
well.  Every constraint is checked before any computation starts, and the
error message names the offending key.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import LevyMfgError, ValidationError

KINDS = ("stable", "tempered", "bounded", "atomic")
TAGS = ("a", "b", "c", "d", "e", "f")
DATA_M0 = ("gaussian", "uniform", "point")
DATA_SHAPES = ("cos", "zero")
FORMATS = ("csv", "json")


@dataclass
class GridBlock:
    d: int = 1
    n: int = 256
    T: float = 1.0
    n_t: int = 100


@dataclass
class LevyBlock:
    kind: str = "stable"
    sigma: float = 0.1
    scale: float | None = None
    c_plus: float | None = None
    c_minus: float | None = None
    symmetric: bool = True
    lam: float = 1.0
    profile: str = "gaussian"
    width: float = 0.1
    mass: float = 1.0
    center: float = 0.0
    atoms: list | None = None


@dataclass
class HamiltonianBlock:
    tag: str = "d"
    kappa: float = 1.0
    eps: float = 0.1
    q: float = 2.8
    base: str = "d"


@dataclass
class CouplingBlock:
    width: float = 0.05
    A: float = 1.0
    offset: float = 0.0
    A_g: float = 1.0
    offset_g: float = 0.0


@dataclass
class SolverBlock:
    tau: float = 0.5
    tol: float = 1e-6
    max_iters: int = 200
    theta: float = 0.9
    scheme: str = "picard"
    alpha: float = 1.0
    restarts: int = 4
    range: str = "certified"


@dataclass
class DataBlock:
    m0: str = "gaussian"
    m0_center: float = 0.5
    m0_width: float = 0.1
    g: str = "cos"
    g_amp: float = 1.0
    f_amp: float = 0.0
    mode: int = 1
    drift: str = "generated"
    drift_beta: float = 0.9
    drift_B: float = 1.0
    time_varying: bool = True
    t0: float = 0.5
    dual_mode: str = "independent"


@dataclass
class McBlock:
    n_paths: int = 100_000
    seed: int = 0
    method: str = "auto"
    mode: str = "time-change"
    gain: bool = False
    gain_paths: int = 2000


@dataclass
class DiagnoseBlock:
    alpha: float = 1.0
    gamma: float | None = None
    beta: float | None = None


@dataclass
class VerifyBlock:
    criteria: list = field(default_factory=lambda: list(range(1, 12)))


@dataclass
class OutputBlock:
    directory: str = "out"
    formats: list = field(default_factory=lambda: list(FORMATS))


BLOCKS = {
    "grid": GridBlock, "levy": LevyBlock, "hamiltonian": HamiltonianBlock, "coupling": CouplingBlock,
    "solver": SolverBlock, "data": DataBlock, "mc": McBlock, "diagnose": DiagnoseBlock,
    "verify": VerifyBlock, "output": OutputBlock,
}


@dataclass
class ExperimentConfig:
    grid: GridBlock = field(default_factory=GridBlock)
    levy: LevyBlock = field(default_factory=LevyBlock)
    hamiltonian: HamiltonianBlock = field(default_factory=HamiltonianBlock)
    coupling: CouplingBlock = field(default_factory=CouplingBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    data: DataBlock = field(default_factory=DataBlock)
    mc: McBlock = field(default_factory=McBlock)
    diagnose: DiagnoseBlock = field(default_factory=DiagnoseBlock)
    verify: VerifyBlock = field(default_factory=VerifyBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    @property
    def seed(self) -> int:
        return self.mc.seed

    def as_dict(self) -> dict:
        return asdict(self)

    def hashable(self) -> dict:
        """Everything that influences results (the output block does not)."""
        d = self.as_dict()
        d.pop("output")
        return d

    # -- object factories -------------------------------------------------

    def make_grid(self, n: int | None = None, n_t: int | None = None):
        from .grid_levy import Grid
        g = self.grid
        return Grid(n=g.n if n is None else n, T=g.T, n_t=g.n_t if n_t is None else n_t, d=g.d)

    def make_spec(self):
        from .grid_levy import LevyMeasureSpec
        lv, d = self.levy, self.grid.d
        order = 2 * lv.sigma
        cm = lv.c_plus if (lv.symmetric and lv.c_minus is None) else lv.c_minus
        if lv.kind == "stable":
            return LevyMeasureSpec.stable(order, lv.scale, c_plus=lv.c_plus, c_minus=cm, d=d)
        if lv.kind == "tempered":
            return LevyMeasureSpec.tempered(order, lv.lam, lv.scale, c_plus=lv.c_plus, c_minus=cm)
        if lv.kind == "bounded":
            return LevyMeasureSpec.bounded(lv.profile, width=lv.width, mass=lv.mass, center=lv.center,
                                           order=order, d=d)
        atoms = [(a[0] if d == 1 else tuple(a[0]), a[1]) for a in lv.atoms]
        return LevyMeasureSpec.atomic(atoms, order=order, d=d)

    def make_pair(self):
        from .hamiltonian import make_table1_pair
        h = self.hamiltonian
        base = make_table1_pair(h.base, kappa=h.kappa, eps=h.eps, q=h.q) if h.tag == "f" else None
        return make_table1_pair(h.tag, kappa=h.kappa, eps=h.eps, q=h.q, base=base)


# ---------------------------------------------------------------------------
# parsing


def _literal(text: str):
    text = text.strip()
    if text.lower() in ("none", "null"):
        return None
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip("\"'")


def parse_flat(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config: line {lineno} is not 'key = value': {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ValidationError(f"config: key {key!r} given twice (line {lineno})")
        out[key] = _literal(value)
    return out


def _flatten(obj: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(block: str, name: str, value, annotation: str):
    key = f"{block}.{name}"
    if value is None:
        if "None" in annotation:
            return None
        raise ValidationError(f"config: {key} may not be null")
    if "list" in annotation:
        if not isinstance(value, list):
            raise ValidationError(f"config: {key} must be a list, got {value!r}")
        return value
    if annotation.startswith("bool"):
        if not isinstance(value, bool):
            raise ValidationError(f"config: {key} must be true or false, got {value!r}")
        return value
    if annotation.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ValidationError(f"config: {key} must be an integer, got {value!r}")
        return int(value)
    if annotation.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"config: {key} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ValidationError(f"config: {key} must be a string, got {value!r}")
    return value


def from_mapping(flat: dict) -> ExperimentConfig:
    values: dict[str, dict] = {b: {} for b in BLOCKS}
    for key, value in flat.items():
        block, _, name = key.partition(".")
        if block not in BLOCKS or not name:
            raise ValidationError(f"config: unknown key {key!r}")
        spec = {f.name: f for f in fields(BLOCKS[block])}
        if name not in spec:
            raise ValidationError(f"config: unknown key {key!r}")
        f = spec[name]
        values[block][name] = _coerce(block, name, value, str(f.type))
    cfg = ExperimentConfig(**{b: cls(**values[b]) for b, cls in BLOCKS.items()})
    validate(cfg)
    return cfg


def loads(text: str, fmt: str | None = None) -> ExperimentConfig:
    if fmt == "json" or (fmt is None and text.lstrip().startswith("{")):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ValidationError("config: JSON config must be an object")
        return from_mapping(_flatten(data))
    return from_mapping(parse_flat(text))


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc.strerror}") from None
    return loads(text, "json" if path.suffix == ".json" else None)


def default_config_path() -> Path:
    return Path(__file__).with_name("configs") / "default.cfg"


# ---------------------------------------------------------------------------
# validation


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def validate(cfg: ExperimentConfig) -> None:
    """Cross-field checks; constructing the grid, measure and pair runs the
    per-module invariants as well."""
    g, lv, h, c, s, dt, mc = cfg.grid, cfg.levy, cfg.hamiltonian, cfg.coupling, cfg.solver, cfg.data, cfg.mc
    _require(lv.kind in KINDS, f"config: levy.kind must be one of {KINDS}, got {lv.kind!r}")
    _require(0 <= lv.sigma < 0.5, f"config: levy.sigma must lie in [0, 1/2) so that 2*sigma < 1, got {lv.sigma}")
    if lv.kind in ("stable", "tempered"):
        _require(lv.sigma > 0, "config: levy.sigma must be > 0 for stable and tempered measures")
    if lv.symmetric and lv.c_plus is not None and lv.c_minus is not None:
        _require(lv.c_plus == lv.c_minus, "config: levy.symmetric = true requires levy.c_plus == levy.c_minus")
    if lv.kind == "atomic":
        _require(bool(lv.atoms), "config: levy.atoms must list [location, mass] pairs for an atomic measure")
        for a in lv.atoms:
            _require(isinstance(a, list) and len(a) == 2, f"config: levy.atoms entry {a!r} is not [location, mass]")
    _require(h.tag in TAGS, f"config: hamiltonian.tag must be one of {TAGS}, got {h.tag!r}")
    _require(h.base in TAGS[:-1], "config: hamiltonian.base must be one of a..e")
    _require(h.kappa > 0, "config: hamiltonian.kappa must be > 0")
    _require(h.eps > 0, "config: hamiltonian.eps must be > 0")
    _require(h.q > 1, "config: hamiltonian.q must be > 1")
    _require(c.width > 0, "config: coupling.width must be > 0")
    _require(c.A >= 0 and c.A_g >= 0, "config: coupling.A and coupling.A_g must be >= 0 (monotone coupling)")
    _require(0 < s.tau <= 1, "config: solver.tau must lie in (0, 1]")
    _require(s.tol > 0, "config: solver.tol must be > 0")
    _require(s.max_iters >= 1, "config: solver.max_iters must be >= 1")
    _require(0 < s.theta <= 1, "config: solver.theta (CFL fraction) must lie in (0, 1]")
    _require(s.scheme in ("picard", "fictitious"), "config: solver.scheme must be picard or fictitious")
    _require(0 < s.alpha <= 1, "config: solver.alpha must lie in (0, 1]")
    _require(s.restarts >= 1, "config: solver.restarts must be >= 1")
    _require(s.range in ("certified", "observed"), "config: solver.range must be certified or observed")
    _require(dt.m0 in DATA_M0, f"config: data.m0 must be one of {DATA_M0}")
    _require(0 <= dt.m0_center < 1, "config: data.m0_center must lie in [0, 1)")
    _require(dt.m0_width > 0, "config: data.m0_width must be > 0")
    _require(dt.g in DATA_SHAPES, f"config: data.g must be one of {DATA_SHAPES}")
    _require(dt.mode >= 1, "config: data.mode must be >= 1")
    _require(dt.drift in ("generated", "constant"), "config: data.drift must be generated or constant")
    _require(0 < dt.drift_beta <= 1, "config: data.drift_beta must lie in (0, 1]")
    _require(dt.drift_B > 0, "config: data.drift_B must be > 0")
    _require(0 <= dt.t0 <= g.T, "config: data.t0 must lie in [0, grid.T]")
    _require(dt.dual_mode in ("independent", "exact-adjoint"), "config: data.dual_mode must be independent or exact-adjoint")
    _require(mc.n_paths >= 1, "config: mc.n_paths must be >= 1")
    _require(mc.gain_paths >= 2, "config: mc.gain_paths must be >= 2")
    _require(mc.seed >= 0, "config: mc.seed must be >= 0")
    _require(mc.method in ("auto", "compound-poisson", "stable-increment"),
             "config: mc.method must be auto, compound-poisson or stable-increment")
    _require(mc.mode in ("time-change", "amplitude"), "config: mc.mode must be time-change or amplitude")
    if mc.mode == "amplitude":
        _require(mc.method == "stable-increment", "config: mc.mode = amplitude requires mc.method = stable-increment")
    if mc.method == "stable-increment":
        _require(lv.kind == "stable" and g.d == 1, "config: stable increments need a 1D stable levy block")
    _require(0 < cfg.diagnose.alpha <= 1, "config: diagnose.alpha must lie in (0, 1]")
    if cfg.diagnose.gamma is not None:
        _require(0 < cfg.diagnose.gamma <= 1, "config: diagnose.gamma must lie in (0, 1]")
    if cfg.diagnose.beta is not None:
        _require(0 < cfg.diagnose.beta <= 1, "config: diagnose.beta must lie in (0, 1]")
    _require(all(isinstance(k, int) and 1 <= k <= 11 for k in cfg.verify.criteria),
             "config: verify.criteria must list integers between 1 and 11")
    _require(set(cfg.output.formats) <= set(FORMATS), f"config: output.formats must be a subset of {FORMATS}")
    try:
        cfg.make_grid()
        cfg.make_spec()
        cfg.make_pair()
    except ValidationError:
        raise
    except (LevyMfgError, ValueError, TypeError) as exc:
        raise ValidationError(f"config: {exc}") from None
