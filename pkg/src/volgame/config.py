"""Run configuration documents: schema, validation and problem construction.

A config is one JSON document::

    {
      "schema_version": 1,
      "problem_kind": "lq",                      # quadform | lq | lqc | pursuit
      "grid": {"t0": 0, "t1": 1, "n": 65, "rule": "trapezoid"},
      "kernels": {"A": {"family": "constant", "value": [[-0.5]]}, ...},
      "problem": {"A": "A", "B": "B", ...},      # role -> kernel name
      "solver": {"tol": 1e-8, "max_iter": 200, "damping": 0.5, "seed": 0,
                 "override_certification": false},
      "output": {"directory": "out", "formats": ["csv", "json"]}
    }

Pursuit configs give ``"t1_bracket": [lo, hi]`` in ``grid`` instead of ``t1``.
All kernel references and dimensions are checked by :func:`load_config`
before any numerics run.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import GridMismatch, DimensionMismatch, ParseError, ValidationError
from .grid import KernelSpec, TimeGrid, make_grid, materialize

SCHEMA_VERSION = 1
KINDS = ("quadform", "lq", "lqc", "pursuit")

# role -> (arity, required); arity 0 means a constant matrix
ROLES: dict[str, dict[str, tuple[int, bool]]] = {
    "quadform": {
        "K11": (1, True), "K22": (1, True), "K12": (1, False),
        "L11": (2, True), "L22": (2, True), "L12": (2, False),
        "q1": (1, False), "q2": (1, False),
    },
    "lq": {
        "y0": (1, True), "A": (2, True), "B": (2, True), "C": (2, True),
        "P0": (0, False), "P1": (1, False), "P2": (2, False),
        "Q1": (1, False), "Q2": (2, False), "R1": (1, False), "R2": (2, False),
    },
    "lqc": {
        "y0": (1, True), "A": (2, True), "cubic": (2, False), "F1": (2, True), "F2": (2, True),
        "P": (0, False), "quartic": (0, False), "H1": (0, False), "H2": (0, False),
        "G11": (1, True), "G12": (1, False), "G22": (1, True),
    },
    "pursuit": {
        "y0": (1, True), "A": (2, True), "B": (2, True), "C": (2, True),
        "M": (0, True), "M0": (0, False), "M1": (0, False), "Q": (0, True), "R": (0, True),
    },
}


@dataclass
class GridConfig:
    t0: float = 0.0
    t1: float | None = 1.0
    n: int = 65
    rule: str = "trapezoid"
    t1_bracket: list[float] | None = None


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 200
    damping: float = 0.5
    seed: int = 0
    override_certification: bool = False
    verify_tol: float = 1e-6


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "json"])


@dataclass
class RunConfig:
    problem_kind: str
    grid: GridConfig
    kernels: dict[str, KernelSpec]
    problem: dict[str, Any]
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "problem_kind": self.problem_kind,
            "grid": {k: v for k, v in asdict(self.grid).items() if v is not None},
            "kernels": {k: spec.to_dict() for k, spec in self.kernels.items()},
            "problem": dict(self.problem),
            "solver": asdict(self.solver),
            "output": asdict(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def make_grid(self) -> TimeGrid:
        g = self.grid
        return make_grid(g.t0, g.t1, g.n, g.rule)


# ------------------------------------------------------------ parsing

def _section(doc: dict, key: str, cls):
    raw = doc.get(key, {})
    if not isinstance(raw, dict):
        raise ValidationError(key, "must be an object")
    names = {f for f in cls.__dataclass_fields__}
    unknown = set(raw) - names
    if unknown:
        raise ValidationError(f"{key}.{sorted(unknown)[0]}", "unknown field")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ValidationError(key, str(exc)) from exc


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValidationError("<root>", "config must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"must equal {SCHEMA_VERSION}")
    kind = doc.get("problem_kind")
    if kind not in KINDS:
        raise ValidationError("problem_kind", f"must be one of {', '.join(KINDS)}")
    unknown = set(doc) - {"schema_version", "problem_kind", "grid", "kernels", "problem", "solver", "output"}
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown top-level field")
    grid = _section(doc, "grid", GridConfig)
    solver = _section(doc, "solver", SolverConfig)
    output = _section(doc, "output", OutputConfig)
    kernels_raw = doc.get("kernels", {})
    if not isinstance(kernels_raw, dict):
        raise ValidationError("kernels", "must be an object")
    kernels = {}
    for name, spec in kernels_raw.items():
        if not isinstance(spec, dict) or "family" not in spec:
            raise ValidationError(f"kernels.{name}", "needs a 'family'")
        try:
            kernels[name] = KernelSpec.from_dict(spec)
        except DimensionMismatch as exc:
            raise ValidationError(f"kernels.{name}", str(exc)) from exc
    problem = doc.get("problem", {})
    if not isinstance(problem, dict):
        raise ValidationError("problem", "must be an object")
    if kind == "pursuit":
        if "t1" not in doc.get("grid", {}):
            grid.t1 = None
    cfg = RunConfig(kind, grid, kernels, dict(problem), solver, output, version)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return config_from_dict(doc)


# ------------------------------------------------------------ validation

def _check_grid(cfg: RunConfig):
    g = cfg.grid
    if cfg.problem_kind == "pursuit":
        b = g.t1_bracket
        if not (isinstance(b, (list, tuple)) and len(b) == 2 and g.t0 < b[0] < b[1]):
            raise ValidationError("grid.t1_bracket", "needs [t_lo, t_hi] with t0 < t_lo < t_hi")
        probe = (g.t0, b[1])
    else:
        if g.t1 is None:
            raise ValidationError("grid.t1", "required")
        probe = (g.t0, g.t1)
    try:
        make_grid(probe[0], probe[1], g.n, g.rule)
    except ValueError as exc:
        raise ValidationError("grid", str(exc)) from exc


def _kernel_for(cfg: RunConfig, role: str) -> KernelSpec | None:
    name = cfg.problem.get(role)
    if name is None:
        return None
    if not isinstance(name, str):
        raise ValidationError(f"problem.{role}", "must name a kernel")
    if name not in cfg.kernels:
        raise ValidationError(name, f"undefined kernel referenced by problem.{role}")
    return cfg.kernels[name]


def resolve(cfg: RunConfig, grid: TimeGrid | None = None) -> dict[str, np.ndarray]:
    """Materialize every role: arrays on the grid for kernels, plain matrices for constants.

    Pursuit kernels stay symbolic (the grid depends on ``t1``); only their
    shapes are checked, using the values at ``t0``.
    """
    roles = ROLES[cfg.problem_kind]
    unknown = set(cfg.problem) - set(roles)
    if unknown:
        raise ValidationError(f"problem.{sorted(unknown)[0]}", f"not a role of {cfg.problem_kind}")
    out: dict[str, Any] = {}
    for role, (arity, required) in roles.items():
        spec = _kernel_for(cfg, role)
        if spec is None:
            if required:
                raise ValidationError(f"problem.{role}", "required role is missing")
            continue
        name = cfg.problem[role]
        if arity == 0:
            if spec.family != "constant":
                raise ValidationError(name, "matrix roles need the constant family")
            out[role] = np.atleast_2d(np.asarray(spec.params["value"], float))
            continue
        if cfg.problem_kind == "pursuit":
            if not spec.is_functional:
                raise ValidationError(name, "pursuit kernels must be functional (grid varies with t1)")
            out[role] = spec
            continue
        try:
            out[role] = materialize(spec, grid, arity).values
        except GridMismatch as exc:
            raise ValidationError(name, f"grid mismatch: {exc}") from exc
        except (DimensionMismatch, KeyError, ValueError) as exc:
            raise ValidationError(name, str(exc)) from exc
    return out


def _shape(x, arity) -> tuple[int, int]:
    if isinstance(x, KernelSpec):
        return x.shape
    return tuple(np.shape(x)[arity:]) if arity else np.shape(x)


def _expect(role: str, actual, expected):
    if tuple(actual) != tuple(expected):
        raise ValidationError(f"problem.{role}", f"dimension mismatch: shape {tuple(actual)}, expected {tuple(expected)}")


def validate(cfg: RunConfig):
    """Eager reference and dimension checks (no solver work)."""
    _check_grid(cfg)
    grid = cfg.make_grid() if cfg.problem_kind != "pursuit" else None
    vals = resolve(cfg, grid)
    roles = ROLES[cfg.problem_kind]
    sh = {r: _shape(v, roles[r][0]) for r, v in vals.items()}
    kind = cfg.problem_kind
    if kind == "quadform":
        m, n = sh["K11"][0], sh["K22"][0]
        dims = {"K11": (m, m), "K22": (n, n), "K12": (m, n), "L11": (m, m), "L22": (n, n),
                "L12": (m, n), "q1": (m, 1), "q2": (n, 1)}
    elif kind == "lq":
        p, m, n = sh["y0"][0], sh["B"][1], sh["C"][1]
        dims = {"y0": (p, 1), "A": (p, p), "B": (p, m), "C": (p, n), "P0": (p, p), "P1": (p, p),
                "P2": (p, p), "Q1": (m, m), "Q2": (m, m), "R1": (n, n), "R2": (n, n)}
    elif kind == "lqc":
        p, m, n = sh["y0"][0], sh["F1"][1], sh["F2"][1]
        dims = {"y0": (p, 1), "A": (p, p), "cubic": (p, 1), "F1": (p, m), "F2": (p, n),
                "P": (p, p), "quartic": (p, 1), "H1": (m, p), "H2": (n, p),
                "G11": (m, m), "G12": (m, n), "G22": (n, n)}
    else:
        p, m, n = sh["y0"][0], sh["B"][1], sh["C"][1]
        dims = {"y0": (p, 1), "A": (p, p), "B": (p, m), "C": (p, n), "M": (p, p), "M0": (p, p),
                "M1": (p, p), "Q": (m, m), "R": (n, n)}
    for role, s in sh.items():
        _expect(role, s, dims[role])
    return vals


# ------------------------------------------------------------ problem construction

def build_quadform(cfg: RunConfig):
    from .quadform import BlockQuadraticForm

    grid = cfg.make_grid()
    v = resolve(cfg, grid)
    N = grid.n
    m, n = v["K11"].shape[1], v["K22"].shape[1]
    return BlockQuadraticForm(
        K11=v["K11"], K22=v["K22"], K12=v.get("K12", np.zeros((N, m, n))),
        L11=v["L11"], L22=v["L22"], L12=v.get("L12", np.zeros((N, N, m, n))),
        q1=v["q1"][:, :, 0] if "q1" in v else np.zeros((N, m)),
        q2=v["q2"][:, :, 0] if "q2" in v else np.zeros((N, n)),
        grid=grid,
    )


def build_lq(cfg: RunConfig):
    from .lqgame import LQGameProblem

    grid = cfg.make_grid()
    v = resolve(cfg, grid)
    extra = {k: v[k] for k in ("P0", "P1", "P2", "Q1", "Q2", "R1", "R2") if k in v}
    return LQGameProblem(grid, v["y0"][:, :, 0], v["A"], v["B"], v["C"], **extra)


def build_lqc(cfg: RunConfig):
    """Polynomial-in-state model family.

    ``f0 = A(t,s) y + cubic(t,s) * y**3``, ``F1``, ``F2`` state independent,
    ``g0 = 1/2 y'Py + sum quartic * y**4``, ``g1 = H1 y``, ``g2 = H2 y`` and
    time-dependent ``G11``, ``G12``, ``G22``.
    """
    from .lqcgame import LQCProblem

    grid = cfg.make_grid()
    v = resolve(cfg, grid)
    N = grid.n
    p, m, n = v["y0"].shape[1], v["F1"].shape[3], v["F2"].shape[3]
    A, F1, F2 = v["A"], v["F1"], v["F2"]
    cubic = v["cubic"][..., 0] if "cubic" in v else np.zeros((N, N, p))
    P = v.get("P", np.zeros((p, p)))
    Ps = 0.5 * (P + P.T)
    quartic = v["quartic"][:, 0] if "quartic" in v else np.zeros(p)
    H1 = v.get("H1", np.zeros((m, p)))
    H2 = v.get("H2", np.zeros((n, p)))
    G11, G22 = v["G11"], v["G22"]
    G12 = v.get("G12", np.zeros((N, m, n)))
    ix = grid.node_index

    grads = {
        "f0": lambda t, s, y: A[ix(t), ix(s)] + np.diag(3.0 * cubic[ix(t), ix(s)] * y**2),
        "F1": lambda t, s, y: np.zeros((p, m, p)),
        "F2": lambda t, s, y: np.zeros((p, n, p)),
        "g0": lambda t, y: Ps @ y + 4.0 * quartic * y**3,
        "g1": lambda t, y: H1,
        "g2": lambda t, y: H2,
        "G11": lambda t, y: np.zeros((m, m, p)),
        "G12": lambda t, y: np.zeros((m, n, p)),
        "G22": lambda t, y: np.zeros((n, n, p)),
    }
    return LQCProblem(
        grid=grid, y0=v["y0"][:, :, 0],
        f0=lambda t, s, y: A[ix(t), ix(s)] @ y + cubic[ix(t), ix(s)] * y**3,
        F1=lambda t, s, y: F1[ix(t), ix(s)],
        F2=lambda t, s, y: F2[ix(t), ix(s)],
        g0=lambda t, y: 0.5 * y @ P @ y + quartic @ y**4,
        g1=lambda t, y: H1 @ y,
        g2=lambda t, y: H2 @ y,
        G11=lambda t, y: G11[ix(t)],
        G12=lambda t, y: G12[ix(t)],
        G22=lambda t, y: G22[ix(t)],
        gradients=grads,
    )


def build_pursuit(cfg: RunConfig):
    from .pursuit import PursuitProblem

    v = resolve(cfg)
    p = v["M"].shape[0]
    zero = np.zeros((p, p))
    g = cfg.grid
    return PursuitProblem(
        t0=g.t0, n_nodes=g.n, y0=v["y0"], A=v["A"], B=v["B"], C=v["C"],
        M=v["M"], M0=v.get("M0", zero), M1=v.get("M1", zero), Q=v["Q"], R=v["R"],
        t1_bracket=tuple(g.t1_bracket), rule=g.rule,
    )
