"""Command-line front end.

    volgame quadform saddle|check --config cfg.json [--out DIR]
    volgame lq solve              --config cfg.json
    volgame lqc solve --side lower|upper --config cfg.json
    volgame pursuit solve         --config cfg.json
    volgame verify                --config cfg.json --out DIR

Each run writes ``trajectory.csv`` (when there is a trajectory) and
``report.json`` into the output directory. Residuals in the report are
recomputed from the files as written, never copied from solver internals.

Exit codes: 0 success, 1 verification failure, 2 certification failure,
3 solver non-convergence, 4 capture not bracketed, 5 config or artifact error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import lqcgame, lqgame, pursuit
from . import quadform as qf
from .errors import (CaptureNotBracketed, MissingArtifact, NoConvergence, NotCertified,
                     ParseError, TransversalityViolated, ValidationError, VolgameError)
from .volterra import solve_volterra_linear

EXIT_OK, EXIT_VERIFY, EXIT_CERT, EXIT_CONVERGENCE, EXIT_BRACKET, EXIT_CONFIG = 0, 1, 2, 3, 4, 5
CSV_NAME = "trajectory.csv"
REPORT_NAME = "report.json"


# ------------------------------------------------------------ artifacts

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory(path: Path, t, columns: dict[str, np.ndarray]):
    """CSV with header ``t, y_1.., u_1.., v_1.., psi_1..``; 17 significant digits."""
    names = ["t"]
    blocks = [np.asarray(t, float)[:, None]]
    for key in ("y", "u", "v", "psi"):
        if key in columns:
            a = np.asarray(columns[key], float)
            a = a.reshape(len(t), -1)
            names += [f"{key}_{i + 1}" for i in range(a.shape[1])]
            blocks.append(a)
    buf = io.StringIO()
    np.savetxt(buf, np.hstack(blocks), delimiter=",", fmt="%.17g", header=",".join(names), comments="")
    _atomic_write(path, buf.getvalue())


def read_trajectory(path: Path) -> dict[str, np.ndarray]:
    if not path.exists():
        raise MissingArtifact(f"missing artifact {path}")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = {"t": data[:, 0]}
    for key in ("y", "u", "v", "psi"):
        idx = [i for i, h in enumerate(header) if h.rsplit("_", 1)[0] == key]
        if idx:
            out[key] = data[:, idx]
    return out


def _read_report(path: Path) -> dict:
    if not path.exists():
        raise MissingArtifact(f"missing artifact {path}")
    return json.loads(path.read_text())


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def _write_report(out_dir: Path, report: dict):
    _atomic_write(out_dir / REPORT_NAME, json.dumps(_jsonable(report), indent=2, sort_keys=True))


def _max(a) -> float:
    return float(np.max(np.abs(a), initial=0.0))


# ------------------------------------------------------------ residuals from artifacts

def artifact_residuals(cfg: cfgmod.RunConfig, out_dir: Path, mode: str | None = None) -> dict[str, float]:
    """Recompute every residual from the files in ``out_dir``."""
    kind = cfg.problem_kind
    rep = _read_report(out_dir / REPORT_NAME)
    if kind == "quadform" and (mode or rep.get("mode")) == "check":
        form = cfgmod.build_quadform(cfg)
        r = qf.certify(form)
        return {"min_eig_11": r.min_eig_11, "max_eig_22": r.max_eig_22}
    tr = read_trajectory(out_dir / CSV_NAME)
    if kind == "quadform":
        form = cfgmod.build_quadform(cfg)
        r1, r2 = qf.stationarity_residual(form, np.hstack([tr["u"], tr["v"]]))
        return {"stationarity": max(_max(r1), _max(r2))}
    if kind == "lq":
        prob = cfgmod.build_lq(cfg)
        form = lqgame.assemble_form(prob)
        r1, r2 = qf.stationarity_residual(form, np.hstack([tr["u"], tr["v"]]))
        y = solve_volterra_linear(prob.y0, prob.A, prob.B, prob.C, tr["u"], tr["v"], grid=prob.grid)
        value = lqgame.evaluate_J(prob, tr["u"], tr["v"])
        return {"stationarity": max(_max(r1), _max(r2)), "trajectory": _max(y - tr["y"]),
                "value": abs(value - rep["value"])}
    if kind == "lqc":
        prob = cfgmod.build_lqc(cfg)
        y, psi, u, v = tr["y"], tr["psi"], tr["u"], tr["v"]
        y_chk, _ = lqcgame.forward_state(prob, u, v)
        psi_chk = lqcgame.costate(prob, y, u, v)
        side = rep.get("side", "lower")
        law = lqcgame.control_u_lower if side == "lower" else lqcgame.control_u_upper
        law_v = lqcgame.control_v_lower if side == "lower" else lqcgame.control_v_upper
        t = prob.grid.nodes
        u_chk = np.array([law(prob, t[k], y[k], psi) for k in range(len(t))])
        v_chk = np.array([law_v(prob, t[k], y[k], psi) for k in range(len(t))])
        return {"state": _max(y_chk - y), "costate": _max(psi_chk - psi),
                "stationarity": max(_max(u_chk - u), _max(v_chk - v))}
    prob = cfgmod.build_pursuit(cfg)
    term = rep["terminal"]
    ts = pursuit.TerminalState(
        t1=term["t1"], Y=np.asarray(term["Y"]), U=np.asarray(term["U"]), V=np.asarray(term["V"]),
        W=np.asarray(term["W"]), PsiCap=np.asarray(term["PsiCap"]), omega=term["omega"])
    grid = prob.grid(ts.t1)
    sol = pursuit.PursuitSolution(ts, grid, tr["psi"], tr["u"], tr["v"], tr["y"])
    res = pursuit.residual_suite(prob, sol)
    res.pop("control_gap", None)
    return res


# ------------------------------------------------------------ run

def _solve(cfg: cfgmod.RunConfig, mode: str | None, side: str, report: dict, out_dir: Path):
    kind = cfg.problem_kind
    s = cfg.solver
    if kind == "quadform":
        form = cfgmod.build_quadform(cfg)
        cert = qf.certify(form)
        report["certification"] = cert.to_dict()
        report["mode"] = mode
        if mode == "check":
            report["sampled_L11_nonneg"] = qf.mercer_sample_check(form.L11, form.grid, seed=s.seed)
            report["sampled_L22_nonpos"] = qf.mercer_sample_check(-form.L22, form.grid, seed=s.seed)
            return EXIT_OK if cert.certified else EXIT_CERT
        if not cert.certified and not s.override_certification:
            raise NotCertified("form is not certified", cert)
        w = qf.saddle_point(form, override=True)
        write_trajectory(out_dir / CSV_NAME, form.grid.nodes, {"u": w.w1, "v": w.w2})
        report["value"] = qf.evaluate(form, w.stacked())
        return EXIT_OK
    if kind == "lq":
        prob = cfgmod.build_lq(cfg)
        sol = lqgame.solve_lq_game(prob, override=s.override_certification)
        report["certification"] = sol.report.to_dict()
        report["value"] = sol.value
        write_trajectory(out_dir / CSV_NAME, prob.grid.nodes, {"y": sol.y_star, "u": sol.u_star, "v": sol.v_star})
        return EXIT_OK
    if kind == "lqc":
        prob = cfgmod.build_lqc(cfg)
        solver = lqcgame.solve_lower_game if side == "lower" else lqcgame.solve_upper_game
        pair, u, v = solver(prob, damping=s.damping, max_iter=s.max_iter, tol=s.tol,
                            check_definiteness=not s.override_certification)
        report.update(side=side, iterations=pair.iterations, gradient_source=pair.gradient_source,
                      value=lqcgame.evaluate_lqc_J(prob, u, v))
        write_trajectory(out_dir / CSV_NAME, prob.grid.nodes, {"y": pair.y, "u": u, "v": v, "psi": pair.psi})
        return EXIT_OK
    prob = cfgmod.build_pursuit(cfg)
    pcfg = pursuit.PursuitSolverConfig(damping=s.damping, tol=s.tol, max_iter=min(s.max_iter, 10_000))
    sol = pursuit.solve_pursuit(prob, pcfg)
    t = sol.terminal
    report["terminal"] = {"t1": t.t1, "Y": t.Y, "U": t.U, "V": t.V, "W": t.W, "PsiCap": t.PsiCap, "omega": t.omega}
    report.update(inner_iterations=sol.inner_iterations, outer_evaluations=sol.outer_evaluations,
                  control_gap=sol.residuals["control_gap"])
    write_trajectory(out_dir / CSV_NAME, sol.grid.nodes,
                     {"y": sol.y_star, "u": sol.u_star, "v": sol.v_star, "psi": sol.psi})
    return EXIT_OK


def run(cfg: cfgmod.RunConfig, mode: str | None = None, side: str = "lower",
        out_dir: str | Path | None = None) -> tuple[dict, int]:
    """Solve, write artifacts, recompute residuals from them; returns ``(report, exit code)``."""
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"problem": cfg.to_dict(), "command": {"kind": cfg.problem_kind, "mode": mode, "side": side}}
    start = time.perf_counter()
    try:
        code = _solve(cfg, mode, side, report, out)
    except NotCertified as exc:
        code = EXIT_CERT
        report["error"] = str(exc)
        if hasattr(exc.report, "to_dict"):
            report["certification"] = exc.report.to_dict()
        elif exc.report is not None:
            report["certification"] = exc.report
    except CaptureNotBracketed as exc:
        code = EXIT_BRACKET
        report["error"] = str(exc)
        report["bracket"] = {k: {"residual": v, "sign": int(np.sign(v))} for k, v in exc.endpoints.items()}
    except (NoConvergence, TransversalityViolated) as exc:
        code = EXIT_CONVERGENCE
        report["error"] = str(exc)
        report["last_residual"] = getattr(exc, "residual", None)
    report["wall_time"] = time.perf_counter() - start
    report["exit_status"] = code
    _write_report(out, report)
    if code == EXIT_OK:
        report["residuals"] = artifact_residuals(cfg, out, mode)
        _write_report(out, report)
    return report, code


def verify(cfg: cfgmod.RunConfig, artifacts_dir: str | Path) -> tuple[dict, int]:
    """Recompute residuals from a previous run's artifacts and judge each against ``verify_tol``."""
    out = Path(artifacts_dir)
    rep = _read_report(out / REPORT_NAME)
    res = artifact_residuals(cfg, out, rep.get("mode"))
    tol = cfg.solver.verify_tol
    if cfg.problem_kind == "quadform" and rep.get("mode") == "check":
        checks = {"certified": {"value": res, "pass": res["min_eig_11"] > 0 and res["max_eig_22"] < 0}}
    else:
        skip = {"value"} if cfg.problem_kind != "lq" else set()
        checks = {k: {"magnitude": v, "tolerance": tol, "pass": bool(v < tol)} for k, v in res.items() if k not in skip}
        if cfg.problem_kind == "lq":
            checks["value"]["tolerance"] = tol * max(1.0, abs(rep.get("value", 0.0)))
            checks["value"]["pass"] = bool(res["value"] < checks["value"]["tolerance"])
    ok = all(c["pass"] for c in checks.values())
    return {"checks": checks, "passed": ok}, (EXIT_OK if ok else EXIT_VERIFY)


# ------------------------------------------------------------ argparse

def _common(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="path to the JSON run config")
    p.add_argument("--out", default=d, help="output directory (overrides output.directory)")
    p.add_argument("--tol", type=float, default=d, help="solver tolerance")
    p.add_argument("--seed", type=int, default=d, help="random seed")
    p.add_argument("--override-certification", action="store_true",
                   default=argparse.SUPPRESS if suppress else False,
                   help="solve even when definiteness certification fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="volgame", description="Volterra game solvers")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def leaf(parent, name, help_):
        p = parent.add_parser(name, help=help_)
        _common(p, suppress=True)
        return p

    qp = sub.add_parser("quadform", help="block quadratic forms")
    qs = qp.add_subparsers(dest="action", required=True)
    leaf(qs, "saddle", "compute the saddle point")
    leaf(qs, "check", "certify joint definiteness only")
    lp = sub.add_parser("lq", help="linear-quadratic Volterra game")
    leaf(lp.add_subparsers(dest="action", required=True), "solve", "solve the game")
    cp = sub.add_parser("lqc", help="games quadratic in the controls")
    c_solve = leaf(cp.add_subparsers(dest="action", required=True), "solve", "solve the lower or upper game")
    c_solve.add_argument("--side", choices=("lower", "upper"), default="lower")
    pp = sub.add_parser("pursuit", help="capture game with free terminal time")
    leaf(pp.add_subparsers(dest="action", required=True), "solve", "find the capture time and controls")
    leaf(sub, "verify", "recompute residuals from existing artifacts")
    return parser


def _apply_overrides(cfg: cfgmod.RunConfig, args) -> cfgmod.RunConfig:
    solver = cfg.solver
    if args.tol is not None:
        solver = replace(solver, tol=args.tol)
    if args.seed is not None:
        solver = replace(solver, seed=args.seed)
    if args.override_certification:
        solver = replace(solver, override_certification=True)
    return replace(cfg, solver=solver)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config is None:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _apply_overrides(cfgmod.load_config(args.config), args)
        out = args.out if args.out is not None else cfg.output.directory
        if args.command == "verify":
            result, code = verify(cfg, out)
            for name, c in result["checks"].items():
                print(f"{'PASS' if c['pass'] else 'FAIL'} {name} {c.get('magnitude', '')}")
            return code
        if args.command != cfg.problem_kind:
            raise ValidationError("problem_kind", f"config is '{cfg.problem_kind}', command is '{args.command}'")
        report, code = run(cfg, mode=args.action, side=getattr(args, "side", "lower"), out_dir=out)
    except (ParseError, ValidationError, MissingArtifact, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VolgameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    status = {0: "ok", 2: "certification failed", 3: "no convergence", 4: "capture not bracketed"}[code]
    print(f"{cfg.problem_kind}: {status} -> {Path(out) / REPORT_NAME}")
    for k, v in report.get("residuals", {}).items():
        print(f"  {k}: {v:.3e}")
    return code


if __name__ == "__main__":
    sys.exit(main())
