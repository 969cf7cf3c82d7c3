"""Acceptance criteria 1-8, one test each.

Every test prints a single ``CRITERION k: PASS|FAIL ...`` line (also collected
into the terminal summary) and then asserts, so a red criterion shows up both
in the summary and as a failing test. Run alone with::

    python3 -m pytest tests/test_acceptance.py -q
"""

import json
import time
from pathlib import Path

import numpy as np

from conftest import (
    ACCEPTANCE_LINES,
    nonlinear_lqc_problem,
    planar_pursuit,
    poly_spec,
    random_lq_problem,
    scalar_pursuit_instances,
    smooth_kernel1,
    smooth_kernel2,
    spd_kernel1,
    sym_kernel2,
)
from volgame import cli
from volgame import quadform as qf
from volgame.grid import KernelSpec, make_grid
from volgame.lqcgame import (LQCProblem, costate, evaluate_lqc_J, forward_state, from_lq_problem,
                             solve_lower_game, solve_upper_game)
from volgame.lqgame import LQGameProblem, assemble_form, evaluate_J, omega_offset, solve_lq_game
from volgame.pursuit import (Discretization, PursuitProblem, TerminalState, big_psi, costate_solve,
                             eliminate_multipliers, running_cost_at, solve_pursuit)
from volgame.volterra import resolvent, solve_volterra_linear, transform

CONFIGS = Path(__file__).parent.parent / "scripts" / "configs"


def report(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def certified_form(rng, g, m, n):
    return qf.BlockQuadraticForm(
        K11=spd_kernel1(rng, g, m, 2.0), K22=-spd_kernel1(rng, g, n, 2.0),
        K12=smooth_kernel1(rng, g, m, n, 0.3), L11=sym_kernel2(rng, g, m, 0.3),
        L22=sym_kernel2(rng, g, n, 0.3), L12=smooth_kernel2(rng, g, m, n, 0.3),
        q1=smooth_kernel1(rng, g, m, 1)[:, :, 0], q2=smooth_kernel1(rng, g, n, 1)[:, :, 0], grid=g)


def test_criterion_1_saddle_certification():
    rng = np.random.default_rng(101)
    g = make_grid(0, 1, 65)
    start = time.perf_counter()
    worst_res = worst_oracle = 0.0
    violations = 0
    for trial in range(20):
        m, n = 1 + trial % 3, 1 + (trial // 3) % 3
        f = certified_form(rng, g, m, n)
        assert qf.certify(f).certified
        s = qf.saddle_point(f)
        r1, r2 = qf.stationarity_residual(f, s)
        worst_res = max(worst_res, np.abs(r1).max(), np.abs(r2).max())
        E0 = qf.evaluate(f, s)
        tol = 1e-10 * max(1.0, abs(E0))
        for _ in range(50):
            violations += qf.evaluate(f, np.hstack([s.w1 + rng.standard_normal(s.w1.shape), s.w2])) < E0 - tol
            violations += qf.evaluate(f, np.hstack([s.w1, s.w2 + rng.standard_normal(s.w2.shape)])) > E0 + tol
        alt = qf.alternating_best_response(f)
        worst_oracle = max(worst_oracle, np.abs(alt.stacked() - s.stacked()).max())
    elapsed = time.perf_counter() - start
    ok = worst_res < 1e-7 and violations == 0 and worst_oracle < 1e-8 and elapsed < 30
    report(1, ok, f"stationarity {worst_res:.1e}, saddle violations {violations}, "
                  f"oracle gap {worst_oracle:.1e}, {elapsed:.1f}s")


def test_criterion_2_definiteness_chain():
    rng = np.random.default_rng(202)
    g = make_grid(0, 1, 17)
    counter = n_blockM = n_pd = 0
    for _ in range(100):
        d = int(rng.integers(1, 3))
        K = spd_kernel1(rng, g, d, rng.uniform(0.05, 2.0))
        L = sym_kernel2(rng, g, d, rng.uniform(0.05, 1.5))
        bm = qf.block_M_condition(K, L, g)
        pd = qf.check_joint_definiteness(K, L, g).jointly_pd_11
        n_blockM += bm
        n_pd += pd
        if bm and not pd:
            counter += 1
        if pd:
            for _ in range(20):
                w = rng.standard_normal((g.n, d))
                val = np.einsum("i,ia,iab,ib->", g.weights, w, K, w) + qf.double_integral(L, g, w)
                counter += val <= 0
    gf = make_grid(0, 1, 65)
    basis = qf.legendre_basis(gf, 4)
    X = rng.standard_normal((5, 5))
    lam = X @ X.T
    rec, ok_sign = qf.spectral_definiteness(qf.synthesize_kernel(basis, lam), basis)
    rec_err = np.abs(rec - lam).max()
    ok = counter == 0 and rec_err < 1e-6 and ok_sign and n_blockM > 0 and n_pd > n_blockM
    report(2, ok, f"counterexamples {counter} (blockM true {n_blockM}, PD {n_pd} of 100), "
                  f"reconstruction {rec_err:.1e}")


def test_criterion_3_resolvent_accuracy():
    errs = {}
    for a in (-1.0, 0.5, 2.0):
        e = []
        for n in (33, 65, 129):
            g = make_grid(0, 1, n)
            S = resolvent(np.full((n, n, 1, 1), a), g)[..., 0, 0]
            T, Sg = np.meshgrid(g.nodes, g.nodes, indexing="ij")
            e.append(np.abs(np.tril(S - a * np.exp(a * (T - Sg)))).max())
        errs[a] = e
    ratios = [e[i] / e[i + 1] for e in errs.values() for i in range(2)]
    at129 = max(e[-1] for e in errs.values())
    rng = np.random.default_rng(303)
    rep = 0.0
    for _ in range(5):
        g = make_grid(0, 1, 41)
        p = int(rng.integers(1, 3))
        y0, A = rng.standard_normal((41, p)), smooth_kernel2(rng, g, p, p)
        B, C = smooth_kernel2(rng, g, p, 2), smooth_kernel2(rng, g, p, 1)
        u, v = rng.standard_normal((41, 2)), rng.standard_normal((41, 1))
        rep = max(rep, np.abs(transform(y0, A, B, C, g).state(u, v)
                              - solve_volterra_linear(y0, A, B, C, u, v, g)).max())
    ok = at129 < 1e-3 and all(3.5 < r < 4.5 for r in ratios) and rep < 1e-7
    report(3, ok, f"max error at n=129 {at129:.1e}, refinement ratios {min(ratios):.2f}..{max(ratios):.2f}, "
                  f"representation {rep:.1e}")


def test_criterion_4_lq_assembly():
    rng = np.random.default_rng(404)
    g = make_grid(0, 1, 65)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(10):
        p, m, n = (int(x) for x in rng.integers(1, 3, size=3))
        prob = random_lq_problem(rng, g, p, m, n)
        f = assemble_form(prob)
        om = omega_offset(prob)
        for _ in range(20):
            u, v = rng.standard_normal((65, m)), rng.standard_normal((65, n))
            dJ = evaluate_J(prob, u, v) - om
            E = qf.evaluate(f, np.hstack([u, v]))
            worst = max(worst, abs(E - dJ) / max(abs(dJ), 1e-300))
    elapsed = time.perf_counter() - start
    report(4, worst < 1e-7 and elapsed < 60, f"max relative mismatch {worst:.1e}, {elapsed:.1f}s")


def test_criterion_5_lqc_lq_overlap():
    rng = np.random.default_rng(505)
    g = make_grid(0, 1, 17)
    worst = 0.0
    for trial in range(5):
        dims = [(1, 1, 1), (2, 1, 1), (1, 2, 1), (2, 1, 2), (2, 2, 2)][trial]
        base = random_lq_problem(rng, g, *dims)
        z = np.zeros_like
        lq = LQGameProblem(g, base.y0, base.A, base.B, base.C, z(base.P0), base.P1, z(base.P2),
                           base.Q1, z(base.Q2), base.R1, z(base.R2))
        ref = solve_lq_game(lq)
        prob = from_lq_problem(lq)
        for solver in (solve_lower_game, solve_upper_game):
            _, u, v = solver(prob, tol=1e-10)
            worst = max(worst, np.abs(u - ref.u_star).max(), np.abs(v - ref.v_star).max())
    gaps = []
    for a in (0.1, 0.2, 0.3, 0.4, 0.5):
        prob = nonlinear_lqc_problem(g, a=a)
        _, ul, vl = solve_lower_game(prob)
        _, uu, vu = solve_upper_game(prob)
        gaps.append(evaluate_lqc_J(prob, ul, vl) - evaluate_lqc_J(prob, uu, vu))
    ok = worst < 1e-6 and max(gaps) <= 1e-7
    report(5, ok, f"LQ overlap max diff {worst:.1e}, max(lower - upper) {max(gaps):.1e}")


def test_criterion_6_pursuit_suite():
    start = time.perf_counter()
    k0 = KernelSpec.constant(0.0)
    degenerate = PursuitProblem(0.0, 129, poly_spec(1.0, -1.0), k0, k0, k0, np.eye(1), np.zeros((1, 1)),
                                np.zeros((1, 1)), np.eye(1), -np.eye(1), (0.3, 1.7))
    t1_err = abs(solve_pursuit(degenerate).terminal.t1 - 1.0)
    worst = 0.0
    worst_key = ""
    closed_form = 0.0
    rng = np.random.default_rng(606)
    for prob in scalar_pursuit_instances(n=129):
        sol = solve_pursuit(prob)
        for key, val in sol.residuals.items():
            if key != "control_gap" and val > worst:
                worst, worst_key = val, key
        # closed form vs general elimination at transversal (off-capture) terminal states
        for frac in (0.7, 0.85):
            d = Discretization(prob, frac * sol.terminal.t1)
            st = d.evaluate(rng.standard_normal(1))
            Y, U, V, W = st["Y"], st["U"], st["V"], st["W"]
            _, Psi = eliminate_multipliers(prob.M @ Y, 0.0, prob.M0 @ Y, running_cost_at(prob, Y, U, V), W)
            lit = big_psi(prob, TerminalState(d.grid.t1, Y, U, V, W, Psi, 0.0))
            closed_form = max(closed_form, np.abs(lit - Psi).max())
    elapsed = time.perf_counter() - start
    ok = t1_err < 1e-8 and worst < 1e-6 and closed_form < 1e-9 and elapsed < 120
    report(6, ok, f"degenerate |t1-1| {t1_err:.1e}, worst residual {worst:.1e} ({worst_key or 'none'}), "
                  f"closed form vs elimination {closed_form:.1e}, {elapsed:.1f}s")
    # informational: the closed form scales the terminal-weight covector too
    prob = scalar_pursuit_instances(n=17)[0]
    Y, U, V, W = np.array([0.5]), np.array([0.2]), np.array([0.1]), np.array([-0.8])
    prob = PursuitProblem(prob.t0, 17, prob.y0, prob.A, prob.B, prob.C, prob.M, 0.5 * np.eye(1),
                          prob.M1, prob.Q, prob.R, prob.t1_bracket)
    _, Psi = eliminate_multipliers(prob.M @ Y, 0.0, prob.M0 @ Y, running_cost_at(prob, Y, U, V), W)
    lit = big_psi(prob, TerminalState(1.0, Y, U, V, W, Psi, 0.0))
    line = f"  note: with M0 = 0.5 the closed form differs from the elimination by {np.abs(lit - Psi).max():.2e}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def _directional(fun, x, d, h=1e-6):
    return (fun(x + h * d) - fun(x - h * d)) / (2 * h)


def test_criterion_7_gradients():
    rng = np.random.default_rng(707)
    worst = {}

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-8)

    # quadratic form gradient
    g = make_grid(0, 1, 21)
    f = certified_form(rng, g, 2, 1)
    w = rng.standard_normal((21, 3))
    gr = qf.gradient(f, w)
    worst["quadform"] = max(rel(np.sum(gr * d), _directional(lambda x: qf.evaluate(f, x), w, d))
                            for d in rng.standard_normal((20, 21, 3)))
    # LQ cost gradient through the assembled form
    prob = random_lq_problem(rng, g, 2, 1, 1)
    form = assemble_form(prob)
    uv = rng.standard_normal((21, 2))
    gr = qf.gradient(form, uv)
    J = lambda x: evaluate_J(prob, x[:, :1], x[:, 1:])
    worst["lq"] = max(rel(np.sum(gr * d), _directional(J, uv, d)) for d in rng.standard_normal((20, 21, 2)))
    # LQC costate as the gradient of the cost with respect to the forcing
    lqc = nonlinear_lqc_problem(g)
    u, v = 0.3 * rng.standard_normal((21, 1)), 0.3 * rng.standard_normal((21, 1))
    y, _ = forward_state(lqc, u, v)
    psi = costate(lqc, y, u, v)

    def J_y0(y0):
        p = LQCProblem(g, y0, lqc.f0, lqc.F1, lqc.F2, lqc.g0, lqc.g1, lqc.g2, lqc.G11, lqc.G12, lqc.G22,
                       lqc.gradients)
        return evaluate_lqc_J(p, u, v)

    worst["lqc_costate"] = max(rel(np.sum(g.weights[:, None] * psi * d), _directional(J_y0, lqc.y0, d))
                               for d in rng.standard_normal((20, 21, 1)))
    # pursuit costate as the gradient of the terminal Lagrangian part
    P = planar_pursuit(17)
    dsc = Discretization(P, 1.1)
    gp = dsc.grid
    Psi = rng.standard_normal(2)

    def Lag(y0):
        yy = solve_volterra_linear(y0, dsc.A, grid=gp)
        return 0.5 * np.einsum("i,ia,ab,ib->", gp.weights, yy, P.M1, yy) + Psi @ (yy[-1] - y0[-1])

    yy = solve_volterra_linear(dsc.y0, dsc.A, grid=gp)
    psi_p = costate_solve(P, gp, 1.1, Psi, yy)
    worst["pursuit_costate"] = max(rel(np.sum(gp.weights[:, None] * psi_p * d), _directional(Lag, dsc.y0, d))
                                   for d in rng.standard_normal((20, 17, 2)))
    ok = max(worst.values()) < 1e-4
    report(7, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_8_determinism(tmp_path):
    runs = [("lq_scalar", ["lq", "solve"]), ("quadform_small", ["quadform", "saddle"]),
            ("lqc_cubic", ["lqc", "solve"]), ("pursuit_planar", ["pursuit", "solve"])]
    identical = []
    for name, cmd in runs:
        d = json.loads((CONFIGS / f"{name}.json").read_text())
        if name == "pursuit_planar":
            d["grid"]["n"] = 33
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(d))
        blobs = []
        for rep in range(3):
            out = tmp_path / f"{name}_{rep}"
            assert cli.main([*cmd, "--config", str(cfg), "--out", str(out), "--seed", "11"]) == 0
            blobs.append((out / cli.CSV_NAME).read_bytes())
        identical.append(all(b == blobs[0] for b in blobs))
    report(8, all(identical), f"bit-identical CSVs for {sum(identical)}/{len(runs)} problem kinds over 3 runs")
