"""Pursuit-evasion Volterra games with a free capture time.

The linear-quadratic capture game has state

    y(t) = y0(t) + int_{t0}^t [A y + B u + C v](t, s) ds,

capture criterion ``Phi = 1/2 y(t1)' M y(t1) = 0`` and cost

    J = 1/2 Y' M0 Y + 1/2 int [y'M1y + u'Qu + v'Rv] dt,     Y = y(t1).

For a frozen ``t1`` every necessary condition except the multiplier
normalization is linear. The costate equation is solved densely for ``psi``
as an affine function of the terminal multiplier ``Psi`` (``p + 1`` right-hand
sides). The remaining equation for ``Psi`` then gets a damped fixed point,
and an outer bracketed root search moves ``t1`` until capture holds.

Terminal multiplier. With ``M`` positive semidefinite, capture forces
``M Y = 0`` and hence ``Y'MW = 0``, so the textbook quotient
``(Y'MW)^-1 (...) Y'M`` is 0/0 exactly at capture. The solver uses the
covector direction ``n = M W`` there (its limit along the trajectory), and
for rank-one ``M`` it uses ``n = M W`` everywhere. The two agree identically
away from capture in that case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import (CaptureNotBracketed, DimensionMismatch, InnerNoConvergence,
                     NotSymmetric, SingularSystem, SingularWeight,
                     TransversalityViolated)
from .grid import KernelSpec, TimeGrid, make_grid
from .volterra import (ResolventTransform, backward_representation, backward_resolvent,
                       solve_volterra_backward, solve_volterra_linear, transform)

PSD_TOL = 1e-12
TRANSVERSALITY_TOL = 1e-12
_COND_LIMIT = 1e12


def _sym(name, X, tol=1e-12):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != X.shape[1] or np.max(np.abs(X - X.T)) > tol * max(1.0, np.abs(X).max()):
        raise NotSymmetric(f"{name} must be a symmetric square matrix")
    return X


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root; eigenvalues in ``[-1e-12, 0)`` are clamped to zero."""
    lam, V = np.linalg.eigh(M)
    if lam.size and lam[0] < -PSD_TOL:
        raise NotSymmetric(f"matrix is not nonnegative definite (eigenvalue {lam[0]:.3e})")
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T


@dataclass(frozen=True)
class PursuitProblem:
    """Data of the linear-quadratic capture game.

    ``y0`` is a one-argument kernel (``KernelSpec`` or callable ``t -> (..., p, 1)``);
    its derivative comes from ``y0.derivative`` or from ``dy0``. ``A``, ``B``,
    ``C`` are two-argument kernels evaluated as ``K(t, s) -> (..., r, c)``. Each
    candidate ``t1`` gets a uniform grid of ``n_nodes`` nodes on ``[t0, t1]``.
    """

    t0: float
    n_nodes: int
    y0: Callable
    A: Callable
    B: Callable
    C: Callable
    M: np.ndarray
    M0: np.ndarray
    M1: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    t1_bracket: tuple[float, float]
    rule: str = "trapezoid"
    dy0: Callable | None = None

    def __post_init__(self):
        for name in ("M", "M0", "M1", "Q", "R"):
            object.__setattr__(self, name, _sym(name, getattr(self, name)))
        psd_sqrt(self.M)
        if np.linalg.eigvalsh(self.Q)[0] <= 0:
            raise SingularWeight("Q must be positive definite")
        if np.linalg.eigvalsh(self.R)[-1] >= 0:
            raise SingularWeight("R must be negative definite")
        p, m, n = self.p, self.m, self.n
        shapes = {"M": self.M, "M0": self.M0, "M1": self.M1}
        for name, X in shapes.items():
            if X.shape != (p, p):
                raise DimensionMismatch(f"{name} must be {p}x{p}")
        t = self.t0
        if self._kernel(self.A, t, t).shape[-2:] != (p, p):
            raise DimensionMismatch("A must be p x p")
        if self._kernel(self.C, t, t).shape[-2] != p:
            raise DimensionMismatch("C must have p rows")
        if self.Q.shape != (m, m) or self.R.shape != (n, n):
            raise DimensionMismatch("Q and R must match the control dimensions")
        lo, hi = self.t1_bracket
        if not self.t0 < lo < hi:
            raise ValueError("t1_bracket must satisfy t0 < t_lo < t_hi")
        if self.dy0 is None and not hasattr(self.y0, "derivative"):
            raise ValueError("y0 needs a derivative (pass dy0)")

    @staticmethod
    def _kernel(K, t, s=None) -> np.ndarray:
        out = np.asarray(K(t) if s is None else K(t, s), dtype=float)
        return out

    @property
    def p(self) -> int:
        return self.M.shape[0]

    @property
    def m(self) -> int:
        return self._kernel(self.B, self.t0, self.t0).shape[-1]

    @property
    def n(self) -> int:
        return self._kernel(self.C, self.t0, self.t0).shape[-1]

    def grid(self, t1: float) -> TimeGrid:
        return make_grid(self.t0, t1, self.n_nodes, self.rule)

    def y0_values(self, t) -> np.ndarray:
        v = self._kernel(self.y0, np.asarray(t, float))
        return v.reshape(np.shape(t) + (self.p,))

    def y0_rate(self, t: float) -> np.ndarray:
        d = self.dy0(t) if self.dy0 is not None else self.y0.derivative(t)
        return np.asarray(d, float).reshape(self.p)

    def kernel_table(self, K, nodes: np.ndarray) -> np.ndarray:
        T, S = np.meshgrid(nodes, nodes, indexing="ij")
        return self._kernel(K, T, S)

    @cached_property
    def capture_direction(self) -> np.ndarray | None:
        """Unit eigenvector of a rank-one ``M`` (sign fixed), ``None`` otherwise."""
        lam, V = np.linalg.eigh(self.M)
        if np.sum(lam > PSD_TOL * max(1.0, lam[-1])) != 1:
            return None
        e = V[:, -1]
        return e if e[np.argmax(np.abs(e))] > 0 else -e

    @property
    def M_rank(self) -> int:
        lam = np.linalg.eigvalsh(self.M)
        return int(np.sum(lam > PSD_TOL * max(1.0, abs(lam[-1]))))


@dataclass(frozen=True)
class TerminalState:
    t1: float
    Y: np.ndarray
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    PsiCap: np.ndarray
    omega: float


@dataclass
class PursuitSolution:
    terminal: TerminalState
    grid: TimeGrid
    psi: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray
    y_star: np.ndarray
    residuals: dict = field(default_factory=dict)
    converged: bool = False
    inner_iterations: int = 0
    outer_evaluations: int = 0


@dataclass(frozen=True)
class PursuitSolverConfig:
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 100
    scan_points: int = 9
    xtol: float = 1e-12
    capture_tol: float = 1e-6


# ------------------------------------------------------------ multipliers

def capture_residual(problem: PursuitProblem, y_t1) -> float:
    y = np.asarray(y_t1, float).reshape(problem.p)
    return float(0.5 * y @ problem.M @ y)


def running_cost_at(problem: PursuitProblem, Y, U, V) -> float:
    return float(0.5 * (Y @ problem.M1 @ Y + U @ problem.Q @ U + V @ problem.R @ V))


def big_psi(problem: PursuitProblem, terminal: TerminalState, tol: float = TRANSVERSALITY_TOL) -> np.ndarray:
    """Closed-form multiplier: a scalar times the covector ``Y'(M + M0)``."""
    Y, U, V, W = terminal.Y, terminal.U, terminal.V, terminal.W
    den = Y @ problem.M @ W
    if abs(den) <= tol:
        raise TransversalityViolated(f"Y'MW = {den:.3e} vanishes")
    c = Y @ problem.M0 @ W + running_cost_at(problem, Y, U, V)
    return -(c / den) * (Y @ (problem.M + problem.M0))


def eliminate_multipliers(grad_phi, phi_t1, grad_F, G, W, *, F_t1: float = 0.0,
                          tol: float = TRANSVERSALITY_TOL) -> tuple[float, np.ndarray]:
    """``omega`` and ``Psi`` from the capture condition and the terminal Hamiltonian equation.

    ``omega = -(grad_F W + F_t1 + G) / (grad_phi W + phi_t1)`` and
    ``Psi = omega grad_phi + grad_F``.
    """
    grad_phi = np.asarray(grad_phi, float)
    grad_F = np.asarray(grad_F, float)
    W = np.asarray(W, float)
    dphi = float(grad_phi @ W + phi_t1)
    if abs(dphi) <= tol:
        raise TransversalityViolated(f"Eulerian derivative of the capture criterion is {dphi:.3e}")
    omega = -(float(grad_F @ W) + F_t1 + G) / dphi
    return omega, omega * grad_phi + grad_F


def _capture_normal(problem: PursuitProblem, Y, W, capture_tol: float) -> np.ndarray:
    if problem.capture_direction is not None:
        return problem.M @ W
    MY = problem.M @ Y
    if np.linalg.norm(psd_sqrt(problem.M) @ Y) <= capture_tol * max(1.0, np.linalg.norm(Y)):
        return problem.M @ W
    return MY


def capture_multipliers(problem: PursuitProblem, Y, U, V, W, capture_tol: float = 1e-6,
                        tol: float = TRANSVERSALITY_TOL) -> tuple[float, np.ndarray]:
    """Regularized ``(omega, Psi)``; well defined at capture where ``Y'MW = 0``.

    ``Psi = -c n' / (n'W) + Y'M0`` with ``c = Y'M0W + G(t1)``; ``omega`` is
    reported as the scalar ``-c / (n'W)``.
    """
    Y, U, V, W = (np.asarray(x, float) for x in (Y, U, V, W))
    c = float(Y @ problem.M0 @ W) + running_cost_at(problem, Y, U, V)
    base = Y @ problem.M0
    if abs(c) <= tol:
        return 0.0, base
    nvec = _capture_normal(problem, Y, W, capture_tol)
    den = float(nvec @ W)
    if abs(den) <= tol * max(1.0, np.linalg.norm(nvec) * np.linalg.norm(W)):
        raise TransversalityViolated(f"capture is tangential: n'W = {den:.3e}")
    omega = -c / den
    return omega, omega * nvec + base


# ------------------------------------------------------------ discretization

def _fd3(f0, f1, f2, h):
    return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)


class Discretization:
    """All tabulated data for one candidate capture time.

    The state transform is built on a grid extended by two steps past ``t1``
    so that ``t1``-derivatives of ``y1``, ``B1`` and ``C1`` can be taken by
    one-sided differences; by causality the first ``N`` rows coincide with
    the transform on ``[t0, t1]``.
    """

    def __init__(self, problem: PursuitProblem, t1: float):
        self.problem = problem
        self.t1 = float(t1)
        self.grid = problem.grid(t1)
        g = self.grid
        N = g.n
        self.ext = make_grid(g.t0, g.t1 + 2 * g.h, N + 2, g.rule)
        nodes = self.ext.nodes
        self.Ax = problem.kernel_table(problem.A, nodes)
        self.Bx = problem.kernel_table(problem.B, nodes)
        self.Cx = problem.kernel_table(problem.C, nodes)
        self.y0x = problem.y0_values(nodes)
        self.A = self.Ax[:N, :N]
        self.B = self.Bx[:N, :N]
        self.C = self.Cx[:N, :N]
        self.y0 = self.y0x[:N]
        trx = transform(self.y0x, self.Ax, self.Bx, self.Cx, self.ext)
        self.trx = trx
        self.y1 = trx.y1[:N]
        self.B1 = trx.B1[:N, :N]
        self.C1 = trx.C1[:N, :N]

    @cached_property
    def transform(self) -> ResolventTransform:
        x = self.trx
        N = self.grid.n
        return ResolventTransform(self.y1, self.B1, self.C1, x.S[:N, :N], self.grid)

    # terminal quantities --------------------------------------------------
    def terminal_controls(self, Psi):
        pr = self.problem
        k = self.grid.n - 1
        U = -np.linalg.solve(pr.Q, self.B[k, k].T @ Psi)
        V = -np.linalg.solve(pr.R, self.C[k, k].T @ Psi)
        return U, V

    def terminal_state(self, u, v):
        g = self.grid
        k = g.n - 1
        w = g.cumulative[k]
        return self.y1[k] + np.einsum("j,jab,jb->a", w, self.B1[k], u) + np.einsum("j,jab,jb->a", w, self.C1[k], v)

    def terminal_rate(self, u, v, U, V):
        g = self.grid
        N = g.n
        h = g.h
        x = self.trx
        dy1 = self.problem.y0_rate(self.t1) + _fd3(*(x.y1[N - 1:N + 2] - self.y0x[N - 1:N + 2]), h)
        dB1 = _fd3(x.B1[N - 1, :N], x.B1[N, :N], x.B1[N + 1, :N], h)
        dC1 = _fd3(x.C1[N - 1, :N], x.C1[N, :N], x.C1[N + 1, :N], h)
        w = g.cumulative[N - 1]
        return (dy1 + self.B[N - 1, N - 1] @ U + self.C[N - 1, N - 1] @ V
                + np.einsum("j,jab,jb->a", w, dB1, u) + np.einsum("j,jab,jb->a", w, dC1, v))

    # linear maps ----------------------------------------------------------
    @cached_property
    def control_maps(self):
        """``(K, K_Psi)`` with node-major ``[u_k, v_k] = K psi + K_Psi Psi``."""
        pr = self.problem
        g = self.grid
        N, p, m, n = g.n, pr.p, pr.m, pr.n
        Qi = np.linalg.inv(pr.Q)
        Ri = np.linalg.inv(pr.R)
        d = m + n
        K = np.zeros((N, d, N, p))
        T = g.tail
        K[:, :m] = -np.einsum("ki,ab,ikcb->kaic", T, Qi, self.B)
        K[:, m:] = -np.einsum("ki,ab,ikcb->kaic", T, Ri, self.C)
        KP = np.zeros((N, d, p))
        KP[:, :m] = -np.einsum("ab,kcb->kac", Qi, self.B[N - 1])
        KP[:, m:] = -np.einsum("ab,kcb->kac", Ri, self.C[N - 1])
        return K.reshape(N * d, N * p), KP.reshape(N * d, p)

    @cached_property
    def backward_operator(self) -> np.ndarray:
        """Block ``[k, i] = T[k, i] A(t_i, t_k)'`` acting on column costates."""
        g = self.grid
        N, p = g.n, self.problem.p
        op = np.einsum("ki,ikba->kaib", g.tail, self.A)
        return op.reshape(N * p, N * p)

    @cached_property
    def psi_affine(self):
        """``(psi_0, psi_Psi)`` with ``psi = psi_0 + psi_Psi @ Psi`` (flattened node-major)."""
        pr = self.problem
        N, p = self.grid.n, pr.p
        K, KP = self.control_maps
        Gm = self.transform.control_matrix()
        M1b = np.kron(np.eye(N), pr.M1)
        lhs = np.eye(N * p) - self.backward_operator - M1b @ Gm @ K
        A_last = np.transpose(self.A[N - 1], (0, 2, 1)).reshape(N * p, p)
        rhs = np.column_stack([M1b @ self.y1.reshape(-1), M1b @ Gm @ KP + A_last])
        if np.linalg.cond(lhs) > _COND_LIMIT:
            raise SingularSystem("coupled costate system is singular")
        X = np.linalg.solve(lhs, rhs)
        return X[:, 0], X[:, 1:]

    def evaluate(self, Psi):
        """Everything the inner pass produces from a given ``Psi``."""
        pr = self.problem
        N, p, m = self.grid.n, pr.p, pr.m
        Psi = np.asarray(Psi, float).reshape(p)
        x0, XP = self.psi_affine
        psi = (x0 + XP @ Psi).reshape(N, p)
        K, KP = self.control_maps
        w = (K @ psi.reshape(-1) + KP @ Psi).reshape(N, -1)
        u, v = w[:, :m], w[:, m:]
        y = self.transform.state(u, v)
        U, V = self.terminal_controls(Psi)
        Y = y[N - 1]
        W = self.terminal_rate(u, v, U, V)
        return dict(psi=psi, u=u, v=v, y=y, Y=Y, U=U, V=V, W=W)


def _disc(problem, grid, t1) -> Discretization:
    d = Discretization(problem, t1)
    if grid is not None and (grid.n != d.grid.n or not np.allclose(grid.nodes, d.grid.nodes, rtol=0, atol=1e-12)):
        raise DimensionMismatch("grid does not match the problem's grid for this t1")
    return d


# ------------------------------------------------------------ public building blocks

def costate_forcing(problem: PursuitProblem, d: Discretization, PsiCap, y) -> np.ndarray:
    N = d.grid.n
    y = np.asarray(y, float).reshape(N, problem.p)
    return y @ problem.M1 + np.einsum("a,kab->kb", np.asarray(PsiCap, float), d.A[N - 1])


def costate_solve(problem: PursuitProblem, grid: TimeGrid, t1: float, PsiCap, y) -> np.ndarray:
    """Direct backward solve of ``psi = y'M1 + Psi A(t1, .) + int psi A``."""
    d = _disc(problem, grid, t1)
    return solve_volterra_backward(costate_forcing(problem, d, PsiCap, y), d.A, d.grid)


def costate_representation(problem: PursuitProblem, grid: TimeGrid, t1: float, PsiCap, y,
                           exact_discrete: bool = True) -> np.ndarray:
    """Costate through the backward resolvent of ``A``."""
    d = _disc(problem, grid, t1)
    phi = costate_forcing(problem, d, PsiCap, y)
    return backward_representation(phi, backward_resolvent(d.A, d.grid, exact_discrete), d.grid)


def controls_from_costate(problem: PursuitProblem, grid: TimeGrid, psi, PsiCap):
    """Saddle controls ``u = -Q^-1 [int psi B + Psi B(t1, .)]'`` and the ``R``, ``C`` analogue."""
    try:
        Qi, Ri = np.linalg.inv(problem.Q), np.linalg.inv(problem.R)
    except np.linalg.LinAlgError as exc:
        raise SingularWeight(str(exc)) from exc
    d = _disc(problem, grid, grid.t1)
    g = d.grid
    N = g.n
    psi = np.asarray(psi, float).reshape(N, problem.p)
    Psi = np.asarray(PsiCap, float).reshape(problem.p)
    su = np.einsum("ki,ia,ikab->kb", g.tail, psi, d.B) + np.einsum("a,kab->kb", Psi, d.B[N - 1])
    sv = np.einsum("ki,ia,ikab->kb", g.tail, psi, d.C) + np.einsum("a,kab->kb", Psi, d.C[N - 1])
    return -su @ Qi.T, -sv @ Ri.T


def coupled_costate_solve(problem: PursuitProblem, grid: TimeGrid, t1: float, PsiCap) -> np.ndarray:
    """Costate with the state eliminated; a dense linear solve with ``Psi`` as parameter."""
    d = _disc(problem, grid, t1)
    x0, XP = d.psi_affine
    return (x0 + XP @ np.asarray(PsiCap, float).reshape(problem.p)).reshape(d.grid.n, problem.p)


def terminal_residuals(problem: PursuitProblem, grid: TimeGrid, t1: float, terminal: TerminalState,
                       u_star, v_star, y_star) -> dict[str, np.ndarray]:
    """Defects of the four terminal consistency equations (``U``, ``V``, ``Y``, ``W``)."""
    d = _disc(problem, grid, t1)
    N = d.grid.n
    u = np.asarray(u_star, float).reshape(N, problem.m)
    v = np.asarray(v_star, float).reshape(N, problem.n)
    U, V = d.terminal_controls(terminal.PsiCap)
    return {
        "U": terminal.U - U,
        "V": terminal.V - V,
        "Y": terminal.Y - d.terminal_state(u, v),
        "W": terminal.W - d.terminal_rate(u, v, terminal.U, terminal.V),
    }


# ------------------------------------------------------------ solver

def _inner(problem: PursuitProblem, t1: float, cfg: PursuitSolverConfig):
    d = Discretization(problem, t1)
    Psi = np.zeros(problem.p)
    delta = np.inf
    for it in range(1, cfg.max_iter + 1):
        st = d.evaluate(Psi)
        omega, target = capture_multipliers(problem, st["Y"], st["U"], st["V"], st["W"], cfg.capture_tol)
        delta = float(np.max(np.abs(target - Psi), initial=0.0))
        Psi = Psi + cfg.damping * (target - Psi)
        if delta < cfg.tol * max(1.0, float(np.max(np.abs(Psi), initial=0.0))):
            st = d.evaluate(Psi)
            omega, Psi = capture_multipliers(problem, st["Y"], st["U"], st["V"], st["W"], cfg.capture_tol)
            st = d.evaluate(Psi)
            return d, st, Psi, omega, it
    raise InnerNoConvergence(f"inner fixed point at t1={t1:.6g} did not converge", delta, cfg.max_iter)


def capture_signal(problem: PursuitProblem, Y) -> float:
    """Signed capture distance for rank-one ``M``, else ``|M^{1/2} Y|``."""
    e = problem.capture_direction
    if e is not None:
        return float(np.sqrt(np.linalg.eigvalsh(problem.M)[-1]) * (e @ Y))
    return float(np.linalg.norm(psd_sqrt(problem.M) @ Y))


def solve_pursuit(problem: PursuitProblem, config: PursuitSolverConfig | None = None) -> PursuitSolution:
    """Capture time, terminal state, costate and saddle controls of the capture game."""
    cfg = config or PursuitSolverConfig()
    lo, hi = problem.t1_bracket
    calls = {"n": 0}
    cache: dict[float, tuple] = {}

    def inner(t1):
        t1 = float(t1)
        if t1 not in cache:
            calls["n"] += 1
            cache[t1] = _inner(problem, t1, cfg)
        return cache[t1]

    def sigma(t1):
        return capture_signal(problem, inner(t1)[1]["Y"])

    if problem.M_rank == 0:
        t1 = lo
    elif problem.M_rank == 1:
        ts = np.linspace(lo, hi, cfg.scan_points)
        vals = [sigma(t) for t in ts]
        t1 = None
        for a, b, fa, fb in zip(ts[:-1], ts[1:], vals[:-1], vals[1:]):
            if fa == 0.0:
                t1 = a
                break
            if fa * fb < 0:
                t1 = brentq(sigma, a, b, xtol=cfg.xtol, rtol=4 * np.finfo(float).eps)
                break
        if t1 is None:
            if vals[-1] == 0.0:
                t1 = hi
            else:
                raise CaptureNotBracketed("capture signal keeps one sign over the bracket",
                                          {"t_lo": vals[0], "t_hi": vals[-1]})
    elif sigma(lo) <= cfg.capture_tol * max(1.0, np.linalg.norm(inner(lo)[1]["Y"])):
        t1 = lo  # already captured: earliest root
    else:
        res = minimize_scalar(sigma, bounds=(lo, hi), method="bounded", options={"xatol": cfg.xtol})
        Y = inner(res.x)[1]["Y"]
        if res.fun > cfg.capture_tol * max(1.0, np.linalg.norm(Y)):
            raise CaptureNotBracketed("no capture inside the bracket",
                                      {"t_lo": sigma(lo), "t_hi": sigma(hi), "min": float(res.fun)})
        t1 = float(res.x)

    d, st, Psi, omega, its = inner(t1)
    term = TerminalState(float(t1), st["Y"], st["U"], st["V"], st["W"], Psi, float(omega))
    sol = PursuitSolution(term, d.grid, st["psi"], st["u"], st["v"], st["y"],
                          inner_iterations=its, outer_evaluations=calls["n"])
    sol.residuals = residual_suite(problem, sol, cfg.capture_tol)
    sol.converged = all(val < 1e-6 for key, val in sol.residuals.items() if key != "control_gap")
    return sol


def residual_suite(problem: PursuitProblem, sol: PursuitSolution, capture_tol: float = 1e-6) -> dict[str, float]:
    """Every first-order condition re-evaluated from the problem data and the returned trajectories.

    ``control_gap`` (``|u(t1) - U|``) is a discretization diagnostic, not a
    condition: the nodal control at ``t1`` still sees the last quadrature
    cell of the costate integral.
    """
    g = sol.grid
    t1 = g.t1
    term = sol.terminal
    Psi = term.PsiCap
    mx = lambda a: float(np.max(np.abs(a), initial=0.0))  # noqa: E731
    psi_direct = costate_solve(problem, g, t1, Psi, sol.y_star)
    u, v = controls_from_costate(problem, g, sol.psi, Psi)
    y_direct = solve_volterra_linear(problem.y0_values(g.nodes), problem.kernel_table(problem.A, g.nodes),
                                     problem.kernel_table(problem.B, g.nodes),
                                     problem.kernel_table(problem.C, g.nodes), sol.u_star, sol.v_star, grid=g)
    _, Psi_chk = capture_multipliers(problem, term.Y, term.U, term.V, term.W, capture_tol)
    tr = terminal_residuals(problem, g, t1, term, sol.u_star, sol.v_star, sol.y_star)
    out = {
        "capture": float(np.linalg.norm(psd_sqrt(problem.M) @ term.Y)) / max(1.0, float(np.linalg.norm(term.Y))),
        "psi_cap": mx(Psi - Psi_chk),
        "costate": mx(sol.psi - psi_direct),
        "costate_representation": mx(costate_representation(problem, g, t1, Psi, sol.y_star) - psi_direct),
        "stationarity": max(mx(sol.u_star - u), mx(sol.v_star - v)),
        "trajectory": mx(sol.y_star - y_direct),
        "coupled": mx(coupled_costate_solve(problem, g, t1, Psi) - sol.psi),
        "capture_condition": abs(float(Psi @ term.W) + running_cost_at(problem, term.Y, term.U, term.V)),
    }
    out.update({f"terminal_{k}": mx(val) for k, val in tr.items()})
    out["control_gap"] = max(mx(sol.u_star[-1] - term.U), mx(sol.v_star[-1] - term.V))
    return out


# ------------------------------------------------------------ general form

@dataclass(frozen=True)
class GeneralPursuitData:
    """General model: ``f(t, s, y, u, v)``, terminal cost ``F(t1, Y, U, V)``,
    running cost ``G(t, y, u, v)`` and capture criterion ``Phi(t1, Y, U, V)``."""

    f: Callable
    F: Callable
    G: Callable
    Phi: Callable


def general_hamiltonian(data: GeneralPursuitData, grid: TimeGrid, k: int, y, u, v, Y, U, V,
                        psi, PsiCap, omega) -> float:
    """Hamiltonian at node ``k`` of a grid ending at ``t1``; tail integral by tail weights."""
    t, t1 = grid.nodes[k], grid.t1
    val = data.F(t1, Y, U, V) + data.G(t, y, u, v) + omega * data.Phi(t1, Y, U, V)
    val += float(np.asarray(PsiCap) @ data.f(t1, t, y, u, v))
    for i in range(k, grid.n):
        val += grid.tail[k, i] * float(np.asarray(psi[i]) @ data.f(grid.nodes[i], t, y, u, v))
    return float(val)


def example_data(problem: PursuitProblem) -> GeneralPursuitData:
    """The capture game written in the general form."""
    pr = problem

    def f(t, s, y, u, v):
        return (pr._kernel(pr.A, t, s) @ y + pr._kernel(pr.B, t, s) @ u + pr._kernel(pr.C, t, s) @ v)

    return GeneralPursuitData(
        f=f,
        F=lambda t1, Y, U, V: 0.5 * Y @ pr.M0 @ Y,
        G=lambda t, y, u, v: 0.5 * (y @ pr.M1 @ y + u @ pr.Q @ u + v @ pr.R @ v),
        Phi=lambda t1, Y, U, V: 0.5 * Y @ pr.M @ Y,
    )


__all__ = [
    "PursuitProblem", "TerminalState", "PursuitSolution", "PursuitSolverConfig", "Discretization",
    "capture_residual", "big_psi", "eliminate_multipliers", "capture_multipliers", "costate_solve",
    "costate_representation", "controls_from_costate", "coupled_costate_solve", "terminal_residuals",
    "solve_pursuit", "residual_suite", "general_hamiltonian", "example_data", "GeneralPursuitData",
    "capture_signal", "psd_sqrt", "KernelSpec",
]
