"""Games that are quadratic in the controls and nonlinear in the state.

State:  ``y(t) = y0(t) + int_{t0}^t [f0 + F1 u + F2 v](t, s, y(s)) ds``.
Cost:   ``J = int [g0 + g1 u + g2 v + 1/2 u'G11u + u'G12v + 1/2 v'G22v](t, y(t)) dt``.

Discretization. All integrals use the grid's cumulative weights ``Wc`` for the
state and the tail weights ``T[k, i] = w_i Wc[i, k] / w_k`` for the costate
integrals over ``[t, t1]``. With this pairing the nodal costate is the exact
gradient of the discrete cost, ``psi_k = (1 / w_k) dJ / dy0_k``, and the
control laws below are exact stationary points of the discrete Hamiltonian.

Model functions are plain callables with signatures

``f0(t, s, y) -> (p,)``, ``F1(t, s, y) -> (p, m)``, ``F2(t, s, y) -> (p, n)``,
``g0(t, y) -> float``, ``g1(t, y) -> (m,)``, ``g2(t, y) -> (n,)``,
``G11(t, y) -> (m, m)``, ``G12(t, y) -> (m, n)``, ``G22(t, y) -> (n, n)``.

The y-gradients go in ``gradients`` under the keys ``f0, F1, F2, g0, g1, g2,
G11, G12, G22``, with the differentiated state index last (``f0 -> (p, p)``,
``F1 -> (p, m, p)``, ``g0 -> (p,)``, ``g1 -> (m, p)``, ``G11 -> (m, m, p)``).
Missing entries fall back to central differences, and the result records it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (DimensionMismatch, NoConvergence, NotCertified, SingularG3,
                     SingularG11)
from .grid import TimeGrid
from .volterra import solve_volterra_backward

GRAD_KEYS = ("f0", "F1", "F2", "g0", "g1", "g2", "G11", "G12", "G22")
_COND_LIMIT = 1e12
_FD_STEP = 1e-6


@dataclass(frozen=True)
class LQCProblem:
    grid: TimeGrid
    y0: np.ndarray
    f0: Callable
    F1: Callable
    F2: Callable
    g0: Callable
    g1: Callable
    g2: Callable
    G11: Callable
    G12: Callable
    G22: Callable
    gradients: dict = field(default_factory=dict)

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float)
        if y0.ndim == 1:
            y0 = y0[:, None]
        if y0.shape[0] != self.grid.n:
            raise DimensionMismatch("y0 needs one value per grid node")
        object.__setattr__(self, "y0", y0)
        unknown = set(self.gradients) - set(GRAD_KEYS)
        if unknown:
            raise ValueError(f"unknown gradient keys {sorted(unknown)}")
        t, y = self.grid.t0, y0[0]
        m = np.asarray(self.G11(t, y)).shape[0]
        n = np.asarray(self.G22(t, y)).shape[0]
        object.__setattr__(self, "_dims", (y0.shape[1], m, n))

    @property
    def p(self) -> int:
        return self._dims[0]

    @property
    def m(self) -> int:
        return self._dims[1]

    @property
    def n(self) -> int:
        return self._dims[2]

    @property
    def analytic_gradients(self) -> bool:
        return all(k in self.gradients for k in GRAD_KEYS)

    def grad(self, key: str, *args) -> np.ndarray:
        """y-gradient of model function ``key``; central differences when not supplied."""
        if key in self.gradients:
            return np.asarray(self.gradients[key](*args), dtype=float)
        fn = getattr(self, key)
        *head, y = args
        y = np.asarray(y, dtype=float)
        cols = []
        for b in range(y.size):
            e = np.zeros_like(y)
            e[b] = _FD_STEP * max(1.0, abs(y[b]))
            cols.append((np.asarray(fn(*head, y + e), float) - np.asarray(fn(*head, y - e), float)) / (2 * e[b]))
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class CostatePair:
    y: np.ndarray
    psi: np.ndarray
    converged: bool
    iterations: int
    residual: float
    gradient_source: str = "analytic"


def _node(problem: LQCProblem, t) -> int:
    return problem.grid.node_index(t)


def _local(problem: LQCProblem, t, y):
    G11 = np.atleast_2d(np.asarray(problem.G11(t, y), float))
    G12 = np.asarray(problem.G12(t, y), float).reshape(problem.m, problem.n)
    G22 = np.atleast_2d(np.asarray(problem.G22(t, y), float))
    g1 = np.asarray(problem.g1(t, y), float).reshape(problem.m)
    g2 = np.asarray(problem.g2(t, y), float).reshape(problem.n)
    return g1, g2, G11, G12, G22


def _tail_terms(problem: LQCProblem, k: int, y, psi):
    """``sum_i T[k, i] F1(t_i, t_k, y)' psi_i`` and the same for ``F2``."""
    g = problem.grid
    psi = np.asarray(psi, float).reshape(g.n, problem.p)
    a1 = np.zeros(problem.m)
    a2 = np.zeros(problem.n)
    tk = g.nodes[k]
    for i in range(k, g.n):
        w = g.tail[k, i]
        if w == 0.0 or not np.any(psi[i]):
            continue
        a1 += w * (psi[i] @ np.asarray(problem.F1(g.nodes[i], tk, y), float).reshape(problem.p, problem.m))
        a2 += w * (psi[i] @ np.asarray(problem.F2(g.nodes[i], tk, y), float).reshape(problem.p, problem.n))
    return a1, a2


def _inv(M: np.ndarray, err, what: str) -> np.ndarray:
    if np.linalg.cond(M) > _COND_LIMIT:
        raise err(f"{what} is singular")
    return np.linalg.inv(M)


def hamiltonian(problem: LQCProblem, t, y, u, v, psi) -> float:
    """Discrete Hamiltonian at node ``t``; the tail integral runs over nodes ``>= t``."""
    k = _node(problem, t)
    g = problem.grid
    y = np.asarray(y, float).reshape(problem.p)
    u = np.asarray(u, float).reshape(problem.m)
    v = np.asarray(v, float).reshape(problem.n)
    psi = np.asarray(psi, float).reshape(g.n, problem.p)
    g1, g2, G11, G12, G22 = _local(problem, t, y)
    val = float(problem.g0(t, y)) + g1 @ u + g2 @ v + 0.5 * u @ G11 @ u + u @ G12 @ v + 0.5 * v @ G22 @ v
    for i in range(k, g.n):
        s = g.nodes[i]
        f = (np.asarray(problem.f0(s, t, y), float).reshape(problem.p)
             + np.asarray(problem.F1(s, t, y), float).reshape(problem.p, problem.m) @ u
             + np.asarray(problem.F2(s, t, y), float).reshape(problem.p, problem.n) @ v)
        val += g.tail[k, i] * psi[i] @ f
    return float(val)


def _u_given_v(G11, G12, g1, a1, v):
    return -_inv(G11, SingularG11, "G11") @ (G12 @ v + g1 + a1)


def _v_given_u(G22, G12, g2, a2, u):
    return -_inv(G22, SingularG3, "G22") @ (G12.T @ u + g2 + a2)


def _lower_pair(g1, g2, G11, G12, G22, a1, a2):
    G11i = _inv(G11, SingularG11, "G11")
    G21 = G12.T
    G3 = G22 - G21 @ G11i @ G12
    rhs = G21 @ G11i @ (g1 + a1) - g2 - a2
    v = _inv(G3, SingularG3, "G3") @ rhs
    return _u_given_v(G11, G12, g1, a1, v), v


def _upper_pair(g1, g2, G11, G12, G22, a1, a2):
    G22i = _inv(G22, SingularG3, "G22")
    G3u = G11 - G12 @ G22i @ G12.T
    rhs = G12 @ G22i @ (g2 + a2) - g1 - a1
    u = _inv(G3u, SingularG11, "G11 - G12 G22^-1 G21") @ rhs
    return u, _v_given_u(G22, G12, g2, a2, u)


def _pointwise(problem, t, y, psi):
    k = _node(problem, t)
    y = np.asarray(y, float).reshape(problem.p)
    a1, a2 = _tail_terms(problem, k, y, psi)
    return _local(problem, t, y), a1, a2


def control_u_given_v(problem: LQCProblem, t, y, v, psi) -> np.ndarray:
    """Minimizer of the Hamiltonian in ``u`` for fixed ``v``."""
    (g1, g2, G11, G12, G22), a1, _ = _pointwise(problem, t, y, psi)
    return _u_given_v(G11, G12, g1, a1, np.asarray(v, float).reshape(problem.n))


def control_v_given_u(problem: LQCProblem, t, y, u, psi) -> np.ndarray:
    """Maximizer of the Hamiltonian in ``v`` for fixed ``u``."""
    (g1, g2, G11, G12, G22), _, a2 = _pointwise(problem, t, y, psi)
    return _v_given_u(G22, G12, g2, a2, np.asarray(u, float).reshape(problem.m))


def schur_G3(problem: LQCProblem, t, y) -> np.ndarray:
    """``G22 - G21 G11^-1 G12``."""
    _, _, G11, G12, G22 = _local(problem, t, np.asarray(y, float).reshape(problem.p))
    return G22 - G12.T @ _inv(G11, SingularG11, "G11") @ G12


def control_v_lower(problem: LQCProblem, t, y, psi) -> np.ndarray:
    """Critical point in ``v`` of the Hamiltonian after ``u`` has been minimized out."""
    local, a1, a2 = _pointwise(problem, t, y, psi)
    return _lower_pair(*local, a1, a2)[1]


def control_u_lower(problem: LQCProblem, t, y, psi) -> np.ndarray:
    local, a1, a2 = _pointwise(problem, t, y, psi)
    return _lower_pair(*local, a1, a2)[0]


def control_u_upper(problem: LQCProblem, t, y, psi) -> np.ndarray:
    """Critical point in ``u`` after ``v`` has been maximized out."""
    local, a1, a2 = _pointwise(problem, t, y, psi)
    return _upper_pair(*local, a1, a2)[0]


def control_v_upper(problem: LQCProblem, t, y, psi) -> np.ndarray:
    local, a1, a2 = _pointwise(problem, t, y, psi)
    return _upper_pair(*local, a1, a2)[1]


# ---------------------------------------------------------------- trajectories

class _Tables:
    """Kernel evaluations ``F(t_i, t_k, y_k)`` for ``i >= k`` along one state trajectory."""

    def __init__(self, problem: LQCProblem):
        N, p, m, n = problem.grid.n, problem.p, problem.m, problem.n
        self.f0 = np.zeros((N, N, p))
        self.F1 = np.zeros((N, N, p, m))
        self.F2 = np.zeros((N, N, p, n))

    def fill_column(self, problem, k, yk):
        g = problem.grid
        p, m, n = problem.p, problem.m, problem.n
        tk = g.nodes[k]
        for i in range(k, g.n):
            s = g.nodes[i]
            self.f0[i, k] = np.asarray(problem.f0(s, tk, yk), float).reshape(p)
            self.F1[i, k] = np.asarray(problem.F1(s, tk, yk), float).reshape(p, m)
            self.F2[i, k] = np.asarray(problem.F2(s, tk, yk), float).reshape(p, n)


def _dynamics(problem, t, s, y, u, v):
    return (np.asarray(problem.f0(t, s, y), float).reshape(problem.p)
            + np.asarray(problem.F1(t, s, y), float).reshape(problem.p, problem.m) @ u
            + np.asarray(problem.F2(t, s, y), float).reshape(problem.p, problem.n) @ v)


def forward_state(problem: LQCProblem, u, v, tol: float = 1e-14, max_iter: int = 200):
    """State trajectory for fixed nodal controls, plus the kernel tables along it.

    Each node needs a small fixed point for the diagonal quadrature term.
    """
    g = problem.grid
    N, p = g.n, problem.p
    u = np.asarray(u, float).reshape(N, problem.m)
    v = np.asarray(v, float).reshape(N, problem.n)
    Wc = g.cumulative
    tab = _Tables(problem)
    acc = problem.y0.copy()
    y = np.zeros((N, p))
    for k in range(N):
        tk = g.nodes[k]
        z = acc[k].copy()
        for it in range(max_iter):
            z_new = acc[k] + Wc[k, k] * _dynamics(problem, tk, tk, z, u[k], v[k])
            if np.max(np.abs(z_new - z)) <= tol * (1.0 + np.max(np.abs(z_new))):
                z = z_new
                break
            z = z_new
        else:
            raise NoConvergence(f"implicit state step did not converge at node {k}",
                                float(np.max(np.abs(z_new - z))), max_iter)
        y[k] = z
        tab.fill_column(problem, k, z)
        f = tab.f0[k + 1:, k] + tab.F1[k + 1:, k] @ u[k] + tab.F2[k + 1:, k] @ v[k]
        acc[k + 1:] += Wc[k + 1:, k, None] * f
    return y, tab


def running_cost(problem: LQCProblem, t, y, u, v) -> float:
    g1, g2, G11, G12, G22 = _local(problem, t, y)
    return float(problem.g0(t, y) + g1 @ u + g2 @ v + 0.5 * u @ G11 @ u + u @ G12 @ v + 0.5 * v @ G22 @ v)


def evaluate_lqc_J(problem: LQCProblem, u, v) -> float:
    """Discrete performance functional along the state driven by ``(u, v)``."""
    g = problem.grid
    u = np.asarray(u, float).reshape(g.n, problem.m)
    v = np.asarray(v, float).reshape(g.n, problem.n)
    y, _ = forward_state(problem, u, v)
    return float(sum(g.weights[k] * running_cost(problem, g.nodes[k], y[k], u[k], v[k]) for k in range(g.n)))


def costate(problem: LQCProblem, y, u, v) -> np.ndarray:
    """Backward costate ``psi = grad_y H`` along ``y`` with the controls held fixed."""
    g = problem.grid
    N, p, m, n = g.n, problem.p, problem.m, problem.n
    y = np.asarray(y, float).reshape(N, p)
    u = np.asarray(u, float).reshape(N, m)
    v = np.asarray(v, float).reshape(N, n)
    phi = np.zeros((N, p))
    M = np.zeros((N, N, p, p))
    for k in range(N):
        t, yk, uk, vk = g.nodes[k], y[k], u[k], v[k]
        phi[k] = (problem.grad("g0", t, yk).reshape(p)
                  + uk @ problem.grad("g1", t, yk).reshape(m, p)
                  + vk @ problem.grad("g2", t, yk).reshape(n, p)
                  + 0.5 * np.einsum("a,abc,b->c", uk, problem.grad("G11", t, yk).reshape(m, m, p), uk)
                  + np.einsum("a,abc,b->c", uk, problem.grad("G12", t, yk).reshape(m, n, p), vk)
                  + 0.5 * np.einsum("a,abc,b->c", vk, problem.grad("G22", t, yk).reshape(n, n, p), vk))
        for i in range(k, N):
            s = g.nodes[i]
            M[i, k] = (problem.grad("f0", s, t, yk).reshape(p, p)
                       + np.einsum("amb,m->ab", problem.grad("F1", s, t, yk).reshape(p, m, p), uk)
                       + np.einsum("anb,n->ab", problem.grad("F2", s, t, yk).reshape(p, n, p), vk))
    return solve_volterra_backward(phi, M, g)


def _controls(problem, y, tab, psi, side):
    g = problem.grid
    N = g.n
    pair = _lower_pair if side == "lower" else _upper_pair
    a1 = np.einsum("ki,ikam,ia->km", g.tail, tab.F1, psi)
    a2 = np.einsum("ki,ikan,ia->kn", g.tail, tab.F2, psi)
    u = np.zeros((N, problem.m))
    v = np.zeros((N, problem.n))
    for k in range(N):
        u[k], v[k] = pair(*_local(problem, g.nodes[k], y[k]), a1[k], a2[k])
    return u, v


def _check_definiteness(problem, y, mu):
    g = problem.grid
    for k in range(g.n):
        _, _, G11, _, G22 = _local(problem, g.nodes[k], y[k])
        lo = np.linalg.eigvalsh(0.5 * (G11 + G11.T))[0]
        hi = np.linalg.eigvalsh(0.5 * (G22 + G22.T))[-1]
        if lo < mu or hi > -mu:
            raise NotCertified(f"G11/G22 lose definiteness at node {k} "
                               f"(min eig G11 {lo:.3e}, max eig G22 {hi:.3e})",
                               {"node": k, "min_eig_G11": float(lo), "max_eig_G22": float(hi)})


def _solve_game(problem, side, damping, max_iter, tol, check):
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    g = problem.grid
    N, p = g.n, problem.p
    psi = np.zeros((N, p))
    u = np.zeros((N, problem.m))
    v = np.zeros((N, problem.n))
    residual = np.inf
    source = "analytic" if problem.analytic_gradients else "finite-difference"
    for it in range(1, max_iter + 1):
        y, tab = forward_state(problem, u, v)
        u_new, v_new = _controls(problem, y, tab, psi, side)
        psi_new = costate(problem, y, u_new, v_new)
        residual = max(
            float(np.max(np.abs(psi_new - psi))),
            float(np.max(np.abs(u_new - u), initial=0.0)),
            float(np.max(np.abs(v_new - v), initial=0.0)),
        )
        if not np.isfinite(psi_new).all():
            raise NoConvergence("fixed-point iteration diverged", float("inf"), it)
        psi = psi + damping * (psi_new - psi)
        u, v = _controls(problem, y, tab, psi, side)
        if residual < tol:
            y, tab = forward_state(problem, u, v)
            u, v = _controls(problem, y, tab, psi, side)
            if check:
                _check_definiteness(problem, y, 0.0)
            final = system_residual(problem, y, psi, u, v)
            return CostatePair(y, psi, True, it, final, source), u, v
    raise NoConvergence(f"{side} game fixed point not reached in {max_iter} iterations", residual, max_iter)


def system_residual(problem: LQCProblem, y, psi, u, v) -> float:
    """Max of the state, costate and control-law residuals, recomputed from scratch."""
    y_chk, _ = forward_state(problem, u, v)
    psi_chk = costate(problem, y, u, v)
    return float(max(np.max(np.abs(y_chk - y)), np.max(np.abs(psi_chk - psi))))


def solve_lower_game(problem: LQCProblem, damping: float = 0.5, max_iter: int = 200,
                     tol: float = 1e-8, check_definiteness: bool = True):
    """Damped Picard iteration for the lower game; returns ``(CostatePair, u, v)``."""
    return _solve_game(problem, "lower", damping, max_iter, tol, check_definiteness)


def solve_upper_game(problem: LQCProblem, damping: float = 0.5, max_iter: int = 200,
                     tol: float = 1e-8, check_definiteness: bool = True):
    """Mirror of :func:`solve_lower_game` with ``v`` maximized out first."""
    return _solve_game(problem, "upper", damping, max_iter, tol, check_definiteness)


def from_lq_problem(lq) -> LQCProblem:
    """View an LQ game without terminal or double-integral weights as an LQC game.

    ``P1`` becomes ``g0 = 1/2 y'P1y``. Nonzero ``P0``, ``P2``, ``Q2`` or ``R2``
    has no counterpart here and raises ``ValueError``.
    """
    for name in ("P0", "P2", "Q2", "R2"):
        if np.any(getattr(lq, name)):
            raise ValueError(f"{name} must vanish to express the LQ game in this form")
    g = lq.grid
    p, m, n = lq.p, lq.m, lq.n
    A, B, C = lq.A, lq.B, lq.C
    P1, Q1, R1 = lq.P1, lq.Q1, lq.R1
    ix = g.node_index
    zeros = {"F1": np.zeros((p, m, p)), "F2": np.zeros((p, n, p)), "g1": np.zeros((m, p)),
             "g2": np.zeros((n, p)), "G11": np.zeros((m, m, p)), "G12": np.zeros((m, n, p)),
             "G22": np.zeros((n, n, p))}
    grads = {k: (lambda *a, z=z: z) for k, z in zeros.items()}
    grads["f0"] = lambda t, s, y: A[ix(t), ix(s)]
    grads["g0"] = lambda t, y: P1[ix(t)] @ y
    return LQCProblem(
        grid=g, y0=lq.y0,
        f0=lambda t, s, y: A[ix(t), ix(s)] @ y,
        F1=lambda t, s, y: B[ix(t), ix(s)],
        F2=lambda t, s, y: C[ix(t), ix(s)],
        g0=lambda t, y: 0.5 * y @ P1[ix(t)] @ y,
        g1=lambda t, y: np.zeros(m),
        g2=lambda t, y: np.zeros(n),
        G11=lambda t, y: Q1[ix(t)],
        G12=lambda t, y: np.zeros((m, n)),
        G22=lambda t, y: R1[ix(t)],
        gradients=grads,
    )
