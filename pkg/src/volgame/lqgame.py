"""Linear-quadratic Volterra games solved through the saddle machinery of quadform.

The state is eliminated with the control-explicit transform, turning the
performance functional into ``E(u, v) + Omega``, a block quadratic form in the
controls plus a control-independent constant. The kernels of ``E`` are built
by composing the discrete operators (transform, quadrature, weight matrices)
rather than by re-quadraturing the continuous kernel formulas, so the
assembled form agrees with :func:`evaluate_J` to round-off on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quadform as qf
from .errors import AsymmetryDetected, DimensionMismatch, NotCertified
from .grid import TimeGrid, as_values
from .volterra import solve_volterra_linear, transform


@dataclass(frozen=True)
class LQGameProblem:
    """State ``y = y0 + int [A y + B u + C v]`` and cost

    ``J = 1/2 y(t1)' P0 y(t1) + 1/2 int [y'P1y + u'Q1u + v'R1v]
    + 1/2 int int [y'P2y + u'Q2u + v'R2v]``.

    Omitted weight kernels default to zero.
    """

    grid: TimeGrid
    y0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    P0: np.ndarray | None = None
    P1: np.ndarray | None = None
    P2: np.ndarray | None = None
    Q1: np.ndarray | None = None
    Q2: np.ndarray | None = None
    R1: np.ndarray | None = None
    R2: np.ndarray | None = None

    def __post_init__(self):
        g = self.grid
        y0 = np.asarray(self.y0, dtype=float)
        if y0.ndim == 1:
            y0 = y0[:, None]
        object.__setattr__(self, "y0", y0)
        for name in ("A", "B", "C"):
            object.__setattr__(self, name, as_values(getattr(self, name), 2, g))
        N, p, m, n = g.n, self.p, self.m, self.n
        if self.A.shape[2:] != (p, p) or self.B.shape[2] != p or self.C.shape[2] != p:
            raise DimensionMismatch("state kernels do not match the state dimension")
        defaults = {
            "P0": np.zeros((p, p)),
            "P1": np.zeros((N, p, p)), "P2": np.zeros((N, N, p, p)),
            "Q1": np.zeros((N, m, m)), "Q2": np.zeros((N, N, m, m)),
            "R1": np.zeros((N, n, n)), "R2": np.zeros((N, N, n, n)),
        }
        for name, zero in defaults.items():
            val = getattr(self, name)
            if val is None:
                val = zero
            elif name == "P0":
                val = np.atleast_2d(np.asarray(val, dtype=float))
            else:
                val = as_values(val, zero.ndim - 2, g)
            if val.shape != zero.shape:
                raise DimensionMismatch(f"{name} has shape {val.shape}, expected {zero.shape}")
            object.__setattr__(self, name, val)
        if np.max(np.abs(self.P0 - self.P0.T), initial=0.0) > 1e-12 * max(1.0, np.abs(self.P0).max()):
            raise qf.NotSymmetric("P0 must be symmetric")

    @property
    def p(self) -> int:
        return self.y0.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[3]

    @property
    def n(self) -> int:
        return self.C.shape[3]


@dataclass(frozen=True)
class LQSolution:
    u_star: np.ndarray
    v_star: np.ndarray
    y_star: np.ndarray
    value: float
    report: qf.DefinitenessReport


def _controls(problem: LQGameProblem, u, v):
    N = problem.grid.n
    u = np.zeros((N, problem.m)) if u is None else np.asarray(u, float).reshape(N, problem.m)
    v = np.zeros((N, problem.n)) if v is None else np.asarray(v, float).reshape(N, problem.n)
    return u, v


def evaluate_J(problem: LQGameProblem, u=None, v=None) -> float:
    """Discrete performance functional along the Volterra solve driven by ``(u, v)``."""
    g = problem.grid
    u, v = _controls(problem, u, v)
    y = solve_volterra_linear(problem.y0, problem.A, problem.B, problem.C, u, v, grid=g)
    wt = g.weights
    term = 0.5 * y[-1] @ problem.P0 @ y[-1]
    for x, K1, K2 in ((y, problem.P1, problem.P2), (u, problem.Q1, problem.Q2), (v, problem.R1, problem.R2)):
        term += 0.5 * np.einsum("i,ia,iab,ib->", wt, x, K1, x)
        term += 0.5 * np.einsum("i,j,ia,ijab,jb->", wt, wt, x, K2, x)
    return float(term)


def omega_offset(problem: LQGameProblem) -> float:
    """Control-independent part of ``J`` (its value at ``u = v = 0``)."""
    return evaluate_J(problem)


def _state_weight_matrix(problem: LQGameProblem) -> np.ndarray:
    g = problem.grid
    N, p = g.n, problem.p
    wt = g.weights
    Pm = (wt[:, None] * wt[None, :])[:, :, None, None] * problem.P2
    idx = np.arange(N)
    Pm[idx, idx] += wt[:, None, None] * problem.P1
    Pm[N - 1, N - 1] += problem.P0
    return Pm.transpose(0, 2, 1, 3).reshape(N * p, N * p)


def assemble_form(problem: LQGameProblem, sym_tol: float = 1e-12) -> qf.BlockQuadraticForm:
    """Quadratic form in ``(u, v)`` equal to ``J - Omega``.

    ``K11 = Q1``, ``K22 = R1``, ``K12 = 0``; the double-integral kernels and the
    linear terms collect every path through which the controls reach the state.
    """
    g = problem.grid
    N, m, n = g.n, problem.m, problem.n
    d = m + n
    wt = g.weights
    tr = transform(problem.y0, problem.A, problem.B, problem.C, g)
    G = tr.control_matrix()
    P = _state_weight_matrix(problem)
    H = (G.T @ P @ G).reshape(N, d, N, d).transpose(0, 2, 1, 3)
    L = H / (wt[:, None] * wt[None, :])[:, :, None, None]
    L[:, :, :m, :m] += problem.Q2
    L[:, :, m:, m:] += problem.R2
    q = (G.T @ P @ tr.y1.reshape(-1)).reshape(N, d) / wt[:, None]

    Lt = np.transpose(L, (1, 0, 3, 2))
    defect = np.max(np.abs(L - Lt), initial=0.0)
    if defect > sym_tol * max(1.0, np.abs(L).max()):
        raise AsymmetryDetected(f"assembled double-integral kernel is asymmetric by {defect:.3e}")
    L = 0.5 * (L + Lt)
    return qf.BlockQuadraticForm(
        K11=problem.Q1,
        K22=problem.R1,
        K12=np.zeros((N, m, n)),
        L11=L[:, :, :m, :m],
        L22=L[:, :, m:, m:],
        L12=L[:, :, :m, m:],
        q1=q[:, :m],
        q2=q[:, m:],
        grid=g,
    )


@dataclass(frozen=True)
class FormConstants:
    """Clamped constants for the single, double and joint terms, with raw eigenvalues.

    Iterating yields the three clamped values, so
    ``single, double, joint = coercivity_constants(...)`` works.
    """

    single: float
    double: float
    joint: float
    raw_single: float
    raw_double: float
    raw_joint: float

    def __iter__(self):
        return iter((self.single, self.double, self.joint))


def coercivity_constants(kernel1, kernel2, grid: TimeGrid) -> FormConstants:
    """Smallest eigenvalues of the discretized single, double and combined forms, clamped at 0."""
    K = as_values(kernel1, 1, grid)
    L = as_values(kernel2, 2, grid)
    zeroK = np.zeros_like(K)
    zeroL = np.zeros_like(L)
    raw = (
        float(qf.joint_spectrum(K, zeroL, grid)[0]),
        float(qf.joint_spectrum(zeroK, L, grid)[0]),
        float(qf.joint_spectrum(K, L, grid)[0]),
    )
    for name, a in (("kernel1", qf._sym_defect1(K)), ("kernel2", qf._sym_defect2(L))):
        if a > 1e-10 * qf._scale(K, L):
            raise qf.NotSymmetric(f"{name} is not symmetric")
    return FormConstants(*(max(r, 0.0) for r in raw), *raw)


def accretivity_constants(kernel1, kernel2, grid: TimeGrid) -> FormConstants:
    """Accretivity constants; identical to the coercivity constants of the negated pair."""
    K = as_values(kernel1, 1, grid)
    L = as_values(kernel2, 2, grid)
    return coercivity_constants(-K, -L, grid)


def solve_lq_game(problem: LQGameProblem, override: bool = False,
                  tol: float = qf.DEFINITENESS_TOL) -> LQSolution:
    """Open-loop saddle controls of the LQ Volterra game."""
    form = assemble_form(problem)
    report = qf.certify(form, tol)
    if not report.certified and not override:
        raise NotCertified("assembled form fails the joint definiteness test", report)
    w = qf.saddle_point(form, override=True)
    u, v = w.w1, w.w2
    y = solve_volterra_linear(problem.y0, problem.A, problem.B, problem.C, u, v, grid=problem.grid)
    return LQSolution(u, v, y, evaluate_J(problem, u, v), report)
