"""Quadratic functionals over discretized L^2, best responses and saddle points.

The functional of a control pair ``w = (w1, w2)`` is::

    E(w) = 1/2 int w^T K w + 1/2 int int w^T(x) L(x, y) w(y) + int q^T w

with block kernels ``K = [[K11, K12], [K21, K22]]`` and the same for ``L``.
Only ``K12`` and ``L12`` are stored: ``K21(x) = K12(x)^T`` and
``L21(x, y) = L12(y, x)^T``.

After Nystrom discretization with weights ``W`` the gradient of ``E`` with
respect to the nodal value ``w_i`` is ``W_i * r_i`` where

    r_i = K_i w_i + sum_j W_j L_ij w_j + q_i

is the stationarity residual. Joint definiteness of ``(K, L)`` is read off the
symmetric matrix ``blockdiag(K_i) + W^(1/2) L W^(1/2)``, which is similar to the
weighted discrete operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BasisNotOrthonormal,
    DimensionMismatch,
    NotCertified,
    NotSymmetric,
    SingularSystem,
)
from .grid import TimeGrid, as_values

DEFINITENESS_TOL = 1e-9
RESIDUAL_TOL = 1e-8
CONDITION_LIMIT = 1e12


def _sym_defect1(K: np.ndarray) -> float:
    return float(np.max(np.abs(K - np.swapaxes(K, -1, -2)), initial=0.0))


def _sym_defect2(L: np.ndarray) -> float:
    # L(x, y) = L(y, x)^T
    return float(np.max(np.abs(L - np.transpose(L, (1, 0, 3, 2))), initial=0.0))


def _scale(*arrays) -> float:
    return max([1.0] + [float(np.max(np.abs(a), initial=0.0)) for a in arrays])


@dataclass(frozen=True)
class BlockQuadraticForm:
    """Tabulated data ``(K, L, q)`` of a two-block quadratic functional.

    Kernels may be passed as :class:`~volgame.grid.Kernel1`/``Kernel2`` or raw
    arrays; they are stored as arrays of shape ``(n, m, m)``, ``(n, n, m, m)``
    and so on. Diagonal blocks must be symmetric in the block sense.
    """

    K11: np.ndarray
    K22: np.ndarray
    K12: np.ndarray
    L11: np.ndarray
    L22: np.ndarray
    L12: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    grid: TimeGrid
    sym_tol: float = 1e-10

    def __post_init__(self):
        g = self.grid
        for name in ("K11", "K22", "K12"):
            object.__setattr__(self, name, as_values(getattr(self, name), 1, g))
        for name in ("L11", "L22", "L12"):
            object.__setattr__(self, name, as_values(getattr(self, name), 2, g))
        for name in ("q1", "q2"):
            q = np.asarray(getattr(self, name), dtype=float)
            if q.ndim == 1:
                q = q[:, None]
            object.__setattr__(self, name, q)
        m, n = self.m, self.n
        expected = {
            "K11": (m, m), "K22": (n, n), "K12": (m, n),
            "L11": (m, m), "L22": (n, n), "L12": (m, n),
            "q1": (m,), "q2": (n,),
        }
        for name, shp in expected.items():
            a = getattr(self, name)
            if a.shape[a.ndim - len(shp):] != shp or a.shape[0] != g.n:
                raise DimensionMismatch(f"{name} has shape {a.shape}, expected trailing {shp}")
        scale = _scale(self.K11, self.K22, self.L11, self.L22)
        for name, d in (
            ("K11", _sym_defect1(self.K11)),
            ("K22", _sym_defect1(self.K22)),
            ("L11", _sym_defect2(self.L11)),
            ("L22", _sym_defect2(self.L22)),
        ):
            if d > self.sym_tol * scale:
                raise NotSymmetric(f"{name} violates block symmetry by {d:.3e}")

    @property
    def m(self) -> int:
        return self.K11.shape[-1]

    @property
    def n(self) -> int:
        return self.K22.shape[-1]

    @property
    def dim(self) -> int:
        return self.m + self.n

    def full_K(self) -> np.ndarray:
        m = self.m
        K = np.zeros((self.grid.n, self.dim, self.dim))
        K[:, :m, :m] = self.K11
        K[:, :m, m:] = self.K12
        K[:, m:, :m] = np.swapaxes(self.K12, -1, -2)
        K[:, m:, m:] = self.K22
        return K

    def full_L(self) -> np.ndarray:
        m, N = self.m, self.grid.n
        L = np.zeros((N, N, self.dim, self.dim))
        L[:, :, :m, :m] = self.L11
        L[:, :, :m, m:] = self.L12
        L[:, :, m:, :m] = np.transpose(self.L12, (1, 0, 3, 2))
        L[:, :, m:, m:] = self.L22
        return L

    def full_q(self) -> np.ndarray:
        return np.concatenate([self.q1, self.q2], axis=1)


@dataclass(frozen=True)
class ControlPair:
    w1: np.ndarray
    w2: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        for name in ("w1", "w2"):
            w = np.asarray(getattr(self, name), dtype=float)
            if w.ndim == 1:
                w = w[:, None]
            if w.shape[0] != self.grid.n:
                raise DimensionMismatch(f"{name} has {w.shape[0]} nodes, grid has {self.grid.n}")
            object.__setattr__(self, name, w)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.w1, self.w2], axis=1)


@dataclass(frozen=True)
class DefinitenessReport:
    jointly_pd_11: bool
    jointly_nd_22: bool
    min_eig_11: float
    max_eig_22: float
    method: str = "spectral"
    nonsingular_k: bool = True
    tolerance: float = DEFINITENESS_TOL

    @property
    def certified(self) -> bool:
        return self.jointly_pd_11 and self.jointly_nd_22

    def to_dict(self) -> dict:
        return {
            "jointly_pd_11": bool(self.jointly_pd_11),
            "jointly_nd_22": bool(self.jointly_nd_22),
            "min_eig_11": float(self.min_eig_11),
            "max_eig_22": float(self.max_eig_22),
            "method": self.method,
            "nonsingular_k": bool(self.nonsingular_k),
            "tolerance": self.tolerance,
        }


# ----------------------------------------------------------------------------
# evaluation and symmetrization


def _check_w(form_grid: TimeGrid, w, dim: int) -> np.ndarray:
    w = w.stacked() if isinstance(w, ControlPair) else np.asarray(w, dtype=float)
    if w.shape != (form_grid.n, dim):
        raise DimensionMismatch(f"control has shape {w.shape}, expected {(form_grid.n, dim)}")
    return w


def evaluate_full(K, L, q, grid: TimeGrid, w) -> float:
    """``E`` for full (possibly unsymmetric) block kernels and stacked ``w``."""
    K, L, q = np.asarray(K), np.asarray(L), np.asarray(q)
    w = _check_w(grid, w, K.shape[-1])
    wt = grid.weights
    single = np.einsum("i,ia,iab,ib->", wt, w, K, w)
    double = np.einsum("i,j,ia,ijab,jb->", wt, wt, w, L, w)
    linear = np.einsum("i,ia,ia->", wt, q, w)
    return float(0.5 * single + 0.5 * double + linear)


def evaluate(form: BlockQuadraticForm, w) -> float:
    """Quadrature value of ``E(w1, w2)``."""
    return evaluate_full(form.full_K(), form.full_L(), form.full_q(), form.grid, w)


def symmetrize(K11, K12, K21, K22, L11, L12, L21, L22, q1, q2, grid: TimeGrid) -> BlockQuadraticForm:
    """Replace raw blocks by their symmetrizations; the form's values are unchanged.

    ``K~ij = (Kij + Kji^T) / 2`` and ``L~ij(x, y) = (Lij(x, y) + Lji(y, x)^T) / 2``.
    """
    k11, k12, k21, k22 = (as_values(k, 1, grid) for k in (K11, K12, K21, K22))
    l11, l12, l21, l22 = (as_values(k, 2, grid) for k in (L11, L12, L21, L22))
    if k12.shape[1:] != k21.shape[1:][::-1] or l12.shape[2:] != l21.shape[2:][::-1]:
        raise DimensionMismatch("off-diagonal blocks have incompatible shapes")
    tK = lambda a: np.swapaxes(a, -1, -2)
    tL = lambda a: np.transpose(a, (1, 0, 3, 2))
    return BlockQuadraticForm(
        K11=0.5 * (k11 + tK(k11)),
        K22=0.5 * (k22 + tK(k22)),
        K12=0.5 * (k12 + tK(k21)),
        L11=0.5 * (l11 + tL(l11)),
        L22=0.5 * (l22 + tL(l22)),
        L12=0.5 * (l12 + tL(l21)),
        q1=q1,
        q2=q2,
        grid=grid,
    )


# ----------------------------------------------------------------------------
# stationarity, best responses, saddle


def _apply(K: np.ndarray, L: np.ndarray, wt: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Nodewise ``K_i w_i + sum_j wt_j L_ij w_j``."""
    return np.einsum("iab,ib->ia", K, w) + np.einsum("j,ijab,jb->ia", wt, L, w)


def _operator_matrix(K: np.ndarray, L: np.ndarray, wt: np.ndarray) -> np.ndarray:
    """Dense matrix of ``w -> K w + int L w`` in node-major ordering."""
    N, d = K.shape[0], K.shape[-1]
    A = (L * wt[None, :, None, None]).transpose(0, 2, 1, 3).reshape(N * d, N * d)
    idx = np.arange(N)
    blocks = A.reshape(N, d, N, d)
    blocks[idx, :, idx, :] += K
    return A


def _solve(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    if A.size and np.linalg.cond(A) > CONDITION_LIMIT:
        raise SingularSystem(f"{what}: discretized operator is numerically singular")
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"{what}: {exc}") from exc


def stationarity_residual(form: BlockQuadraticForm, w) -> tuple[np.ndarray, np.ndarray]:
    """Nodewise left-hand sides of the two coupled Fredholm equations."""
    w = _check_w(form.grid, w, form.dim)
    r = _apply(form.full_K(), form.full_L(), form.grid.weights, w) + form.full_q()
    return r[:, : form.m], r[:, form.m :]


def gradient(form: BlockQuadraticForm, w) -> np.ndarray:
    """Gradient of the discrete ``E`` with respect to the stacked nodal values."""
    r1, r2 = stationarity_residual(form, w)
    return form.grid.weights[:, None] * np.concatenate([r1, r2], axis=1)


def _definiteness_matrix(K: np.ndarray, L: np.ndarray, grid: TimeGrid) -> np.ndarray:
    s = np.sqrt(grid.weights)
    N, d = K.shape[0], K.shape[-1]
    H = (L * (s[:, None] * s[None, :])[:, :, None, None]).transpose(0, 2, 1, 3).reshape(N * d, N * d)
    idx = np.arange(N)
    H.reshape(N, d, N, d)[idx, :, idx, :] += K
    return 0.5 * (H + H.T)


def joint_spectrum(K, L, grid: TimeGrid) -> np.ndarray:
    """Eigenvalues of the symmetric discretization of ``int w^T K w + int int w^T L w``."""
    K, L = as_values(K, 1, grid), as_values(L, 2, grid)
    return np.linalg.eigvalsh(_definiteness_matrix(K, L, grid))


def check_joint_definiteness(K, L, grid: TimeGrid, sign: str = "positive",
                             tol: float = DEFINITENESS_TOL) -> DefinitenessReport:
    """Spectral certificate that ``(K, L)`` is jointly positive (or negative) definite."""
    K, L = as_values(K, 1, grid), as_values(L, 2, grid)
    scale = _scale(K, L)
    if _sym_defect1(K) > 1e-10 * scale or _sym_defect2(L) > 1e-10 * scale:
        raise NotSymmetric("kernel pair is not block-symmetric")
    eig = joint_spectrum(K, L, grid)
    if sign == "positive":
        return DefinitenessReport(bool(eig[0] > tol), False, float(eig[0]), float("nan"), tolerance=tol)
    if sign == "negative":
        return DefinitenessReport(False, bool(eig[-1] < -tol), float("nan"), float(eig[-1]), tolerance=tol)
    raise ValueError(f"sign must be 'positive' or 'negative', got {sign!r}")


def check_nonsingular(form: BlockQuadraticForm, limit: float = CONDITION_LIMIT) -> bool:
    """Nodewise condition-number bound on ``K``, ``K11`` and ``K22``."""
    for K in (form.full_K(), form.K11, form.K22):
        if K.shape[-1] and np.max(np.linalg.cond(K)) > limit:
            return False
    return True


def certify(form: BlockQuadraticForm, tol: float = DEFINITENESS_TOL) -> DefinitenessReport:
    """Definiteness report for both diagonal block pairs of ``form``."""
    g = form.grid
    lo = joint_spectrum(form.K11, form.L11, g)[0] if form.m else np.inf
    hi = joint_spectrum(form.K22, form.L22, g)[-1] if form.n else -np.inf
    return DefinitenessReport(
        jointly_pd_11=bool(lo > tol),
        jointly_nd_22=bool(hi < -tol),
        min_eig_11=float(lo),
        max_eig_22=float(hi),
        nonsingular_k=check_nonsingular(form),
        tolerance=tol,
    )


def _require(ok: bool, what: str, report, override: bool):
    if not ok and not override:
        raise NotCertified(f"{what} is not certified", report)


def best_response_min(form: BlockQuadraticForm, w2, override: bool = False) -> np.ndarray:
    """Unique minimizer ``w1`` of ``E(., w2)`` (requires ``(K11, L11)`` jointly PD)."""
    g = form.grid
    w2 = np.asarray(w2, dtype=float).reshape(g.n, form.n)
    if not override:
        rep = check_joint_definiteness(form.K11, form.L11, g, "positive")
        _require(rep.jointly_pd_11, "(K11, L11)", rep, override)
    wt = g.weights
    rhs = -(form.q1 + _apply(form.K12, form.L12, wt, w2))
    A = _operator_matrix(form.K11, form.L11, wt)
    return _solve(A, rhs.reshape(-1), "best_response_min").reshape(g.n, form.m)


def best_response_max(form: BlockQuadraticForm, w1, override: bool = False) -> np.ndarray:
    """Unique maximizer ``w2`` of ``E(w1, .)`` (requires ``(K22, L22)`` jointly ND)."""
    g = form.grid
    w1 = np.asarray(w1, dtype=float).reshape(g.n, form.m)
    if not override:
        rep = check_joint_definiteness(form.K22, form.L22, g, "negative")
        _require(rep.jointly_nd_22, "(K22, L22)", rep, override)
    wt = g.weights
    K21 = np.swapaxes(form.K12, -1, -2)
    L21 = np.transpose(form.L12, (1, 0, 3, 2))
    rhs = -(form.q2 + _apply(K21, L21, wt, w1))
    A = _operator_matrix(form.K22, form.L22, wt)
    return _solve(A, rhs.reshape(-1), "best_response_max").reshape(g.n, form.n)


def saddle_point(form: BlockQuadraticForm, override: bool = False) -> ControlPair:
    """Solve the coupled second-kind Fredholm system for the saddle pair."""
    g = form.grid
    if not override:
        rep = certify(form)
        _require(rep.certified, "form", rep, override)
    A = _operator_matrix(form.full_K(), form.full_L(), g.weights)
    w = _solve(A, -form.full_q().reshape(-1), "saddle_point").reshape(g.n, form.dim)
    return ControlPair(w[:, : form.m], w[:, form.m :], g)


def alternating_best_response(form: BlockQuadraticForm, w2_start=None, tol: float = 1e-13,
                              max_iter: int = 10_000) -> ControlPair:
    """Iterate the best-response map to its fixed point (independent saddle oracle).

    Converges when the cross-coupling is weak enough for the composed map to
    contract; raises :class:`~volgame.errors.NoConvergence` otherwise.
    """
    from .errors import NoConvergence

    g = form.grid
    w2 = np.zeros((g.n, form.n)) if w2_start is None else np.asarray(w2_start, float).reshape(g.n, form.n)
    w1 = best_response_min(form, w2, override=True)
    for it in range(max_iter):
        w2_new = best_response_max(form, w1, override=True)
        w1_new = best_response_min(form, w2_new, override=True)
        change = max(np.max(np.abs(w1_new - w1), initial=0.0), np.max(np.abs(w2_new - w2), initial=0.0))
        w1, w2 = w1_new, w2_new
        if change < tol:
            return ControlPair(w1, w2, g)
    raise NoConvergence("best-response iteration did not converge", change, max_iter)


# ----------------------------------------------------------------------------
# sufficient and necessary definiteness tests


def block_M_condition(K, L, grid: TimeGrid, tol: float = DEFINITENESS_TOL) -> bool:
    """Uniform positive definiteness of ``M(x, y) = [[K(x)/|G|, L(x,y)], [L(y,x), K(y)/|G|]]``.

    Sufficient for joint positive definiteness of ``(K, L)``. The lower-left
    block is written ``L(y, x) = L(x, y)^T`` so that ``M`` is symmetric.
    """
    K, L = as_values(K, 1, grid), as_values(L, 2, grid)
    scale = _scale(K, L)
    if _sym_defect1(K) > 1e-10 * scale or _sym_defect2(L) > 1e-10 * scale:
        raise NotSymmetric("kernel pair is not block-symmetric")
    N, d = K.shape[0], K.shape[-1]
    G = grid.length
    M = np.empty((N, N, 2 * d, 2 * d))
    M[:, :, :d, :d] = (K / G)[:, None]
    M[:, :, d:, d:] = (K / G)[None, :]
    M[:, :, :d, d:] = L
    M[:, :, d:, :d] = np.swapaxes(L, -1, -2)
    return bool(np.min(np.linalg.eigvalsh(M)) > tol)


def mercer_sample_check(L, grid: TimeGrid, trials: int = 100, seed: int = 0,
                        tol: float = DEFINITENESS_TOL) -> bool:
    """Randomized falsifier of nonnegative definiteness of ``L``.

    Draws ``trials`` random node subsets with random vectors and checks
    ``sum_ij a_i^T L(x_i, x_j) a_j >= 0``. ``False`` is a proof of
    indefiniteness; ``True`` only means no counterexample was found.
    """
    L = as_values(L, 2, grid)
    if L.shape[-1] != L.shape[-2]:
        raise DimensionMismatch("L must be square")
    N, d = L.shape[0], L.shape[-1]
    scale = _scale(L)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        k = int(rng.integers(1, N + 1))
        idx = np.sort(rng.choice(N, size=k, replace=False))
        a = rng.standard_normal((k, d))
        val = np.einsum("ia,ijab,jb->", a, L[np.ix_(idx, idx)], a)
        if val < -tol * scale * np.sum(a * a):
            return False
    return True


@dataclass(frozen=True)
class SpectralBasis:
    """Nodal values ``functions[k, i, :]`` of vector functions orthonormal under the grid."""

    functions: np.ndarray
    grid: TimeGrid

    @property
    def size(self) -> int:
        return self.functions.shape[0]

    def gram(self) -> np.ndarray:
        return np.einsum("i,kia,lia->kl", self.grid.weights, self.functions, self.functions)

    def coefficients(self, w) -> np.ndarray:
        return np.einsum("i,kia,ia->k", self.grid.weights, self.functions, np.asarray(w, float))

    def expand(self, c) -> np.ndarray:
        return np.einsum("k,kia->ia", np.asarray(c, float), self.functions)


def legendre_basis(grid: TimeGrid, degree: int, dim: int = 1) -> SpectralBasis:
    """Legendre polynomials per vector component, re-orthonormalized on the grid."""
    x = 2.0 * (grid.nodes - grid.t0) / grid.length - 1.0
    P = np.polynomial.legendre.legvander(x, degree).T  # (degree+1, N)
    raw = np.zeros(((degree + 1) * dim, grid.n, dim))
    for c in range(dim):
        raw[c * (degree + 1):(c + 1) * (degree + 1), :, c] = P
    G = np.einsum("i,kia,lia->kl", grid.weights, raw, raw)
    C = np.linalg.cholesky(G)
    funcs = np.linalg.solve(C, raw.reshape(raw.shape[0], -1)).reshape(raw.shape)
    return SpectralBasis(funcs, grid)


def synthesize_kernel(basis: SpectralBasis, lam) -> np.ndarray:
    """``L(x, y) = sum_kl lam_kl omega_k(x) omega_l(y)^T`` tabulated on the basis grid."""
    lam = np.asarray(lam, dtype=float)
    return np.einsum("kl,kia,ljb->ijab", lam, basis.functions, basis.functions)


def spectral_definiteness(L, basis: SpectralBasis, tol: float = DEFINITENESS_TOL,
                          ortho_tol: float = 1e-8) -> tuple[np.ndarray, bool]:
    """Truncated coefficient matrix ``lam_kl = int int omega_k^T L omega_l`` and its sign."""
    g = basis.grid
    L = as_values(L, 2, g)
    defect = np.max(np.abs(basis.gram() - np.eye(basis.size)), initial=0.0)
    if defect > ortho_tol:
        raise BasisNotOrthonormal(f"basis Gram matrix deviates from identity by {defect:.3e}")
    wt = g.weights
    lam = np.einsum("i,j,kia,ijab,ljb->kl", wt, wt, basis.functions, L, basis.functions)
    lam = 0.5 * (lam + lam.T)
    ok = bool(np.linalg.eigvalsh(lam)[0] >= -tol * _scale(lam)) if lam.size else True
    return lam, ok


def double_integral(L, grid: TimeGrid, w) -> float:
    """``int int w^T(x) L(x, y) w(y)`` by product quadrature."""
    L = as_values(L, 2, grid)
    wt = grid.weights
    return float(np.einsum("i,j,ia,ijab,jb->", wt, wt, np.asarray(w, float), L, np.asarray(w, float)))
