import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("volgame", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("volgame")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_kernel2(rng, grid, r, c, scale=1.0):
    """Random smooth two-argument kernel: low-degree polynomial in (t, s)."""
    coeffs = rng.standard_normal((2, 2, r, c)) * scale
    t, s = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    out = np.zeros((grid.n, grid.n, r, c))
    for k in range(2):
        for l in range(2):
            out += coeffs[k, l] * (t**k * s**l)[..., None, None]
    return out


def smooth_kernel1(rng, grid, r, c, scale=1.0):
    coeffs = rng.standard_normal((2, r, c)) * scale
    return coeffs[0] + coeffs[1] * grid.nodes[:, None, None]


def spd_kernel1(rng, grid, d, shift=1.0):
    """Nodewise ``shift*I + X X^T`` with a small smooth ``X``."""
    X = smooth_kernel1(rng, grid, d, d, 0.3)
    return shift * np.eye(d) + X @ np.swapaxes(X, -1, -2)


def sym_kernel2(rng, grid, d, scale=1.0):
    """Kernel with L(x, y) = L(y, x)^T."""
    L = smooth_kernel2(rng, grid, d, d, scale)
    return 0.5 * (L + np.transpose(L, (1, 0, 3, 2)))


def psd_kernel2(rng, grid, d, rank=2, scale=1.0):
    """Nonnegative-definite kernel sum_k g_k(x) g_k(y)^T."""
    c = rng.standard_normal((rank, 2, d)) * scale
    gx = c[:, 0][:, None, :] + c[:, 1][:, None, :] * grid.nodes[None, :, None]
    return np.einsum("kia,kjb->ijab", gx, gx)


def random_lq_problem(rng, grid, p=1, m=1, n=1, weight=0.3):
    """Random LQ game with dominant control weights, so it certifies."""
    from volgame.lqgame import LQGameProblem

    X = rng.standard_normal((p, p)) * weight
    return LQGameProblem(
        grid=grid,
        y0=smooth_kernel1(rng, grid, p, 1)[:, :, 0],
        A=smooth_kernel2(rng, grid, p, p, 0.5),
        B=smooth_kernel2(rng, grid, p, m, 0.5),
        C=smooth_kernel2(rng, grid, p, n, 0.5),
        P0=X @ X.T,
        P1=spd_kernel1(rng, grid, p, weight),
        P2=psd_kernel2(rng, grid, p, scale=np.sqrt(weight)),
        Q1=spd_kernel1(rng, grid, m, 1.5),
        Q2=psd_kernel2(rng, grid, m, scale=0.3),
        R1=-spd_kernel1(rng, grid, n, 3.0),
        R2=-psd_kernel2(rng, grid, n, scale=0.3),
    )


def nonlinear_lqc_problem(grid, a=0.3, analytic=True):
    """Scalar game with state-dependent kernels and weights (strength ``a``)."""
    from volgame.lqcgame import LQCProblem

    e = lambda t, s: np.exp(-(t - s))
    M = lambda x: np.array([[x]])
    f0 = lambda t, s, y: np.array([-0.5 * y[0] + a * np.sin(y[0]) * e(t, s)])
    F1 = lambda t, s, y: M(0.8 + 0.1 * np.tanh(y[0]))
    F2 = lambda t, s, y: M(0.5 * e(t, s))
    g0 = lambda t, y: 0.5 * y[0] ** 2 + 0.05 * a * y[0] ** 4
    g1 = lambda t, y: np.array([a * y[0]])
    g2 = lambda t, y: np.array([a * np.sin(y[0]) + 0.2 * t])
    G11 = lambda t, y: M(2.0 + 0.1 * y[0] ** 2)
    G12 = lambda t, y: M(0.3)
    G22 = lambda t, y: M(-3.0 - 0.1 * y[0] ** 2)
    grads = {
        "f0": lambda t, s, y: M(-0.5 + a * np.cos(y[0]) * e(t, s)),
        "F1": lambda t, s, y: np.array([[[0.1 / np.cosh(y[0]) ** 2]]]),
        "F2": lambda t, s, y: np.zeros((1, 1, 1)),
        "g0": lambda t, y: np.array([y[0] + 0.2 * a * y[0] ** 3]),
        "g1": lambda t, y: M(a),
        "g2": lambda t, y: M(a * np.cos(y[0])),
        "G11": lambda t, y: np.array([[[0.2 * y[0]]]]),
        "G12": lambda t, y: np.zeros((1, 1, 1)),
        "G22": lambda t, y: np.array([[[-0.2 * y[0]]]]),
    }
    y0 = 1.0 - 0.5 * grid.nodes
    return LQCProblem(grid, y0, f0, F1, F2, g0, g1, g2, G11, G12, G22,
                      gradients=grads if analytic else {})


def poly_spec(*coeffs):
    """Scalar one-argument polynomial kernel ``sum c_k t^k``."""
    from volgame.grid import KernelSpec

    return KernelSpec("polynomial", {"coeffs": [[[c]] for c in coeffs]})


def scalar_pursuit(y0, A=0.0, B=1.0, C=1.0, M=1.0, M0=0.0, M1=1.0, Q=1.0, R=-2.0,
                   bracket=(0.5, 2.0), n=129):
    from volgame.grid import KernelSpec
    from volgame.pursuit import PursuitProblem

    k = lambda x: x if isinstance(x, KernelSpec) else KernelSpec.constant(x)
    I = np.eye(1)
    return PursuitProblem(0.0, n, y0, k(A), k(B), k(C), M * I, M0 * I, M1 * I, Q * I, R * I, bracket)


def scalar_pursuit_instances(n=129):
    """Three controlled scalar capture games with a capture time inside the bracket."""
    from volgame.grid import KernelSpec

    return [
        scalar_pursuit(poly_spec(1.0, -0.8), n=n),
        scalar_pursuit(poly_spec(1.0, -1.2, 0.1), A=KernelSpec("exponential", {"a": [[-0.3]], "b": [[-1.0]]}),
                       C=0.5, Q=2.0, R=-3.0, M1=0.5, bracket=(0.5, 1.6), n=n),
        scalar_pursuit(poly_spec(0.8, -0.5), A=0.2, B=0.7, C=0.3, Q=1.5, R=-1.0, M1=2.0,
                       bracket=(0.8, 2.5), n=n),
    ]


def planar_pursuit(n=65):
    from volgame.config import build_pursuit, load_config
    from dataclasses import replace
    import pathlib

    cfg = load_config(pathlib.Path(__file__).parent.parent / "scripts" / "configs" / "pursuit_planar.json")
    cfg = replace(cfg, grid=replace(cfg.grid, n=n))
    return build_pursuit(cfg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
