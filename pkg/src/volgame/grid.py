"""Uniform time grids, quadrature weights and tabulated matrix kernels.

Every integral in the package is a weighted sum over grid nodes. Three weight
families are derived from one uniform grid:

* ``grid.weights`` -- the full-interval rule over ``[t0, t1]``;
* ``grid.cumulative`` -- row ``i`` integrates over ``[t0, t_i]`` (Volterra
  integrals with variable upper limit);
* ``grid.tail`` -- discrete-adjoint weights for ``int_{t_i}^{t1}`` integrals
  that appear in costate equations (see :attr:`TimeGrid.tail`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .errors import (
    DimensionMismatch,
    GridMismatch,
    InvalidInterval,
    InvalidRule,
    LengthMismatch,
    TooFewNodes,
)

RULES = ("trapezoid", "simpson")
FAMILIES = ("constant", "table", "exponential", "polynomial")


def segment_weights(panels: int, h: float, rule: str = "trapezoid") -> np.ndarray:
    """Weights of ``panels + 1`` equispaced nodes covering ``panels`` panels.

    Simpson segments with an odd panel count end in a 3/8 block; a single
    panel falls back to the trapezoid.
    """
    if panels == 0:
        return np.zeros(1)
    if rule == "trapezoid" or panels == 1:
        w = np.full(panels + 1, h)
        w[0] = w[-1] = 0.5 * h
        return w
    if rule != "simpson":
        raise InvalidRule(f"unknown quadrature rule {rule!r}")
    w = np.zeros(panels + 1)
    even = panels if panels % 2 == 0 else panels - 3
    if even > 0:
        s = np.ones(even + 1)
        s[1:-1:2] = 4.0
        s[2:-1:2] = 2.0
        w[: even + 1] += s * h / 3.0
    if even != panels:
        w[even:] += np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * h / 8.0
    return w


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of ``[t0, t1]`` with quadrature weights."""

    t0: float
    t1: float
    nodes: np.ndarray
    weights: np.ndarray
    rule: str = "trapezoid"

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / (self.n - 1)

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Lower-triangular ``(n, n)`` matrix; row ``i`` integrates over ``[t0, t_i]``."""
        n = self.n
        W = np.zeros((n, n))
        for i in range(n):
            W[i, : i + 1] = segment_weights(i, self.h, self.rule)
        W.setflags(write=False)
        return W

    @cached_property
    def tail(self) -> np.ndarray:
        """Upper-triangular ``(n, n)`` discrete-adjoint tail weights.

        ``tail[k, i] = weights[i] * cumulative[i, k] / weights[k]``. With these
        weights the backward (costate) sums are the exact transposes of the
        forward Volterra sums, so discrete costates are exact gradients of
        discrete cost functionals. Away from the two end nodes they coincide
        with the rule's own weights over ``[t_k, t1]``.
        """
        w = np.asarray(self.weights)
        T = (w[None, :] * np.asarray(self.cumulative).T) / w[:, None]
        T.setflags(write=False)
        return T

    def node_index(self, t: float, tol: float = 1e-12) -> int:
        k = int(round((t - self.t0) / self.h))
        if k < 0 or k >= self.n or abs(self.nodes[k] - t) > tol * max(1.0, abs(t)):
            from .errors import NodeNotOnGrid

            raise NodeNotOnGrid(f"time {t!r} is not a grid node")
        return k


def make_grid(t0: float, t1: float, n: int, rule: str = "trapezoid") -> TimeGrid:
    """Uniform grid with ``n`` nodes on ``[t0, t1]``.

    Simpson needs an odd node count; an even count is rejected, not adjusted.

    >>> g = make_grid(0.0, 1.0, 3)
    >>> g.weights.tolist()
    [0.25, 0.5, 0.25]
    """
    if not t1 > t0:
        raise InvalidInterval(f"need t1 > t0, got [{t0}, {t1}]")
    if n < 2:
        raise TooFewNodes(f"need at least 2 nodes, got {n}")
    if rule not in RULES:
        raise InvalidRule(f"unknown quadrature rule {rule!r}")
    if rule == "simpson" and n % 2 == 0:
        raise InvalidRule(f"simpson requires an odd node count, got {n}")
    nodes = np.linspace(t0, t1, n)
    weights = segment_weights(n - 1, (t1 - t0) / (n - 1), rule)
    return TimeGrid(float(t0), float(t1), nodes, weights, rule)


def integrate1(grid: TimeGrid, f) -> float | np.ndarray:
    """Quadrature ``sum_i weights[i] * f[i]`` over the leading (node) axis."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.n:
        raise LengthMismatch(f"expected {grid.n} nodal values, got {f.shape[0]}")
    return np.tensordot(grid.weights, f, axes=(0, 0))


def integrate2(grid: TimeGrid, f) -> float | np.ndarray:
    """Tensor-product quadrature over the two leading (node) axes, outer index major."""
    f = np.asarray(f, dtype=float)
    if f.shape[:2] != (grid.n, grid.n):
        raise LengthMismatch(f"expected ({grid.n}, {grid.n}) nodal values, got {f.shape[:2]}")
    inner = np.tensordot(grid.weights, f, axes=(0, 1))
    return np.tensordot(grid.weights, inner, axes=(0, 0))


@dataclass(frozen=True)
class Kernel1:
    """One matrix per grid node, shape ``(n, rows, cols)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise DimensionMismatch(f"Kernel1 needs a 3-d array, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[1]

    @property
    def cols(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class Kernel2:
    """One matrix per ordered node pair, shape ``(n, n, rows, cols)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[0] != v.shape[1]:
            raise DimensionMismatch(f"Kernel2 needs an (n, n, r, c) array, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[2]

    @property
    def cols(self) -> int:
        return self.values.shape[3]


def as_values(kernel, arity: int, grid: TimeGrid | None = None) -> np.ndarray:
    """Raw array of a kernel given as Kernel1/Kernel2 or array-like."""
    v = kernel.values if isinstance(kernel, (Kernel1, Kernel2)) else np.asarray(kernel, dtype=float)
    if v.ndim != arity + 2:
        raise DimensionMismatch(f"expected a {arity + 2}-d kernel array, got shape {v.shape}")
    if grid is not None and v.shape[:arity] != (grid.n,) * arity:
        raise GridMismatch(f"kernel tabulated on {v.shape[:arity]} nodes, grid has {grid.n}")
    return v


def _matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class KernelSpec:
    """Config-level kernel description, materialized onto a grid on demand.

    Families
    --------
    constant     ``{"value": M}``
    exponential  ``{"a": M, "b": M}``: entrywise ``a * exp(b * (t - s))``
                 (``a * exp(b * t)`` for one-argument kernels)
    polynomial   ``{"coeffs": C}``: entrywise ``sum C[k][l] t^k s^l``
                 (``sum C[k] t^k`` for one-argument kernels)
    table        ``{"values": V}`` with explicit per-node(-pair) matrices
    """

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DimensionMismatch(f"unknown kernel family {self.family!r}")

    @classmethod
    def constant(cls, value) -> "KernelSpec":
        return cls("constant", {"value": _matrix(value).tolist()})

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        d = dict(d)
        family = d.pop("family")
        return cls(family, d)

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}

    @property
    def shape(self) -> tuple[int, int]:
        p = self.params
        if self.family == "constant":
            return _matrix(p["value"]).shape
        if self.family == "exponential":
            return _matrix(p["a"]).shape
        a = np.asarray(p["coeffs" if self.family == "polynomial" else "values"], dtype=float)
        return a.shape[-2], a.shape[-1]

    @property
    def is_functional(self) -> bool:
        return self.family != "table"

    def __call__(self, t, s=None) -> np.ndarray:
        """Evaluate at broadcastable time arrays; returns ``shape + (rows, cols)``."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.family == "table":
            raise GridMismatch("table kernels can only be materialized on their own grid")
        if s is not None:
            s = np.asarray(s, dtype=float)
            t, s = np.broadcast_arrays(t, s)
        if self.family == "constant":
            v = _matrix(p["value"])
            return np.broadcast_to(v, t.shape + v.shape).copy()
        if self.family == "exponential":
            a, b = _matrix(p["a"]), _matrix(p["b"])
            x = (t - s) if s is not None else t
            return a * np.exp(b * x[..., None, None])
        c = np.asarray(p["coeffs"], dtype=float)
        out = np.zeros(t.shape + c.shape[-2:])
        if s is None:
            if c.ndim != 3:
                raise DimensionMismatch("one-argument polynomial needs coeffs of shape (deg+1, r, c)")
            for k in range(c.shape[0]):
                out += c[k] * (t**k)[..., None, None]
            return out
        if c.ndim != 4:
            raise DimensionMismatch("two-argument polynomial needs coeffs of shape (dt+1, ds+1, r, c)")
        for k in range(c.shape[0]):
            for l in range(c.shape[1]):
                out += c[k, l] * (t**k * s**l)[..., None, None]
        return out

    def derivative(self, t) -> np.ndarray:
        """Time derivative of a one-argument functional kernel."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.family == "constant":
            return np.zeros(t.shape + self.shape)
        if self.family == "exponential":
            a, b = _matrix(p["a"]), _matrix(p["b"])
            return a * b * np.exp(b * t[..., None, None])
        if self.family == "polynomial":
            c = np.asarray(p["coeffs"], dtype=float)
            out = np.zeros(t.shape + c.shape[-2:])
            for k in range(1, c.shape[0]):
                out += k * c[k] * (t ** (k - 1))[..., None, None]
            return out
        raise GridMismatch("table kernels have no analytic derivative")


def materialize(spec: KernelSpec, grid: TimeGrid, arity: int) -> Kernel1 | Kernel2:
    """Tabulate ``spec`` on ``grid`` as a one- or two-argument kernel."""
    if arity not in (1, 2):
        raise DimensionMismatch(f"arity must be 1 or 2, got {arity}")
    if spec.family == "table":
        v = np.asarray(spec.params["values"], dtype=float)
        if v.ndim != arity + 2:
            raise DimensionMismatch(f"table for arity {arity} needs {arity + 2} dims, got {v.ndim}")
        if v.shape[:arity] != (grid.n,) * arity:
            raise GridMismatch(f"table has {v.shape[0]} nodes, grid has {grid.n}")
        return Kernel1(v.copy()) if arity == 1 else Kernel2(v.copy())
    if arity == 1:
        return Kernel1(spec(grid.nodes))
    T, S = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    return Kernel2(spec(T, S))
