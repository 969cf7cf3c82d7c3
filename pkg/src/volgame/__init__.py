"""Solvers for two-player zero-sum games with Volterra integral state dynamics."""

from .grid import Kernel1, Kernel2, KernelSpec, TimeGrid, integrate1, make_grid, materialize

__all__ = ["Kernel1", "Kernel2", "KernelSpec", "TimeGrid", "integrate1", "make_grid", "materialize"]
__version__ = "0.1.0"
