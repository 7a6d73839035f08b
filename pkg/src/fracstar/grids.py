"""Uniform space and time grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid with ``M`` cells on ``[a, b]``.

    Nodes are ``x_j = a + j*h`` for ``j = 0..M`` with ``h = (b - a)/M``.
    """

    a: float
    b: float
    M: int

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError(f"need at least 2 cells, got M={self.M}")
        if not self.b > self.a:
            raise ValueError(f"empty interval [{self.a}, {self.b}]")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.M + 1)

    @property
    def nnodes(self) -> int:
        return self.M + 1

    def trapezoid_weights(self) -> np.ndarray:
        """Lumped-mass quadrature weights: ``h`` inside, ``h/2`` at the ends."""
        w = np.full(self.M + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``Nt`` implicit-Euler steps."""

    T: float
    Nt: int

    def __post_init__(self) -> None:
        if self.Nt < 1:
            raise ValueError(f"need at least one time step, got Nt={self.Nt}")
        if not self.T > 0.0:
            raise ValueError(f"horizon must be positive, got T={self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.Nt + 1)

    def trapezoid_weights(self) -> np.ndarray:
        """Time quadrature weights: ``dt`` inside, ``dt/2`` at ``t=0`` and ``t=T``."""
        w = np.full(self.Nt + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w
