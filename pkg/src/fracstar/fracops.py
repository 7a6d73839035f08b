"""Discrete left/right Riemann-Liouville integrals, fractional derivatives,
trace functionals, and the singular junction mode on a uniform grid.

All operators share one product quadrature: functions are treated as
piecewise constant on cells, the left-sided rules taking the left-node value
per cell and the right-sided rules (by reflection) the right-node value.
The right Caputo composition is not discretized independently; it is defined
by transposition against the left Riemann-Liouville derivative, so the
integration-by-parts identities hold at machine precision on the grid, not
just in the limit.  Order ``alpha = 1`` reduces every operator to its
classical counterpart (identity integral, backward difference, point traces).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import Grid1D

__all__ = [
    "ConvWeights",
    "TriangularConvOp",
    "SingularMode",
    "frac_integral_weights",
    "apply_left_integral",
    "apply_right_integral",
    "left_integral_op",
    "right_integral_op",
    "left_rl_derivative",
    "right_caputo_apply",
    "right_caputo_nodal",
    "trace_functional",
]


def _check_order(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"fractional order must lie in (0, 1], got {alpha}")


@dataclass(frozen=True)
class ConvWeights:
    """Product-rule quadrature weights for a fractional integral of order
    ``alpha`` on a uniform mesh of size ``h``.

    ``w[k]`` is the exact integral of the kernel ``(x - t)^(alpha-1)/Gamma(alpha)``
    over the cell at distance ``k`` cells from the evaluation node, so
    convolution with ``w`` integrates piecewise-constant data exactly.
    """

    alpha: float
    h: float
    w: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.w)


def frac_integral_weights(alpha: float, h: float, M: int) -> ConvWeights:
    """Weights ``w_k = h^alpha/Gamma(alpha+1) * ((k+1)^alpha - k^alpha)``, k = 0..M."""
    _check_order(alpha)
    if h <= 0.0:
        raise ValueError(f"mesh size must be positive, got {h}")
    if M < 1:
        raise ValueError(f"need at least one cell, got {M}")
    k = np.arange(M + 1, dtype=float)
    w = (h**alpha / math.gamma(alpha + 1.0)) * ((k + 1.0) ** alpha - k**alpha)
    return ConvWeights(alpha=alpha, h=h, w=w)


def apply_left_integral(weights: ConvWeights, samples: np.ndarray) -> np.ndarray:
    """Left fractional integral at the nodes of piecewise-constant data.

    Cell values are the left-node samples; ``out[0] = 0`` and
    ``out[j] = sum_k w[k] * samples[j-1-k]``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape != weights.w.shape:
        raise ValueError(
            f"expected {weights.w.shape[0]} nodal samples, got {samples.shape[0]}"
        )
    M = len(samples) - 1
    out = np.zeros(M + 1)
    out[1:] = np.convolve(weights.w[:M], samples[:-1])[:M]
    return out


def apply_right_integral(weights: ConvWeights, samples: np.ndarray) -> np.ndarray:
    """Right fractional integral, the mirror of the left one under
    ``x -> a + b - x``; cell values are the right-node samples, ``out[M] = 0``.
    """
    return apply_left_integral(weights, np.asarray(samples)[::-1])[::-1]


@dataclass(frozen=True)
class TriangularConvOp:
    """Dense triangular realization of a fractional operator on nodal samples.

    ``orientation`` is ``"left"`` (lower triangular) or ``"right"`` (upper
    triangular, the reflected transpose of the left operator with the same
    weights).  Derivative operators are rectangular: one row per cell.
    """

    orientation: str
    matrix: np.ndarray = field(repr=False)

    def apply(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=float)
        if samples.shape[0] != self.matrix.shape[1]:
            raise ValueError(
                f"operator expects {self.matrix.shape[1]} samples, got {samples.shape[0]}"
            )
        return self.matrix @ samples


def left_integral_op(weights: ConvWeights) -> TriangularConvOp:
    """Matrix form of :func:`apply_left_integral` (row ``j`` hits cells ``< j``)."""
    M = len(weights.w) - 1
    T = np.zeros((M + 1, M + 1))
    for j in range(1, M + 1):
        T[j, :j] = weights.w[j - 1 :: -1][:j]
    return TriangularConvOp(orientation="left", matrix=T)


def right_integral_op(weights: ConvWeights) -> TriangularConvOp:
    """Mirror image of the left operator: ``R T_left R`` with ``R`` the index
    reversal, which for the Toeplitz rule equals the transpose."""
    TL = left_integral_op(weights).matrix
    return TriangularConvOp(orientation="right", matrix=TL[::-1, ::-1].copy())


def _left_integral_matrix(alpha: float, grid: Grid1D) -> np.ndarray:
    """Nodal matrix of ``I^alpha`` from the left; ``alpha = 0`` is the identity
    (the limit order that appears inside ``D^1`` and the classical traces)."""
    if alpha == 0.0:
        return np.eye(grid.nnodes)
    return left_integral_op(frac_integral_weights(alpha, grid.h, grid.M)).matrix


def left_rl_derivative(alpha: float, grid: Grid1D) -> TriangularConvOp:
    """Left Riemann-Liouville derivative: backward difference of the order
    ``1 - alpha`` left integral, one value per cell.

    Returns an ``M x (M+1)`` operator.  For ``alpha = 1`` this is the plain
    backward difference.
    """
    _check_order(alpha)
    T = _left_integral_matrix(1.0 - alpha, grid)
    D = (T[1:] - T[:-1]) / grid.h
    return TriangularConvOp(orientation="left", matrix=D)


def trace_functional(alpha: float, grid: Grid1D, endpoint: str) -> np.ndarray:
    """Row vector evaluating the order ``1 - alpha`` left integral at an endpoint.

    At ``b`` this is the last quadrature row of ``I^(1-alpha)``.  At ``a`` the
    integral of any bounded nodal function vanishes, so the row is zero for
    ``alpha < 1``; the nonzero trace at ``a`` is carried entirely by the
    singular-mode coefficient, which assembly appends as an extra column.
    For ``alpha = 1`` both traces are point evaluations.
    """
    _check_order(alpha)
    if endpoint not in ("a", "b"):
        raise ValueError(f"endpoint must be 'a' or 'b', got {endpoint!r}")
    row = np.zeros(grid.nnodes)
    if alpha == 1.0:
        row[-1 if endpoint == "b" else 0] = 1.0
        return row
    if endpoint == "b":
        w = frac_integral_weights(1.0 - alpha, grid.h, grid.M).w
        row[: grid.M] = w[grid.M - 1 :: -1][: grid.M]
    return row


def right_caputo_apply(
    alpha: float,
    grid: Grid1D,
    beta_samples: np.ndarray,
    flux_samples: np.ndarray,
) -> np.ndarray:
    """Right Caputo derivative of a cell-valued flux ``g = beta * D y``,
    defined by transposition against the left derivative:

        <phi, C g>_h = -[g * I^(1-alpha) phi]_a^b + <g, D phi>_h

    for every nodal ``phi``, with the endpoint values of ``g`` taken from the
    first and last cell.  Constructing the operator this way (rather than by
    an independent quadrature) makes the integration-by-parts formula an
    identity of the discretization.
    """
    _check_order(alpha)
    beta_samples = np.asarray(beta_samples, dtype=float)
    g = np.asarray(flux_samples, dtype=float)
    if beta_samples.shape[0] != grid.nnodes:
        raise ValueError(
            f"expected {grid.nnodes} coefficient samples, got {beta_samples.shape[0]}"
        )
    if g.shape[0] != grid.M:
        raise ValueError(f"expected {grid.M} cell fluxes, got {g.shape[0]}")
    D = left_rl_derivative(alpha, grid).matrix
    rhs = grid.h * (D.T @ g)
    rhs -= g[-1] * trace_functional(alpha, grid, "b")
    rhs += g[0] * trace_functional(alpha, grid, "a")
    return rhs / grid.trapezoid_weights()


def right_caputo_nodal(alpha: float, grid: Grid1D, samples: np.ndarray) -> np.ndarray:
    """Right Caputo derivative of a nodal function, by the same transposition:

        <phi, C y>_h = -[y * I^(1-alpha) phi]_a^b + <y, D phi>_h,

    with ``y`` entering the volume term through its left-node cell values and
    the bracket through its true endpoint samples.
    """
    _check_order(alpha)
    y = np.asarray(samples, dtype=float)
    if y.shape[0] != grid.nnodes:
        raise ValueError(f"expected {grid.nnodes} nodal samples, got {y.shape[0]}")
    D = left_rl_derivative(alpha, grid).matrix
    rhs = grid.h * (D.T @ y[:-1])
    rhs -= y[-1] * trace_functional(alpha, grid, "b")
    rhs += y[0] * trace_functional(alpha, grid, "a")
    return rhs / grid.trapezoid_weights()


@dataclass(frozen=True)
class SingularMode:
    """Nodal samples of ``sigma(x) = (x-a)^(alpha-1)/Gamma(alpha)``, the mode
    whose order ``1 - alpha`` left integral is the constant one.

    The infinite value at the first node is replaced by the cell average of
    ``sigma`` over the first cell, ``h^(alpha-1)/Gamma(alpha+1)``; the samples
    only ever enter L2 pairings (mass and tracking terms).  The fractional
    operators act on the mode analytically: its left integral of order
    ``1 - alpha`` is the one vector, its left derivative is zero on every
    cell, and both endpoint traces equal ``trace_value``.
    """

    alpha: float
    grid: Grid1D
    samples: np.ndarray = field(repr=False)
    trace_value: float = 1.0

    def integral_column(self) -> np.ndarray:
        """Action of the discrete ``I^(1-alpha)`` on the mode: exactly one."""
        return np.ones(self.grid.nnodes)

    def derivative_column(self) -> np.ndarray:
        """Action of the discrete left derivative on the mode: exactly zero."""
        return np.zeros(self.grid.M)


def singular_mode(alpha: float, grid: Grid1D) -> SingularMode:
    _check_order(alpha)
    x = grid.nodes - grid.a
    samples = np.empty(grid.nnodes)
    samples[0] = grid.h ** (alpha - 1.0) / math.gamma(alpha + 1.0)
    samples[1:] = x[1:] ** (alpha - 1.0) / math.gamma(alpha)
    return SingularMode(alpha=alpha, grid=grid, samples=samples)
