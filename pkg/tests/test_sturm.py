import math

import numpy as np
import pytest
import scipy.linalg as sla

from fracstar import (
    CoefficientError,
    EdgeCoefficients,
    Grid1D,
    assemble_stiffness,
    neumann_load,
)
from conftest import random_coeffs


def classical_tridiagonal(grid, beta=1.0, q=1.0):
    """Hand-assembled P1/FV stiffness with natural closure at both ends."""
    M, h = grid.M, grid.h
    K = np.zeros((M + 1, M + 1))
    for j in range(M):
        K[j, j] += beta / h
        K[j + 1, j + 1] += beta / h
        K[j, j + 1] -= beta / h
        K[j + 1, j] -= beta / h
    w = np.full(M + 1, h)
    w[0] = w[-1] = h / 2
    return K + np.diag(q * w)


class TestCoefficients:
    def test_positivity_enforced(self):
        grid = Grid1D(0.0, 1.0, 4)
        with pytest.raises(CoefficientError):
            EdgeCoefficients(beta=np.full(5, -1.0), q=np.ones(5), beta0=-1.0, q0=1.0)
        with pytest.raises(CoefficientError):
            EdgeCoefficients(beta=np.ones(5), q=np.zeros(5), beta0=1.0, q0=0.0)
        with pytest.raises(CoefficientError):
            # stated lower bound above the actual minimum
            EdgeCoefficients(beta=np.ones(5), q=np.ones(5), beta0=2.0, q0=1.0)


class TestAssembly:
    def test_symmetry(self, rng):
        grid = Grid1D(0.0, 1.0, 16)
        op = assemble_stiffness(0.55, grid, random_coeffs(rng, grid))
        assert np.abs(op.K - op.K.T).max() == 0.0

    def test_alpha_one_matches_classical(self):
        grid = Grid1D(0.0, 1.0, 8)
        coeffs = EdgeCoefficients.constant(grid, 1.0, 1.0)
        op = assemble_stiffness(1.0, grid, coeffs)
        np.testing.assert_allclose(op.K, classical_tridiagonal(grid), atol=1e-12)

    def test_coercivity_eigensolve(self, rng):
        # smallest generalized eigenvalue of (K, W) dominates q0
        grid = Grid1D(0.0, 1.0, 8)
        coeffs = EdgeCoefficients(
            beta=1.0 + rng.random(9), q=np.full(9, 0.7), beta0=1.0, q0=0.7
        )
        op = assemble_stiffness(0.6, grid, coeffs)
        lam = sla.eigh(op.K, np.diag(grid.trapezoid_weights()), eigvals_only=True)
        assert lam.min() >= 0.7 - 1e-10

    def test_coefficient_scaling(self, rng):
        grid = Grid1D(0.0, 1.0, 10)
        coeffs = random_coeffs(rng, grid)
        scaled = EdgeCoefficients(
            beta=4.0 * coeffs.beta, q=4.0 * coeffs.q, beta0=4.0, q0=2.0
        )
        K1 = assemble_stiffness(0.45, grid, coeffs).K
        K4 = assemble_stiffness(0.45, grid, scaled).K
        np.testing.assert_allclose(K4, 4.0 * K1, rtol=1e-13)

    def test_singular_dof_extension(self, rng):
        grid = Grid1D(0.0, 1.0, 9)
        coeffs = random_coeffs(rng, grid)
        op = assemble_stiffness(0.5, grid, coeffs, include_singular_dof=True)
        assert op.ndof == grid.nnodes + 1
        assert op.trace_a[-1] == 1.0 and op.trace_b[-1] == 1.0
        assert np.all(op.trace_a[:-1] == 0.0)
        # extended stiffness stays SPD: the mode is distinguishable from its
        # nodal interpolant through the derivative term
        lam = np.linalg.eigvalsh(op.K)
        assert lam.min() > 0.0
        # derivative ignores the mode entirely
        assert np.all(op.D[:, -1] == 0.0)

    def test_alpha_one_pins_first_node(self):
        grid = Grid1D(0.0, 1.0, 6)
        coeffs = EdgeCoefficients.constant(grid, 1.0, 1.0)
        op1 = assemble_stiffness(1.0, grid, coeffs)
        assert 0 not in op1.free
        op = assemble_stiffness(0.5, grid, coeffs)
        assert 0 in op.free


class TestNeumannLoad:
    def test_zero(self, rng):
        grid = Grid1D(0.0, 1.0, 7)
        op = assemble_stiffness(0.6, grid, random_coeffs(rng, grid))
        np.testing.assert_array_equal(neumann_load(op, 0.0), np.zeros(op.ndof))

    def test_unit_control_pairs_with_constants(self):
        grid = Grid1D(0.0, 1.5, 12)
        alpha = 0.7
        op = assemble_stiffness(alpha, grid, EdgeCoefficients.constant(grid, 1.0, 1.0))
        load = neumann_load(op, 1.0)
        np.testing.assert_array_equal(load, op.trace_b)
        exact = (grid.b - grid.a) ** (1 - alpha) / math.gamma(2 - alpha)
        assert abs(load @ np.ones(op.ndof) - exact) <= 1e-14 * exact

    def test_alpha_one_is_endpoint_load(self):
        grid = Grid1D(0.0, 1.0, 5)
        op = assemble_stiffness(1.0, grid, EdgeCoefficients.constant(grid, 1.0, 1.0))
        np.testing.assert_array_equal(neumann_load(op, 1.0), np.eye(6)[-1])


class TestFluxIdentity:
    @pytest.mark.parametrize("alpha", [0.4, 0.8, 1.0])
    def test_steady_green_identity(self, alpha, rng):
        # solve K y = W f + v * trace_b^T and recover the natural boundary
        # value from the residual probe
        grid = Grid1D(0.0, 1.0, 14)
        op = assemble_stiffness(alpha, grid, random_coeffs(rng, grid))
        f = rng.standard_normal(grid.nnodes)
        v = 0.8321
        wtr = grid.trapezoid_weights()
        fr = op.free
        rhs = (wtr * f)[fr] + v * op.trace_b[fr]
        y = np.zeros(op.ndof)
        y[fr] = np.linalg.solve(op.K[np.ix_(fr, fr)], rhs)
        recovered = op.flux_probe @ (op.K @ y - wtr * f)
        assert abs(recovered - v) <= 1e-10
