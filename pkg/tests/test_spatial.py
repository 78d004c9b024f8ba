import math

import numpy as np
import pytest

from maxreg.spatial import (
    DiscreteOperator,
    Grid,
    GridFunction,
    SingularShiftError,
    gradient,
    laplacian,
    laplacian_1d,
    laplacian_2d,
    matrix_norm,
    sector_bound,
)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
@pytest.mark.parametrize("n", [2, 3, 17])
def test_span_recovers_length(bc, n):
    g = Grid(1, n, 2.5, bc)
    assert math.isclose(g.span(), 2.5)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(3, 4)
    with pytest.raises(ValueError):
        Grid(1, 1)
    with pytest.raises(ValueError):
        Grid(1, 4, bc="robin")
    with pytest.raises(ValueError):
        GridFunction(Grid(1, 4), np.zeros(5))
    with pytest.raises(ValueError):
        GridFunction(Grid(1, 4), np.array([0, np.nan, 0, 0]))


def test_dirichlet_eigenvalues_closed_form():
    n = 15
    op = laplacian_1d(n)
    h = 1 / (n + 1)
    j = np.arange(1, n + 1)
    expected = np.sort(-4 / h**2 * np.sin(j * np.pi * h / 2) ** 2)
    assert np.allclose(op.eigenvalues(), expected, rtol=1e-12)


def test_neumann_has_constant_kernel():
    op = laplacian_1d(9, "neumann")
    assert np.abs(op.apply(np.ones(9))).max() < 1e-10
    assert abs(op.eigenvalues().max()) < 1e-9


def test_second_order_on_smooth_function():
    errs = []
    for n in (16, 32, 64):
        op = laplacian_1d(n)
        x = op.grid.axis()
        errs.append(np.abs(op.apply(np.sin(np.pi * x)) + np.pi**2 * np.sin(np.pi * x)).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.9)


def test_2d_is_kronecker_sum():
    op = laplacian_2d(4)
    w1 = laplacian_1d(4).eigenvalues()
    assert np.allclose(np.sort(op.eigenvalues()), np.sort((w1[:, None] + w1[None, :]).ravel()))
    assert laplacian(2, 4).size == 16
    with pytest.raises(ValueError):
        laplacian(3, 4)


@pytest.mark.parametrize("op", [laplacian_1d(2), laplacian_1d(12), laplacian_2d(5, "neumann"),
                                DiscreteOperator.diagonal([-1.0, -3.0]),
                                DiscreteOperator.dense([[-2.0, 1.0], [0.0, -1.0]])])
@pytest.mark.parametrize("gamma", [1.0, 2.0 + 3.0j])
def test_shifted_solve_residual(op, gamma):
    rng = np.random.default_rng(0)
    b = rng.standard_normal((op.size, 3))
    x = op.shifted_solve(gamma, b)
    assert np.abs(gamma * x - op.apply(x) - b).max() < 1e-10 * np.abs(b).max()


def test_shifted_solve_complex_rhs_on_real_factor():
    op = laplacian_1d(8)
    b = np.arange(8) + 1j * np.ones(8)
    x = op.shifted_solve(0.5, b)
    assert np.allclose(0.5 * x - op.apply(x), b)


def test_singular_shift():
    op = DiscreteOperator.diagonal([-1.0, -2.0])
    with pytest.raises(SingularShiftError):
        op.shifted_solve(-1.0, np.ones(2))
    with pytest.raises(ValueError):
        op.shifted_solve(1.0, np.ones(3))


def test_rotation_keeps_eigenvectors():
    op = laplacian_1d(6)
    op.eigensystem()
    rot = op.rotated(0.3)
    assert rot.complex_symmetric and not rot.symmetric
    w, _ = rot.eigensystem()
    assert np.allclose(w, op.eigenvalues() * np.exp(0.3j))


def test_gradient_exact_on_quadratics():
    g = Grid(1, 10)
    x = g.axis()
    assert np.allclose(gradient(g, x**2), 2 * x, atol=1e-12)
    g2 = Grid(2, 6)
    xx, yy = np.meshgrid(g2.axis(), g2.axis(), indexing="ij")
    d = gradient(g2, (xx + 3 * yy).ravel())
    assert np.allclose(d[0], 1) and np.allclose(d[1], 3)


def test_matrix_norms():
    m = np.array([[1.0, -2.0], [3.0, 4.0]])
    assert matrix_norm(m, 1) == 6.0
    assert matrix_norm(m, "inf") == 7.0
    assert math.isclose(matrix_norm(m, 2), np.linalg.norm(m, 2), rel_tol=1e-7)
    with pytest.raises(ValueError):
        matrix_norm(m, 3)


def test_sector_bound_for_negative_definite():
    op = laplacian_1d(6)
    res = sector_bound(op, math.pi / 4)
    # for a normal operator the bound is 1/sin of the angular gap at worst
    assert 1 - 1e-5 <= res.sup_norm <= 1 / math.sin(math.pi - math.pi / 4) + 1e-8
    with pytest.raises(ValueError):
        sector_bound(DiscreteOperator.diagonal([1.0, -1.0]), 0.1)
