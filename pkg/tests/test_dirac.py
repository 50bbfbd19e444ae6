import numpy as np
import pytest

from afspin import datasets
from afspin.clifford import STANDARD
from afspin.dirac import (
    SolverError,
    covariant_derivative,
    gradient_energy,
    momentum_action,
    poisson_barrier,
    second_derivative,
    smooth_test_spinor,
    solve_bvp,
    spin_connection,
    weitzenbock_residual,
)
from afspin.grid import Grid

E0 = np.array([1, 0, 0, 0], dtype=complex)


def _wz_series(generator, levels, r_outer, conventions=STANDARD, **params):
    errs, hs = [], []
    for n in levels:
        grid = Grid.centered(n, r_outer)
        data = datasets.generate(generator, grid, **params)
        res = weitzenbock_residual(spin_connection(data, conventions), smooth_test_spinor(grid))
        mask = grid.interior(4) & data.domain & (grid.r >= 4 * data.core_radius)
        errs.append(float(np.max(res[mask])))
        hs.append(grid.spacing)
    orders = [np.log(errs[i] / errs[i + 1]) / np.log(hs[i] / hs[i + 1]) for i in range(len(errs) - 1)]
    return errs, orders


def test_weitzenbock_rounding_level_for_constant_h():
    errs, _ = _wz_series("constant_h", (16, 24), 2.0, c=0.5)
    assert max(errs) < 1e-10


def test_weitzenbock_second_order_on_perturbed_data():
    errs, orders = _wz_series("perturbed", (24, 36), 3.0)
    assert orders[0] >= 1.8


@pytest.mark.parametrize("flag", ["gauss", "codazzi", "connection"])
def test_weitzenbock_detects_sign_mutation(flag):
    errs, orders = _wz_series("perturbed", (24, 36), 3.0, STANDARD.flipped(flag))
    assert errs[1] > 0.1 and orders[0] < 1.0


def test_covariant_derivative_of_constant_spinor_on_flat_data(flat_small):
    psi = np.broadcast_to(E0, flat_small.grid.shape + (4,)).copy()
    assert np.max(np.abs(covariant_derivative(spin_connection(flat_small), psi))) < 1e-13


def test_momentum_action_hermitian_with_eigenvalues():
    P = np.array([0.3, -0.4, 1.2])
    M = momentum_action(P)
    np.testing.assert_allclose(M, M.conj().T, atol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(M), [-1.3, -1.3, 1.3, 1.3], atol=1e-14)


def test_flat_solve_returns_constant(flat_small):
    r = solve_bvp(flat_small, E0)
    assert r.iterations == 0 and r.residual == 0.0
    np.testing.assert_array_equal(r.psi, np.broadcast_to(E0, r.psi.shape))


def test_solve_rejects_non_unit_spinor(flat_small):
    with pytest.raises(ValueError):
        solve_bvp(flat_small, 2 * E0)


def test_schwarzschild_solve_and_preconditioners_agree(schwarzschild_small):
    a = solve_bvp(schwarzschild_small, E0, rtol=1e-10)
    b = solve_bvp(schwarzschild_small, E0, rtol=1e-10, preconditioner="block-jacobi")
    assert a.iterations < 20
    assert np.max(np.abs(a.psi - b.psi)) < 1e-6
    dens = np.sum(np.abs(a.psi) ** 2, axis=-1)
    assert np.max(dens) <= 1 + 10 * schwarzschild_small.grid.spacing ** 2


def test_solver_failure_raises(schwarzschild_small):
    with pytest.raises(SolverError) as exc:
        solve_bvp(schwarzschild_small, E0, preconditioner="none", maxiter=2)
    assert exc.value.history


def test_gradient_energy_flat_is_zero(flat_small):
    psi = np.broadcast_to(E0, flat_small.grid.shape + (4,)).copy()
    ge = gradient_energy(spin_connection(flat_small), psi, E0, 0.0)
    assert ge["energy"] == 0.0 and ge["target"] == 0.0 and ge["defect"] == 0.0


def test_ricci_identity_defect_converges():
    """Antisymmetrized second derivatives reproduce the spinor curvature."""
    vals, hs = [], []
    for n in (24, 36):
        grid = Grid.centered(n, 3.0)
        sc = spin_connection(datasets.perturbed(grid, seed=0))
        _, _, defect = second_derivative(sc, smooth_test_spinor(grid))
        vals.append(np.max(defect[grid.interior(4)]))
        hs.append(grid.spacing)
    assert np.log(vals[0] / vals[1]) / np.log(hs[0] / hs[1]) > 1.5


def test_barrier_vanishes_without_h(schwarzschild_small):
    F, diag = poisson_barrier(schwarzschild_small, np.ones(schwarzschild_small.grid.shape))
    assert np.all(F == 0) and diag["iterations"] == 0


def test_barrier_positive_and_dominates():
    grid = Grid.centered(24, 3.0)
    data = datasets.perturbed(grid, seed=0)
    r = solve_bvp(data, E0)
    F, diag = poisson_barrier(data, r.psi)
    assert diag["min_F"] >= -1e-12
    assert diag["max_principle_excess"] <= 10 * grid.spacing ** 2
