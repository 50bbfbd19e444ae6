import os
import subprocess
import sys

import numpy as np
import pytest

from afspin import datasets, kernels
from afspin.dirac import _problem, apply_bvp_operator, spin_connection, spinor_laplacian
from afspin.grid import Grid

try:
    from afspin import _ckernels  # noqa: F401

    HAVE_C = True
except ImportError:  # pragma: no cover
    HAVE_C = False


def _setup(seed=0):
    grid = Grid.centered(16, 3.0)
    data = datasets.perturbed(grid, seed=seed)
    prob = _problem(spin_connection(data))
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((grid.n ** 3, 4)) + 1j * rng.standard_normal((grid.n ** 3, 4))
    return grid, prob, psi


@pytest.mark.skipif(not HAVE_C, reason="compiled kernel not built")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backends_agree(seed):
    grid, prob, psi = _setup(seed)
    args = (psi, prob.nodes, prob.coef, prob.strides, 1.0 / grid.spacing, prob.perm, prob.phase)
    a = kernels.apply_operator(*args, backend="numpy")
    b = kernels.apply_operator(*args, backend="cython")
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_unknown_backend():
    grid, prob, psi = _setup()
    with pytest.raises(ValueError):
        kernels.apply_operator(psi, prob.nodes, prob.coef, prob.strides, 1.0, prob.perm, prob.phase, backend="cuda")


def test_environment_forces_numpy():
    env = dict(os.environ, AFSPIN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from afspin import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_generic_operator_matches_flat_laplacian():
    grid = Grid.centered(16, 2.0)
    data = datasets.flat(grid)
    x = grid.coords
    psi = np.zeros(grid.shape + (4,), complex)
    psi[..., 0] = x[..., 0] ** 2 + 2j * x[..., 1] * x[..., 2]
    psi[..., 3] = x[..., 2] ** 2 - x[..., 0]
    out = apply_bvp_operator(spin_connection(data), psi)
    mask = grid.ball
    np.testing.assert_allclose(out[..., 0][mask], -2.0, atol=1e-9)
    np.testing.assert_allclose(out[..., 3][mask], -2.0, atol=1e-9)
    np.testing.assert_allclose(out[..., 1:3][mask], 0.0, atol=1e-9)


def test_generic_operator_converges_to_composed_form():
    """The assembled operator and the composed connection Laplacian agree at second order."""
    from afspin.dirac import even_apply, smooth_test_spinor

    errs, hs = [], []
    for n in (20, 30):
        grid = Grid.centered(n, 3.0)
        sc = spin_connection(datasets.perturbed(grid, seed=0))
        psi = smooth_test_spinor(grid)
        a = apply_bvp_operator(sc, psi)
        b = spinor_laplacian(sc, psi) + even_apply(sc.script_R(), psi, sc.rep)
        mask = grid.interior(3)
        errs.append(np.max(np.abs(a - b)[mask]))
        hs.append(grid.spacing)
    assert np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1]) > 1.6
