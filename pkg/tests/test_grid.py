import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afspin.grid import (
    Grid,
    GridError,
    fd_derivative,
    fd_hessian,
    integrate_sphere,
    integrate_volume,
    interpolate,
    lp_norm,
    region_measure,
    sphere_quadrature,
)


def test_centered_grid_contains_ball():
    g = Grid.centered(32, 5.0)
    assert g.shape == (32, 32, 32)
    assert np.all(g.r[g.ball] < 5.0)
    # two node layers beyond the ball along each axis
    assert g.axes[0][-1] >= 5.0 + g.spacing


def test_grid_rejects_small_box():
    with pytest.raises(GridError):
        Grid(n=10, spacing=0.1, origin=(-0.45,) * 3, r_outer=1.0)
    with pytest.raises(GridError):
        Grid(n=4, spacing=1.0, origin=(-1.5,) * 3, r_outer=0.1)


def test_fd_exact_on_quadratics():
    g = Grid.centered(16, 2.0)
    x, y, z = np.moveaxis(g.coords, -1, 0)
    f = 3 * x ** 2 - x * y + 2 * z ** 2 + y
    np.testing.assert_allclose(fd_derivative(f, 0, g.spacing), 6 * x - y, atol=1e-10)
    H = fd_hessian(f, g.spacing)
    np.testing.assert_allclose(H[..., 0, 0], 6.0, atol=1e-9)
    np.testing.assert_allclose(H[..., 0, 1], -1.0, atol=1e-9)
    np.testing.assert_allclose(H[..., 2, 2], 4.0, atol=1e-9)


def test_fd_second_order_convergence():
    errs, hs = [], []
    for n in (20, 40):
        g = Grid.centered(n, 1.0)
        x = g.coords[..., 0]
        err = fd_derivative(np.sin(2 * x), 0, g.spacing) - 2 * np.cos(2 * x)
        errs.append(np.max(np.abs(err)))
        hs.append(g.spacing)
    order = np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1])
    assert order > 1.8


def test_integrate_volume_ball():
    g = Grid.centered(48, 1.0)
    vol = integrate_volume(g, 1.0, 1.0)
    assert vol == pytest.approx(4 / 3 * np.pi, rel=0.02)
    assert region_measure(g, np.zeros(g.shape, bool), 1.0) == 0.0


def test_lp_norm_scaling_and_empty():
    g = Grid.centered(16, 1.0)
    f = g.r ** 2
    a = lp_norm(g, f, 3.0, 1.0)
    assert lp_norm(g, -2.5 * f, 3.0, 1.0) == pytest.approx(2.5 * a)
    val, empty = lp_norm(g, f, 2.0, 1.0, np.zeros(g.shape, bool), return_flag=True)
    assert val == 0.0 and empty
    with pytest.raises(ValueError):
        lp_norm(g, f, 0.0, 1.0)


def test_integrate_volume_rejects_nonfinite():
    g = Grid.centered(16, 1.0)
    f = np.ones(g.shape)
    f[8, 8, 8] = np.nan
    with pytest.raises(GridError):
        integrate_volume(g, f, 1.0)


def test_sphere_quadrature_exact_for_polynomials():
    nu, w = sphere_quadrature(16)
    assert np.sum(w) == pytest.approx(4 * np.pi)
    assert np.sum(w * nu[:, 2] ** 2) == pytest.approx(4 * np.pi / 3)
    assert np.sum(w * nu[:, 0] ** 2 * nu[:, 1] ** 2) == pytest.approx(4 * np.pi / 15)
    with pytest.raises(GridError):
        sphere_quadrature(8)


def test_integrate_sphere_flux_of_radial_field():
    g = Grid.centered(32, 4.0)
    # trilinear interpolation is exact for linear fields: flux of x is 4 pi R^3
    for R in (1.0, 2.5):
        assert integrate_sphere(g, g.coords, R, normal=True) == pytest.approx(4 * np.pi * R ** 3, rel=1e-12)
    with pytest.raises(GridError):
        integrate_sphere(g, g.coords, 5.0, normal=True)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_interpolation_exact_for_linear_fields(a, b, c):
    g = Grid.centered(12, 1.0)
    f = a * g.coords[..., 0] + b * g.coords[..., 1] + c * g.coords[..., 2] + 0.5
    pts = np.random.default_rng(0).uniform(-0.9, 0.9, (20, 3))
    np.testing.assert_allclose(interpolate(g, f, pts), pts @ [a, b, c] + 0.5, atol=1e-12)
