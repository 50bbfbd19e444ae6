"""Uniform Cartesian grid over a truncated ball.

Fields are plain numpy arrays whose first three axes are the grid axes
(``ij`` indexing); any trailing axes hold components.  All reductions go
through ``numpy.sum`` on C-ordered data so repeated runs are bit-identical.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.ndimage import map_coordinates

log = logging.getLogger(__name__)

__all__ = [
    "Grid",
    "fd_derivative",
    "fd_gradient",
    "fd_hessian",
    "integrate_volume",
    "integrate_sphere",
    "sphere_quadrature",
    "interpolate",
    "lp_norm",
    "region_measure",
]


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Node-centred uniform grid.

    Parameters
    ----------
    n : int
        Nodes per axis.
    spacing : float
        Node spacing in coordinate units.
    origin : tuple of float
        Coordinates of node ``(0, 0, 0)``.
    r_outer : float
        Truncation radius.  Nodes with ``r >= r_outer`` carry boundary data.
    """

    n: int
    spacing: float
    origin: tuple
    r_outer: float

    def __post_init__(self):
        if self.n < 5:
            raise GridError(f"grid needs at least 5 nodes per axis, got {self.n}")
        if not self.spacing > 0:
            raise GridError("spacing must be positive")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        lo = np.array(self.origin)
        hi = lo + (self.n - 1) * self.spacing
        # every node inside the ball must have all 26 neighbours on the grid
        need = self.r_outer + self.spacing
        if np.any(lo > -need) or np.any(hi < need):
            raise GridError(
                f"grid box [{lo.min():.3g}, {hi.max():.3g}] does not contain the "
                f"ball of radius {self.r_outer} with a one-node margin"
            )

    @classmethod
    def centered(cls, n: int, r_outer: float, spacing: float | None = None) -> "Grid":
        """Grid symmetric about the coordinate origin.

        With ``spacing=None`` the spacing is chosen so that two node layers
        lie outside the ball along each axis.  For even ``n`` the coordinate
        origin sits at a cell centre, which keeps punctures off the nodes.
        """
        if spacing is None:
            spacing = r_outer / ((n - 1) / 2.0 - 2.0)
        half = 0.5 * (n - 1) * spacing
        return cls(n=n, spacing=float(spacing), origin=(-half,) * 3, r_outer=float(r_outer))

    @property
    def shape(self) -> tuple:
        return (self.n,) * 3

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @cached_property
    def axes(self) -> tuple:
        return tuple(o + self.spacing * np.arange(self.n) for o in self.origin)

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n, n, n, 3)``."""
        x, y, z = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([x, y, z], axis=-1)

    @cached_property
    def r(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords ** 2, axis=-1))

    @cached_property
    def ball(self) -> np.ndarray:
        """Nodes strictly inside the truncation radius (the unknowns of BVPs)."""
        return self.r < self.r_outer

    def interior(self, layers: int = 2) -> np.ndarray:
        """Ball nodes at least ``layers`` nodes away from the outer shell."""
        return self.r < self.r_outer - layers * self.spacing


def fd_derivative(f: np.ndarray, axis: int, h: float, order: int = 1) -> np.ndarray:
    """Second-order accurate finite difference along a grid axis.

    ``axis`` is 0, 1 or 2.  Interior nodes use central stencils, the end
    nodes one-sided three- (first derivative) or four-point (second
    derivative) stencils, so both are exact for quadratics.
    """
    if f.shape[axis] < 5:
        raise GridError(f"fd_derivative needs >= 5 nodes along axis {axis}, got {f.shape[axis]}")
    if order == 1:
        return np.gradient(f, h, axis=axis, edge_order=2)
    if order != 2:
        raise ValueError("order must be 1 or 2")
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
    out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
    out /= h * h
    return np.moveaxis(out, 0, axis)


def fd_gradient(f: np.ndarray, h: float) -> np.ndarray:
    """All three first derivatives; the new axis is placed last."""
    return np.stack([fd_derivative(f, a, h) for a in range(3)], axis=-1)


def fd_hessian(f: np.ndarray, h: float) -> np.ndarray:
    """Symmetric matrix of second derivatives, two new trailing axes."""
    out = np.empty(f.shape + (3, 3), dtype=f.dtype)
    for a in range(3):
        out[..., a, a] = fd_derivative(f, a, h, order=2)
        da = fd_derivative(f, a, h)
        for b in range(a + 1, 3):
            out[..., a, b] = out[..., b, a] = fd_derivative(da, b, h)
    return out


def _check_region(f, region):
    vals = f[region]
    if not np.all(np.isfinite(vals)):
        raise GridError("non-finite values inside the integration region")
    return vals


def integrate_volume(grid: Grid, f, vol_element, region=None) -> float:
    """Node-sum quadrature of ``f dmu`` over ``region``.

    ``vol_element`` is ``sqrt(det g)``; ``region`` defaults to the ball.
    """
    if region is None:
        region = grid.ball
    f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
    vol = np.broadcast_to(np.asarray(vol_element, dtype=float), grid.shape)
    vals = _check_region(f, region)
    w = vol[region]
    if np.any(w <= 0):
        raise GridError("volume element must be positive on the region")
    return float(np.sum(vals * w) * grid.cell_volume)


def region_measure(grid: Grid, region, vol_element) -> float:
    """Metric volume of a node set."""
    if not np.any(region):
        return 0.0
    return integrate_volume(grid, 1.0, vol_element, region)


def lp_norm(grid: Grid, f, p: float, vol_element, region=None, return_flag: bool = False):
    """``(int_region |f|^p dmu)^(1/p)``.

    Exponents below one are accepted as formal quantities.  An empty region
    gives 0; with ``return_flag`` the result is ``(value, empty)``.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    if region is None:
        region = grid.ball
    empty = not np.any(region)
    if empty:
        val = 0.0
    else:
        val = integrate_volume(grid, np.abs(f) ** p, vol_element, region) ** (1.0 / p)
    return (val, empty) if return_flag else val


def sphere_quadrature(n_quad: int):
    """Gauss-Legendre in ``cos(theta)`` times a uniform azimuthal rule.

    Returns unit normals ``(N, 3)`` and weights summing to ``4 pi``.
    """
    if n_quad < 16:
        raise GridError("n_quad must be at least 16")
    mu, wmu = np.polynomial.legendre.leggauss(n_quad)
    nphi = 2 * n_quad
    phi = (np.arange(nphi) + 0.5) * (2.0 * np.pi / nphi)
    st = np.sqrt(1.0 - mu ** 2)
    nu = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(mu, nphi),
        ],
        axis=-1,
    )
    w = np.repeat(wmu, nphi) * (2.0 * np.pi / nphi)
    return nu, w


def interpolate(grid: Grid, f: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a (possibly multi-component) field."""
    idx = ((points - np.array(grid.origin)) / grid.spacing).T
    comp_shape = f.shape[3:]
    flat = f.reshape(grid.shape + (-1,))
    out = np.empty((points.shape[0], flat.shape[-1]), dtype=f.dtype)
    for c in range(flat.shape[-1]):
        fc = flat[..., c]
        if np.iscomplexobj(fc):
            out[:, c] = map_coordinates(fc.real, idx, order=1) + 1j * map_coordinates(
                fc.imag, idx, order=1
            )
        else:
            out[:, c] = map_coordinates(fc, idx, order=1)
    return out.reshape((points.shape[0],) + comp_shape)


def integrate_sphere(grid: Grid, f, R: float, n_quad: int = 32, normal: bool = False,
                     center=(0.0, 0.0, 0.0)):
    """Integrate over the coordinate sphere ``S_R`` with the flat area form.

    With ``normal=False`` returns ``oint f du`` (same trailing shape as ``f``).
    With ``normal=True`` the last component axis of ``f`` is contracted with
    the unit normal, i.e. ``oint f_i nu^i du``; a scalar ``f`` then yields the
    vector ``oint f nu du``.
    """
    if R > grid.r_outer:
        raise GridError(f"sphere radius {R} exceeds r_outer={grid.r_outer}")
    nu, w = sphere_quadrature(n_quad)
    pts = np.asarray(center, dtype=float) + R * nu
    f = np.asarray(f)
    if f.ndim == 0:
        vals = np.full(len(w), f, dtype=float)
    else:
        vals = interpolate(grid, f, pts)
    w = w * R * R
    if normal:
        if vals.ndim == 1:
            return np.einsum("p,p,pi->i", w, vals, nu)
        return np.einsum("p,p...i,pi->...", w, vals, nu)
    return np.tensordot(w, vals, axes=(0, 0))
