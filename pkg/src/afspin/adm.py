"""ADM energy and momentum from coordinate-sphere surface integrals."""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from .geometry import InitialDataSet
from .grid import GridError, fd_derivative, integrate_sphere

log = logging.getLogger(__name__)

__all__ = ["ADMResult", "adm_energy", "adm_momentum", "default_radii", "extrapolate"]


class ADMResult(NamedTuple):
    value: float | np.ndarray
    table: list
    diagnostics: dict


def default_radii(data: InitialDataSet, count: int = 6) -> np.ndarray:
    return np.linspace(0.4, 0.85, count) * data.grid.r_outer


def _check_radii(data, radii, fit_order):
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) < max(3, fit_order + 2):
        raise ValueError(f"need at least {max(3, fit_order + 2)} radii for a fit of order {fit_order}")
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    if radii[0] <= 0 or radii[-1] > 0.9 * data.grid.r_outer:
        raise GridError(f"radii must lie in (0, 0.9 r_outer] = (0, {0.9 * data.grid.r_outer:.4g}]")
    return radii


def extrapolate(radii, values, fit_order: int = 2, warn_tol: float = 1e-3):
    """Least-squares fit ``Q(R) = Q_inf + sum_k a_k R^-k`` per component.

    Returns ``(Q_inf, diagnostics)``.  The fit residual is compared with
    ``warn_tol * max(|Q|, 1)`` and flagged, never raised.
    """
    radii = np.asarray(radii, dtype=float)
    vals = np.asarray(values, dtype=float)
    A = np.stack([radii ** (-k) for k in range(fit_order + 1)], axis=-1)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = vals - A @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    scale = max(float(np.max(np.abs(vals))), 1.0)
    diag = {
        "fit_order": fit_order,
        "coefficients": coef.tolist(),
        "residual_rms": rms,
        "fit_warning": bool(rms > warn_tol * scale),
    }
    dev = np.abs(vals - coef[0])
    if dev.ndim > 1:
        dev = np.linalg.norm(dev, axis=-1)
    diag["monotone"] = bool(np.all(np.diff(dev) <= 1e-12 * scale))
    if diag["fit_warning"]:
        log.warning("ADM extrapolation residual %.3g exceeds tolerance", rms)
    return coef[0], diag


def adm_energy(data: InitialDataSet, radii=None, n_quad: int = 32, fit_order: int = 2,
               center=(0.0, 0.0, 0.0)) -> ADMResult:
    """``E = 1/16pi lim oint sum_ij (d_j g_ij - d_i g_jj) nu^i du``.

    Coordinate derivatives; the limit is taken by fitting a polynomial in
    ``1/R`` of degree ``fit_order``.  Degree 1 is the plain ``E_inf + a/R``
    model.
    """
    if radii is None:
        radii = default_radii(data)
    radii = _check_radii(data, radii, fit_order)
    g = data.g
    hsp = data.grid.spacing
    V = np.zeros(data.grid.shape + (3,))
    for i in range(3):
        for j in range(3):
            V[..., i] += fd_derivative(g[..., i, j], j, hsp) - fd_derivative(g[..., j, j], i, hsp)
    vals = np.array(
        [float(integrate_sphere(data.grid, V, R, n_quad, normal=True, center=center)) for R in radii]
    ) / (16.0 * np.pi)
    E, diag = extrapolate(radii, vals, fit_order)
    table = [{"R": float(R), "E_R": float(v)} for R, v in zip(radii, vals)]
    return ADMResult(float(E), table, diag)


def adm_momentum(data: InitialDataSet, radii=None, n_quad: int = 32, fit_order: int = 2,
                 center=(0.0, 0.0, 0.0)) -> ADMResult:
    """``P_k = 1/8pi lim oint sum_i (h_ki - delta_ki tr h) nu^i du``."""
    if radii is None:
        radii = default_radii(data)
    radii = _check_radii(data, radii, fit_order)
    h = data.h
    tr = np.einsum("...jj->...", h)
    V = h - tr[..., None, None] * np.eye(3)
    vals = np.array(
        [integrate_sphere(data.grid, V, R, n_quad, normal=True, center=center) for R in radii]
    ) / (8.0 * np.pi)
    P, diag = extrapolate(radii, vals, fit_order)
    table = [{"R": float(R), "P_R": v.tolist()} for R, v in zip(radii, vals)]
    return ADMResult(np.asarray(P, dtype=float), table, diag)
