"""Curvature of initial data (g, h) on the grid.

Index conventions: coordinate tensors carry their indices in the trailing
axes in the order written, e.g. ``gamma[..., k, i, j]`` is ``Gamma^k_ij``.
Frame quantities use the lower-triangular orthonormal triad
``e_a = E[a, i] d_i`` obtained from the Cholesky factor of ``g``.

Riemann tensors follow ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]`` and
``R_{ijkl} = <R(e_i, e_j) e_k, e_l>`` so that a unit round sphere has
``Ric = 2 g`` and ``s = 6``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .clifford import STANDARD, Conventions
from .grid import Grid, fd_derivative, fd_hessian, interpolate, lp_norm, sphere_quadrature

log = logging.getLogger(__name__)

__all__ = [
    "InitialDataSet",
    "Geometry",
    "GeometryError",
    "geometry",
    "frame_field",
    "christoffels",
    "ricci_from_riemann",
    "riemann",
    "intrinsic_curvature",
    "covariant_dh",
    "gauss_codazzi_restrict",
    "rbar_norm2",
    "rbar_covariant_norm",
    "script_R",
    "h_norms",
    "isoperimetric_estimate",
]


class GeometryError(ValueError):
    pass


@dataclass
class InitialDataSet:
    """Metric and second fundamental form sampled on a grid.

    ``core_radius`` marks the compact set K (nodes with ``r < core_radius``)
    which curvature integrals and region measures exclude.
    """

    grid: Grid
    g: np.ndarray
    h: np.ndarray
    provenance: dict = field(default_factory=dict)
    core_radius: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        shp = self.grid.shape + (3, 3)
        if self.g.shape != shp or self.h.shape != shp:
            raise GeometryError(f"metric fields must have shape {shp}")

    @property
    def core(self) -> np.ndarray:
        return self.grid.r < self.core_radius

    @property
    def domain(self) -> np.ndarray:
        """Ball minus the compact core: the integration domain for curvature."""
        return self.grid.ball & ~self.core

    @property
    def name(self) -> str:
        return self.provenance.get("generator", "custom")


# ---------------------------------------------------------------------------
# basic pointwise algebra


def _inv_sqrtdet(g):
    det = np.linalg.det(g)
    bad = ~(det > 0)
    if np.any(bad):
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise GeometryError(f"metric not positive definite at node {loc}")
    return np.linalg.inv(g), np.sqrt(det)


def frame_field(g: np.ndarray) -> np.ndarray:
    """Orthonormal triad ``E[..., a, i]`` (lower triangular, ``E = L^-1``)."""
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("metric not positive definite") from exc
    return np.linalg.inv(L)


def _d(f, h):
    """Coordinate gradient with the derivative index placed last."""
    return np.stack([fd_derivative(f, a, h) for a in range(3)], axis=-1)


def christoffels(g: np.ndarray, ginv: np.ndarray, h: float) -> np.ndarray:
    """``Gamma^k_ij`` from finite differences of the metric."""
    dg = _d(g, h)  # dg[..., i, j, k] = d_k g_ij
    # lower[..., l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    lower = 0.5 * (
        np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg) - np.einsum("...ijl->...lij", dg)
    )
    return np.einsum("...kl,...lij->...kij", ginv, lower)


def riemann(g: np.ndarray, gam: np.ndarray, h: float) -> np.ndarray:
    """Fully covariant ``R_{ijkl} = <R(d_i, d_j) d_k, d_l>``.

    Uses second derivatives of the metric with compact three-point stencils
    plus quadratic Christoffel terms, which is markedly more accurate near
    steep conformal factors than differentiating the Christoffel symbols.
    """
    H = fd_hessian(g, h)  # H[..., a, b, c, d] = d_c d_d g_ab
    # M_{abcd} = <d_a, R(d_c, d_d) d_b>
    M = 0.5 * (
        np.einsum("...adbc->...abcd", H)
        + np.einsum("...bcad->...abcd", H)
        - np.einsum("...acbd->...abcd", H)
        - np.einsum("...bdac->...abcd", H)
    )
    del H
    low = np.einsum("...mn,...nad->...mad", g, gam)
    M += np.einsum("...mbc,...mad->...abcd", gam, low) - np.einsum("...mbd,...mac->...abcd", gam, low)
    return np.ascontiguousarray(np.einsum("...lkij->...ijkl", M))


def ricci_from_riemann(ginv: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``Ric_jk = g^il R_{ijkl}``."""
    return np.einsum("...il,...ijkl->...jk", ginv, R)


def covariant_dh(hij: np.ndarray, gam: np.ndarray, h: float) -> np.ndarray:
    """``(nabla_k h)_ij`` stored as ``[..., k, i, j]``."""
    dh = np.moveaxis(_d(hij, h), -1, -3)
    return dh - np.einsum("...lki,...lj->...kij", gam, hij) - np.einsum("...lkj,...il->...kij", gam, hij)


def _to_frame(T, E, nidx):
    """Contract every trailing coordinate index of ``T`` with the triad."""
    out = T
    letters = "abcdef"[:nidx]
    coord = "ijklmn"[:nidx]
    for p in range(nidx):
        src = letters[:p] + coord[p] + coord[p + 1 :]
        dst = letters[: p + 1] + coord[p + 1 :]
        out = np.einsum(f"...{letters[p]}{coord[p]},...{src}->...{dst}", E, out)
    return out


class Geometry:
    """Derived fields of an ``InitialDataSet`` computed once and reused."""

    def __init__(self, data: InitialDataSet, conventions: Conventions = STANDARD):
        self.data = data
        self.grid = data.grid
        self.conventions = conventions
        hsp = self.grid.spacing
        self.ginv, self.sqrtg = _inv_sqrtdet(data.g)
        self.E = frame_field(data.g)
        self.gamma = christoffels(data.g, self.ginv, hsp)
        self.h_frame = _to_frame(data.h, self.E, 2)
        self.frame_conn = self._frame_connection()
        self._riemann = None
        self._ricci = None

    def _frame_connection(self):
        """``Gamma_{iab} = <nabla_{e_i} e_a, e_b>`` in frame components."""
        hsp = self.grid.spacing
        E = self.E
        dE = _d(E, hsp)  # dE[..., a, k, m] = d_m E_a^k
        # (nabla_{e_i} e_a)^k = E_i^m (d_m E_a^k + Gamma^k_ml E_a^l)
        nab = np.einsum("...im,...akm->...iak", E, dE)
        nab += np.einsum("...im,...kml,...al->...iak", E, self.gamma, E)
        Elow = np.einsum("...bn,...nk->...bk", E, self.data.g)  # e_b lowered
        return np.einsum("...iak,...bk->...iab", nab, Elow)

    # -- curvature ---------------------------------------------------------

    @property
    def riemann(self):
        if self._riemann is None:
            self._riemann = riemann(self.data.g, self.gamma, self.grid.spacing)
        return self._riemann

    @property
    def ricci(self):
        if self._ricci is None:
            self._ricci = ricci_from_riemann(self.ginv, self.riemann)
        return self._ricci

    @property
    def scalar(self):
        return np.einsum("...jk,...jk->...", self.ginv, self.ricci)

    def riemann_frame(self):
        return _to_frame(self.riemann, self.E, 4)

    def nabla_h(self):
        """Coordinate ``nabla_k h_ij``."""
        return covariant_dh(self.data.h, self.gamma, self.grid.spacing)

    def nabla_h_frame(self):
        return _to_frame(self.nabla_h(), self.E, 3)

    def momentum_covector(self):
        """Frame components of ``d_a tr h - nabla^b h_ab``."""
        nh = self.nabla_h_frame()  # [..., c, a, b] = nabla_c h_ab
        return np.einsum("...abb->...a", nh) - np.einsum("...bab->...a", nh)


def geometry(data: InitialDataSet, conventions: Conventions = STANDARD) -> Geometry:
    key = ("geometry", conventions)
    if key not in data._cache:
        data._cache[key] = Geometry(data, conventions)
    return data._cache[key]


def intrinsic_curvature(data: InitialDataSet):
    """``(Riemann_{ijkl}, Ric_{jk}, s)`` in coordinate components."""
    geo = geometry(data)
    return geo.riemann, geo.ricci, geo.scalar


def gauss_codazzi_restrict(data: InitialDataSet, conventions: Conventions = STANDARD) -> np.ndarray:
    """Restricted spacetime curvature in frame components.

    Returns ``Rbar[..., i, j, alpha, beta]`` with ``i, j`` spatial (0..2 for
    e_1..e_3) and ``alpha, beta`` in 0..3 (0 is the normal).
    """
    geo = geometry(data, conventions)
    hf = geo.h_frame
    Rs = geo.riemann_frame()
    Rs = Rs + conventions.gauss * (
        np.einsum("...ac,...bd->...abcd", hf, hf) - np.einsum("...ad,...bc->...abcd", hf, hf)
    )
    nh = geo.nabla_h_frame()  # [..., c, a, b]
    mixed = conventions.codazzi * (nh - np.einsum("...bac->...abc", nh))  # R_{ab0c}
    out = np.zeros(Rs.shape[:-4] + (3, 3, 4, 4))
    out[..., 1:, 1:] = Rs
    out[..., 0, 1:] = mixed
    out[..., 1:, 0] = -mixed
    return out


def rbar_norm2(Rbar: np.ndarray) -> np.ndarray:
    """``|Rbar_M|^2 = sum_{i,j spatial; alpha,beta} Rbar_{ij alpha beta}^2``."""
    return np.sum(Rbar ** 2, axis=(-4, -3, -2, -1))


def rbar_covariant_norm(data: InitialDataSet, Rbar: np.ndarray | None = None,
                        conventions: Conventions = STANDARD) -> np.ndarray:
    """Pointwise ``|nabla Rbar_M|`` in frame components.

    Spatial slots are differentiated with the Levi-Civita connection of
    ``g``; the normal slot is treated as parallel.  One frame direction is
    processed at a time to bound memory.
    """
    geo = geometry(data, conventions)
    if Rbar is None:
        Rbar = gauss_codazzi_restrict(data, conventions)
    hsp = data.grid.spacing
    G = geo.frame_conn  # [..., c, a, m] = <nabla_c e_a, e_m>
    G4 = np.zeros(G.shape[:-3] + (3, 4, 4))
    G4[..., 1:, 1:] = G  # spatial part acting on the 4-index slots
    out = np.zeros(data.grid.shape)
    for c in range(3):
        D = np.zeros_like(Rbar)
        for m in range(3):
            D += geo.E[..., c, m, None, None, None, None] * fd_derivative(Rbar, m, hsp)
        Gc = G[..., c, :, :]
        G4c = G4[..., c, :, :]
        D -= np.einsum("...im,...mjab->...ijab", Gc, Rbar)
        D -= np.einsum("...jm,...imab->...ijab", Gc, Rbar)
        D -= np.einsum("...am,...ijmb->...ijab", G4c, Rbar)
        D -= np.einsum("...bm,...ijam->...ijab", G4c, Rbar)
        out += np.sum(D ** 2, axis=(-4, -3, -2, -1))
    return np.sqrt(out)


def script_R(data: InitialDataSet, conventions: Conventions = STANDARD) -> np.ndarray:
    """Curvature term of the Weitzenboeck formula as even-algebra coefficients.

    Scalar part ``(s + (tr h)^2 - |h|^2)/4`` and boost part
    ``Ric(nu, e_a)/2`` on ``nu.e_a`` with
    ``Ric(nu, e_a) = codazzi * (d_a tr h - nabla^b h_ab)``; ordering follows
    ``EVEN_LABELS``.
    """
    geo = geometry(data, conventions)
    hf = geo.h_frame
    trh = np.einsum("...aa->...", hf)
    h2 = np.sum(hf ** 2, axis=(-2, -1))
    out = np.zeros(data.grid.shape + (8,))
    out[..., 0] = 0.25 * (geo.scalar - conventions.gauss * (trh ** 2 - h2))
    ric_nu = conventions.codazzi * geo.momentum_covector()
    out[..., 4:7] = 0.5 * ric_nu
    return out


@dataclass
class HNorms:
    h_abs: np.ndarray
    dh_short: np.ndarray
    dh_full: np.ndarray
    norms: dict

    @property
    def rho(self) -> np.ndarray:
        """``|h|^2 + |nabla h|`` (the short density notation)."""
        return self.h_abs ** 2 + self.dh_short


def h_norms(data: InitialDataSet, ps=(2.0, 3.0), rho_ps=(1.2, 3.0), region=None) -> HNorms:
    """Pointwise ``|h|``, the divergence-type ``|nabla h|`` and global norms.

    ``dh_short`` is ``sum_j 3 sqrt(sum_k (d_j h_jk)^2)`` with coordinate
    derivatives and no sum over the repeated ``j`` inside the root;
    ``dh_full`` is the tensor norm of ``nabla h`` in the frame.
    """
    geo = geometry(data)
    grid = data.grid
    hsp = grid.spacing
    h_abs = np.sqrt(np.sum(geo.h_frame ** 2, axis=(-2, -1)))
    dh_short = np.zeros(grid.shape)
    for j in range(3):
        djh = fd_derivative(data.h[..., j, :], j, hsp)
        dh_short += 3.0 * np.sqrt(np.sum(djh ** 2, axis=-1))
    dh_full = np.sqrt(np.sum(geo.nabla_h_frame() ** 2, axis=(-3, -2, -1)))
    if region is None:
        region = data.domain
    norms = {}
    for p in ps:
        norms[f"h_{p:g}"] = lp_norm(grid, h_abs, p, geo.sqrtg, region)
    rho = h_abs ** 2 + dh_short
    for p in rho_ps:
        norms[f"rho_{p:g}"] = lp_norm(grid, rho, p, geo.sqrtg, region)
    return HNorms(h_abs=h_abs, dh_short=dh_short, dh_full=dh_full, norms=norms)


# ---------------------------------------------------------------------------
# isoperimetric constant


def _ball_area_volume(data, geo, center, radius, n_quad=24, n_rad=24):
    nu, w = sphere_quadrature(n_quad)
    c = np.asarray(center, dtype=float)
    pts = c + radius * nu
    gi = interpolate(data.grid, geo.ginv, pts)
    sg = interpolate(data.grid, geo.sqrtg, pts)
    nn = np.sqrt(np.einsum("pi,pij,pj->p", nu, gi, nu))
    area = float(np.sum(w * sg * nn) * radius ** 2)
    x, wx = np.polynomial.legendre.leggauss(n_rad)
    rr = 0.5 * radius * (x + 1.0)
    wr = 0.5 * radius * wx * rr ** 2
    vol = 0.0
    for rk, wk in zip(rr, wr):
        vol += wk * float(np.sum(w * interpolate(data.grid, geo.sqrtg, c + rk * nu)))
    return area, vol


def _cube_area_volume(data, geo, center, half, n_gl=16):
    x, wx = np.polynomial.legendre.leggauss(n_gl)
    x = half * x
    wx = half * wx
    c = np.asarray(center, dtype=float)
    area = 0.0
    for ax in range(3):
        o1, o2 = [a for a in range(3) if a != ax]
        U, V = np.meshgrid(x, x, indexing="ij")
        W = np.outer(wx, wx).ravel()
        for s in (-1.0, 1.0):
            pts = np.zeros((U.size, 3))
            pts[:, ax] = s * half
            pts[:, o1] = U.ravel()
            pts[:, o2] = V.ravel()
            pts += c
            gi = interpolate(data.grid, geo.ginv, pts)
            sg = interpolate(data.grid, geo.sqrtg, pts)
            area += float(np.sum(W * sg * np.sqrt(gi[:, ax, ax])))
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1) + c
    Wv = np.einsum("i,j,k->ijk", wx, wx, wx).ravel()
    vol = float(np.sum(Wv * interpolate(data.grid, geo.sqrtg, pts)))
    return area, vol


def default_trials(data: InitialDataSet):
    """Balls and cubes at several centres and scales inside the ball."""
    R = data.grid.r_outer
    trials = []
    for frac in (0.25, 0.4, 0.55, 0.7):
        trials.append(("ball", (0.0, 0.0, 0.0), frac * R))
        trials.append(("cube", (0.0, 0.0, 0.0), frac * R / np.sqrt(3.0)))
    for frac in (0.2, 0.3):
        for off in ((0.3 * R, 0.0, 0.0), (0.0, -0.3 * R, 0.2 * R)):
            trials.append(("ball", off, frac * R))
    return trials


def isoperimetric_estimate(data: InitialDataSet, trials=None):
    """Upper bound ``min A / V^(2/3)`` over trial regions.

    Returns ``(k, trial)`` where ``trial`` attained the minimum.  Trials
    with zero volume are skipped with a warning.
    """
    geo = geometry(data)
    if trials is None:
        trials = default_trials(data)
    best = (np.inf, None)
    for kind, center, size in trials:
        if kind == "ball":
            area, vol = _ball_area_volume(data, geo, center, size)
        elif kind == "cube":
            area, vol = _cube_area_volume(data, geo, center, size)
        else:
            raise ValueError(f"unknown trial region {kind!r}")
        if not vol > 0:
            log.warning("skipping degenerate trial %s", (kind, center, size))
            continue
        ratio = area / vol ** (2.0 / 3.0)
        if ratio < best[0]:
            best = (ratio, (kind, tuple(center), size))
    return best
