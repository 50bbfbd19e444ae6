"""Analytic initial-data generators and the AFID1 field file format."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .geometry import InitialDataSet
from .grid import Grid

log = logging.getLogger(__name__)

__all__ = [
    "flat",
    "schwarzschild_isotropic",
    "bowen_york",
    "bowen_york_extrinsic",
    "constant_h",
    "round_sphere",
    "perturbed",
    "GENERATORS",
    "generate",
    "save",
    "load",
    "AFIDError",
    "MagicError",
    "ByteOrderError",
    "DimensionError",
    "TruncatedPayloadError",
    "NonFiniteError",
]

_EYE = np.eye(3)


def _conformal(grid: Grid, phi: np.ndarray) -> np.ndarray:
    return (phi ** 4)[..., None, None] * _EYE


def _safe_r(grid: Grid) -> np.ndarray:
    r = grid.r.copy()
    # nodes exactly at the origin only occur on odd grids; nudge them
    r[r == 0.0] = 0.25 * grid.spacing
    return r


def flat(grid: Grid) -> InitialDataSet:
    g = np.broadcast_to(_EYE, grid.shape + (3, 3)).copy()
    h = np.zeros(grid.shape + (3, 3))
    return InitialDataSet(grid, g, h, provenance={"generator": "flat", "params": {}, "E": 0.0, "P": [0.0] * 3})


def schwarzschild_isotropic(grid: Grid, m: float) -> InitialDataSet:
    """Time-symmetric Schwarzschild slice ``g = (1 + m/2r)^4 delta``.

    The inner asymptotic end ``r < m/2`` is declared the compact set K.
    """
    if m < 0:
        raise ValueError(f"mass must be non-negative, got {m}")
    phi = 1.0 + m / (2.0 * _safe_r(grid))
    return InitialDataSet(
        grid,
        _conformal(grid, phi),
        np.zeros(grid.shape + (3, 3)),
        provenance={"generator": "schwarzschild", "params": {"m": float(m)}, "E": float(m), "P": [0.0] * 3},
        core_radius=0.5 * m,
    )


def bowen_york_extrinsic(x: np.ndarray, P) -> np.ndarray:
    """Flat-space Bowen-York tensor ``(3/2r^2)(P n + n P - (delta - n n) P.n)``."""
    P = np.asarray(P, dtype=float)
    r = np.sqrt(np.sum(x ** 2, axis=-1))
    n = x / r[..., None]
    pn = n @ P
    A = np.einsum("i,...j->...ij", P, n)
    A = A + np.swapaxes(A, -1, -2) - (_EYE - np.einsum("...i,...j->...ij", n, n)) * pn[..., None, None]
    return 1.5 / r[..., None, None] ** 2 * A


def _dec_source(r, m, pmag):
    """Radial source with ``f >= phi0^-7 |A|^2 / 8`` for the Bowen-York tensor."""
    return 216.0 * pmag ** 2 * r ** 3 / (2.0 * r + m) ** 7


def _radial_potential(m, pmag, rmax):
    """Decaying solution of ``-Lap w = f`` and its monopole coefficient."""
    f = lambda s: _dec_source(s, m, pmag)  # noqa: E731
    mono = integrate.quad(lambda s: f(s) * s * s, 0.0, np.inf, limit=200)[0]
    rs = np.geomspace(1e-4, max(10.0 * rmax, 100.0), 800)
    inner = np.array([integrate.quad(lambda s: f(s) * s * s, 0.0, r, limit=200)[0] for r in rs])
    outer = np.array([integrate.quad(lambda s: f(s) * s, r, np.inf, limit=200)[0] for r in rs])
    w = inner / rs + outer
    spline = CubicSpline(np.log(rs), w)

    def evaluate(r):
        r = np.asarray(r, dtype=float)
        out = np.where(r > rs[-1], mono / np.maximum(r, rs[-1]), 0.0)
        inside = r <= rs[-1]
        out[inside] = spline(np.log(np.clip(r[inside], rs[0], None)))
        return out

    return evaluate, mono


def bowen_york(grid: Grid, P_vec, m_conf: float, dec_matter: bool = True) -> InitialDataSet:
    """Boosted puncture with the Bowen-York extrinsic curvature.

    The conformal factor is ``phi = 1 + m_conf/2r + w`` and the physical
    second fundamental form is ``h = phi^-2 A_BY``, so the momentum
    constraint and ``tr h = 0`` hold exactly.  With ``dec_matter`` the radial
    correction ``w >= 0`` supplies enough energy density that the dominant
    energy condition holds and the curvature term of the Weitzenboeck
    formula is non-negative; with ``dec_matter=False`` ``w = 0`` and the
    Hamiltonian constraint violation is left in place.

    The ``provenance`` records the exact energy ``m_conf + 2 * mono(w)``.
    """
    P_vec = np.asarray(P_vec, dtype=float)
    if P_vec.shape != (3,):
        raise ValueError("P_vec must be a 3-vector")
    if not m_conf > 0:
        raise ValueError("m_conf must be positive for the Bowen-York puncture")
    pmag = float(np.linalg.norm(P_vec))
    r = _safe_r(grid)
    phi = 1.0 + m_conf / (2.0 * r)
    mono = 0.0
    if dec_matter and pmag > 0:
        wfun, mono = _radial_potential(m_conf, pmag, grid.r_outer * np.sqrt(3.0))
        phi = phi + wfun(r)
    x = grid.coords.copy()
    x[grid.r == 0.0] = (0.25 * grid.spacing, 0.0, 0.0)
    A = bowen_york_extrinsic(x, P_vec)
    h = A / (phi ** 2)[..., None, None]
    E = m_conf + 2.0 * mono
    prov = {
        "generator": "bowen_york",
        "params": {"P": P_vec.tolist(), "m_conf": float(m_conf), "dec_matter": bool(dec_matter)},
        "E": E,
        "P": P_vec.tolist(),
    }
    return InitialDataSet(grid, _conformal(grid, phi), h, provenance=prov, core_radius=0.5 * m_conf)


def constant_h(grid: Grid, c: float) -> InitialDataSet:
    """Flat metric with ``h = c delta`` (not asymptotically flat)."""
    g = np.broadcast_to(_EYE, grid.shape + (3, 3)).copy()
    h = np.broadcast_to(c * _EYE, grid.shape + (3, 3)).copy()
    return InitialDataSet(grid, g, h, provenance={"generator": "constant_h", "params": {"c": float(c)}})


def round_sphere(grid: Grid, a: float) -> InitialDataSet:
    """Stereographic chart of the round 3-sphere of radius ``a`` (``s = 6/a^2``)."""
    g = (2.0 * a * a / (a * a + grid.r ** 2))[..., None, None] ** 2 * _EYE
    return InitialDataSet(
        grid, g, np.zeros(grid.shape + (3, 3)), provenance={"generator": "round_sphere", "params": {"a": float(a)}}
    )


def perturbed(grid: Grid, amplitude: float = 0.1, h_amplitude: float = 0.3, width: float | None = None,
              seed: int = 0) -> InitialDataSet:
    """Smooth compactly concentrated perturbation of flat data.

    ``g = delta + amplitude * G(x) S`` and ``h = h_amplitude * G(x) T(x)`` with
    a Gaussian ``G``, a fixed random symmetric ``S`` and a random linear
    symmetric ``T``; used for Weitzenboeck residual and convention tests.
    """
    rng = np.random.default_rng(seed)
    if width is None:
        width = 0.35 * grid.r_outer
    S = rng.normal(size=(3, 3))
    S = 0.5 * (S + S.T) / np.linalg.norm(S, 2)
    T0 = rng.normal(size=(3, 3))
    T0 = 0.5 * (T0 + T0.T)
    T1 = rng.normal(size=(3, 3, 3)) / width
    T1 = 0.5 * (T1 + np.swapaxes(T1, 0, 1))
    x = grid.coords
    G = np.exp(-np.sum(x ** 2, axis=-1) / width ** 2)
    g = _EYE + amplitude * G[..., None, None] * S
    T = T0 + np.einsum("ijk,...k->...ij", T1, x)
    h = h_amplitude * G[..., None, None] * T
    prov = {
        "generator": "perturbed",
        "params": {"amplitude": amplitude, "h_amplitude": h_amplitude, "width": width, "seed": seed},
        "E": 0.0,
        "P": [0.0] * 3,
    }
    return InitialDataSet(grid, g, h, provenance=prov)


GENERATORS = {
    "flat": lambda grid, **kw: flat(grid),
    "schwarzschild": lambda grid, m=1.0, **kw: schwarzschild_isotropic(grid, m),
    "bowen_york": lambda grid, P=(0.0, 0.0, 0.5), m_conf=1.0, dec_matter=True, **kw: bowen_york(
        grid, P, m_conf, dec_matter
    ),
    "constant_h": lambda grid, c=0.5, **kw: constant_h(grid, c),
    "round_sphere": lambda grid, a=2.0, **kw: round_sphere(grid, a),
    "perturbed": lambda grid, seed=0, **kw: perturbed(grid, seed=seed),
}


def generate(name: str, grid: Grid, **params) -> InitialDataSet:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(grid, **params)


# ---------------------------------------------------------------------------
# AFID1 files

MAGIC = b"AFID1"


class AFIDError(IOError):
    pass


class MagicError(AFIDError):
    pass


class ByteOrderError(AFIDError):
    pass


class DimensionError(AFIDError):
    pass


class TruncatedPayloadError(AFIDError):
    pass


class NonFiniteError(AFIDError):
    pass


def save(data: InitialDataSet, path) -> None:
    """Write ``g`` and ``h`` node-major with components innermost."""
    grid = data.grid
    header = {
        "n_per_axis": grid.n,
        "spacing": grid.spacing,
        "origin": list(grid.origin),
        "r_outer": grid.r_outer,
        "byte_order": "little",
        "fields": [{"name": "g", "rank": 2, "components": 9}, {"name": "h", "rank": 2, "components": 9}],
        "core_radius": data.core_radius,
        "provenance": data.provenance,
    }
    payload = np.concatenate(
        [data.g.reshape(grid.shape + (9,)), data.h.reshape(grid.shape + (9,))], axis=-1
    ).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(payload).tobytes())


def load(path) -> InitialDataSet:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise MagicError(f"{path}: bad magic/version {raw[:5]!r}, expected {MAGIC!r}")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise TruncatedPayloadError(f"{path}: header line not terminated")
    try:
        header = json.loads(raw[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MagicError(f"{path}: unreadable header: {exc}") from exc
    if header.get("byte_order", "little") != "little":
        raise ByteOrderError(f"{path}: byte-order {header.get('byte_order')!r} not supported (little-endian only)")
    n = int(header["n_per_axis"])
    fields = header["fields"]
    names = [f["name"] for f in fields]
    for f in fields:
        if f["components"] != 3 ** f["rank"]:
            raise DimensionError(f"{path}: field {f['name']} rank {f['rank']} with {f['components']} components")
    if sorted(names) != ["g", "h"]:
        raise DimensionError(f"{path}: expected fields g and h, got {names}")
    ncomp = sum(f["components"] for f in fields)
    body = raw[end + 1:]
    expected = n ** 3 * ncomp * 8
    if len(body) < expected:
        raise TruncatedPayloadError(f"{path}: truncated payload, {len(body)} of {expected} bytes")
    if len(body) > expected:
        raise DimensionError(f"{path}: payload has {len(body)} bytes, header implies {expected}")
    arr = np.frombuffer(body, dtype="<f8").reshape((n, n, n, ncomp)).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0][:3])
        raise NonFiniteError(f"{path}: non-finite payload at node {bad}")
    out, off = {}, 0
    for f in fields:
        out[f["name"]] = arr[..., off:off + f["components"]].reshape((n, n, n, 3, 3)).copy()
        off += f["components"]
    grid = Grid(n=n, spacing=float(header["spacing"]), origin=tuple(header["origin"]), r_outer=float(header["r_outer"]))
    return InitialDataSet(
        grid, out["g"], out["h"], provenance=header.get("provenance", {}), core_radius=float(header.get("core_radius", 0.0))
    )
