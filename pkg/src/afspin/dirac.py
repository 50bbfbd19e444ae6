"""Hypersurface Dirac operator, Witten boundary value problem and diagnostics.

Spinor fields are complex arrays of shape ``grid.shape + (4,)``.  Endomorphism
fields that lie in the even Clifford subalgebra (spin connection, curvature
terms, operator coefficients) are stored as 8 real coefficients per node in
the ``EVEN_LABELS`` basis.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, bicgstab

from . import kernels
from .clifford import DEFAULT_REP, STANDARD, CliffordRep, Conventions, even_mul_table
from .geometry import InitialDataSet, geometry, h_norms, script_R
from .grid import Grid, integrate_volume

log = logging.getLogger(__name__)

__all__ = [
    "SpinConnection",
    "SolverError",
    "SolveResult",
    "spin_connection",
    "even_apply",
    "even_mul",
    "covariant_derivative",
    "dirac_apply",
    "spinor_laplacian",
    "weitzenbock_residual",
    "operator_coefficients",
    "apply_bvp_operator",
    "solve_bvp",
    "momentum_action",
    "gradient_energy",
    "second_derivative",
    "poisson_barrier",
    "smooth_test_spinor",
]


class SolverError(RuntimeError):
    """Krylov solve failed; ``history`` holds the sampled relative residuals."""

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


# ---------------------------------------------------------------------------
# even-subalgebra helpers


def _monomial_tables(rep: CliffordRep):
    """``E_k v = phase[k] * v[perm[k]]`` for the even basis."""
    E = rep.even_basis()
    perm = np.argmax(np.abs(E), axis=-1)
    phase = np.take_along_axis(E, perm[..., None], axis=-1)[..., 0]
    check = np.zeros_like(E)
    for k in range(8):
        check[k, np.arange(4), perm[k]] = phase[k]
    if not np.allclose(check, E, atol=0, rtol=0):
        raise ArithmeticError("even basis is not monomial in this representation")
    return perm.astype(np.int64), phase.astype(np.complex128)


def even_apply(coef, psi, rep: CliffordRep = DEFAULT_REP):
    """Apply the even element with coefficients ``coef[..., 8]`` to ``psi``."""
    perm, phase = _monomial_tables(rep)
    out = np.zeros(np.broadcast_shapes(coef.shape[:-1], psi.shape[:-1]) + (4,), dtype=complex)
    for k in range(8):
        out += coef[..., k, None] * (phase[k] * psi[..., perm[k]])
    return out


def even_mul(a, b, rep: CliffordRep = DEFAULT_REP):
    """Product of even elements given by coefficient arrays."""
    idx, sign = even_mul_table(rep)
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(8):
        for l in range(8):
            out[..., idx[k, l]] += sign[k, l] * a[..., k] * b[..., l]
    return out


def _unit(k):
    e = np.zeros(8)
    e[k] = 1.0
    return e


# ---------------------------------------------------------------------------
# connection


@dataclass
class SpinConnection:
    """Spin connection ``Omega_j`` (frame direction ``j``) as even coefficients.

    ``omega[..., j, :]`` represents
    ``1/4 sum_ab Gamma_jab e_a e_b + connection/2 sum_k h_jk nu e_k``.
    """

    data: InitialDataSet
    conventions: Conventions
    rep: CliffordRep
    omega: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def geo(self):
        return geometry(self.data, self.conventions)

    @property
    def grid(self) -> Grid:
        return self.data.grid

    def omega_matrix(self):
        """``Omega_j`` as explicit 4x4 matrices (for tests)."""
        return np.einsum("...k,kab->...ab", self.omega, self.rep.even_basis())

    def script_R(self):
        if "R" not in self._cache:
            self._cache["R"] = script_R(self.data, self.conventions)
        return self._cache["R"]


def spin_connection(data: InitialDataSet, conventions: Conventions = STANDARD,
                    rep: CliffordRep = DEFAULT_REP) -> SpinConnection:
    key = ("spin", conventions, rep.name)
    if key in data._cache:
        return data._cache[key]
    geo = geometry(data, conventions)
    G = geo.frame_conn  # [..., j, a, b]
    om = np.zeros(data.grid.shape + (3, 8))
    om[..., 1] = 0.5 * G[..., 1, 2]
    om[..., 2] = 0.5 * G[..., 2, 0]
    om[..., 3] = 0.5 * G[..., 0, 1]
    om[..., 4:7] = 0.5 * conventions.connection * geo.h_frame
    sc = SpinConnection(data, conventions, rep, om)
    data._cache[key] = sc
    return sc


def _grad(f, h):
    return np.stack([np.gradient(f, h, axis=a, edge_order=2) for a in range(3)], axis=-1)


def covariant_derivative(sc: SpinConnection, psi: np.ndarray) -> np.ndarray:
    """``nabla_{e_j} psi`` stored as ``[..., j, 4]``."""
    dpsi = _grad(psi, sc.grid.spacing)  # [..., 4, m]
    out = np.einsum("...jm,...im->...ji", sc.geo.E, dpsi)
    for j in range(3):
        out[..., j, :] += even_apply(sc.omega[..., j, :], psi, sc.rep)
    return out


def dirac_apply(sc: SpinConnection, psi: np.ndarray) -> np.ndarray:
    """``sum_j e_j . nabla_{e_j} psi``."""
    nab = covariant_derivative(sc, psi)
    g = sc.rep.gamma
    return sum(np.einsum("ab,...b->...a", g[j + 1], nab[..., j, :]) for j in range(3))


def spinor_laplacian(sc: SpinConnection, psi: np.ndarray, nab=None) -> np.ndarray:
    """``-sum_j (nabla_j nabla_j - nabla_{nabla_j e_j}) psi + sum_ij h_ij nu.e_i.nabla_j psi``."""
    if nab is None:
        nab = covariant_derivative(sc, psi)
    G = sc.geo.frame_conn
    hf = sc.geo.h_frame
    out = np.zeros_like(psi)
    for j in range(3):
        nn = covariant_derivative(sc, nab[..., j, :])[..., j, :]
        out -= nn
    out += np.einsum("...jjk,...ka->...a", G, nab)
    nu_e = [sc.rep.gamma[0] @ sc.rep.gamma[i + 1] for i in range(3)]
    for i in range(3):
        v = np.einsum("...j,...ja->...a", hf[..., i, :], nab)
        out += np.einsum("ab,...b->...a", nu_e[i], v)
    return out


def weitzenbock_residual(sc: SpinConnection, psi: np.ndarray) -> np.ndarray:
    """Pointwise ``|D^2 psi - Delta^s psi - R psi|`` (all terms by finite differences)."""
    d2 = dirac_apply(sc, dirac_apply(sc, psi))
    lap = spinor_laplacian(sc, psi)
    rpsi = even_apply(sc.script_R(), psi, sc.rep)
    return np.sqrt(np.sum(np.abs(d2 - lap - rpsi) ** 2, axis=-1))


def smooth_test_spinor(grid: Grid, seed: int = 0, scale: float | None = None) -> np.ndarray:
    """Deterministic smooth spinor field built from a few plane waves."""
    rng = np.random.default_rng(seed)
    if scale is None:
        scale = 2.0 / grid.r_outer
    x = grid.coords
    psi = np.zeros(grid.shape + (4,), dtype=complex)
    for _ in range(3):
        k = rng.normal(size=3) * scale
        chi = rng.normal(size=4) + 1j * rng.normal(size=4)
        phase = rng.uniform(0, 2 * np.pi)
        psi += np.exp(1j * (x @ k + phase))[..., None] * chi
    return psi / 3.0


# ---------------------------------------------------------------------------
# second-order operator in generic form


def operator_coefficients(sc: SpinConnection, nodes=None) -> np.ndarray:
    """Coefficients of ``L = Delta^s + R`` as ``-g^ab d_a d_b + B^b d_b + C``.

    Returns an array of shape ``(n_nodes, 38)`` in the layout expected by
    ``kernels.apply_operator``.  ``nodes`` are flat indices (default: ball).
    """
    grid = sc.grid
    hsp = grid.spacing
    geo = sc.geo
    rep = sc.rep
    if nodes is None:
        nodes = np.flatnonzero(grid.ball)
    E = geo.E  # [..., j, b]
    G = geo.frame_conn  # [..., j, a, b]
    hf = geo.h_frame
    om = sc.omega

    def take(f):
        return f.reshape((-1,) + f.shape[3:])[nodes]

    ginv = take(geo.ginv)
    coef = np.empty((len(nodes), 38))
    coef[:, 0] = ginv[:, 0, 0]
    coef[:, 1] = ginv[:, 1, 1]
    coef[:, 2] = ginv[:, 2, 2]
    coef[:, 3] = ginv[:, 0, 1]
    coef[:, 4] = ginv[:, 0, 2]
    coef[:, 5] = ginv[:, 1, 2]

    dE = take(_grad(E, hsp))  # [n, j, b, m]
    En, Gn, hn, omn = take(E), take(G), take(hf), take(om)
    ejE = np.einsum("njm,njbm->nb", En, dE)  # sum_j e_j(E_j^b)
    V = np.einsum("njjk,nkb->nb", Gn, En)
    for b in range(3):
        B = -2.0 * np.einsum("nj,njk->nk", En[:, :, b], omn)
        B[:, 0] += -ejE[:, b] + V[:, b]
        B[:, 4:7] += np.einsum("nij,nj->ni", hn, En[:, :, b])
        coef[:, 6 + 8 * b: 14 + 8 * b] = B

    dom = _grad(om, hsp)  # [..., j, k, m]
    ejom = np.einsum("njm,njkm->nk", En, take(dom))
    del dom
    C = -ejom
    for j in range(3):
        C -= even_mul(omn[:, j], omn[:, j], rep)
    C += np.einsum("njjk,nkl->nl", Gn, omn)
    for i in range(3):
        hom = np.einsum("nj,njk->nk", hn[:, i, :], omn)
        C += even_mul(np.broadcast_to(_unit(4 + i), hom.shape), hom, rep)
    C += take(sc.script_R())
    coef[:, 30:38] = C
    return coef


@dataclass
class _Problem:
    grid: Grid
    nodes: np.ndarray
    coef: np.ndarray
    perm: np.ndarray
    phase: np.ndarray
    backend: str | None

    @property
    def strides(self):
        n = self.grid.n
        return (n * n, n, 1)

    def apply_full(self, psi_flat):
        return kernels.apply_operator(
            psi_flat, self.nodes, self.coef, self.strides, 1.0 / self.grid.spacing, self.perm, self.phase,
            backend=self.backend,
        )


def _problem(sc: SpinConnection, backend=None) -> _Problem:
    key = "problem"
    if key not in sc._cache:
        nodes = np.flatnonzero(sc.grid.ball).astype(np.int64)
        coef = operator_coefficients(sc, nodes)
        perm, phase = _monomial_tables(sc.rep)
        sc._cache[key] = _Problem(sc.grid, nodes, coef, perm, phase, backend)
    prob = sc._cache[key]
    prob.backend = backend
    return prob


def apply_bvp_operator(sc: SpinConnection, psi: np.ndarray, backend=None) -> np.ndarray:
    """``(Delta^s + R) psi`` on the ball nodes (zero elsewhere), generic stencil."""
    prob = _problem(sc, backend)
    flat = psi.reshape(-1, 4)
    out = np.zeros_like(flat)
    out[prob.nodes] = prob.apply_full(flat)
    return out.reshape(psi.shape)


# ---------------------------------------------------------------------------
# scalar elliptic operators (preconditioner, barrier)


def _axis_distance(grid: Grid, nodes, axis, sign):
    """Fraction ``theta in (0, 1]`` of a cell to the sphere ``r = r_outer``."""
    x = grid.coords.reshape(-1, 3)[nodes]
    a = x[:, axis]
    rest = np.sum(x ** 2, axis=1) - a * a
    t = np.sqrt(np.maximum(grid.r_outer ** 2 - rest, 0.0)) - sign * a
    return np.clip(t / grid.spacing, 1e-3, 1.0)


def scalar_operator(grid: Grid, ginv: np.ndarray, bvec: np.ndarray | None = None,
                    mask: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse ``-g^ab d_a d_b + b^a d_a`` on the ball with zero Dirichlet data.

    Axis-aligned terms next to the boundary use Shortley-Weller stencils
    (the boundary is located on the sphere ``r = r_outer``), so the
    discretisation stays second order for smooth solutions.
    """
    if mask is None:
        mask = grid.ball
    n = grid.n
    hsp = grid.spacing
    nodes = np.flatnonzero(mask)
    N = len(nodes)
    index = -np.ones(n ** 3, dtype=np.int64)
    index[nodes] = np.arange(N)
    strides = (n * n, n, 1)
    gi = ginv.reshape(-1, 3, 3)[nodes]
    bv = np.zeros((N, 3)) if bvec is None else bvec.reshape(-1, 3)[nodes]
    rows, cols, vals = [], [], []
    rid = np.arange(N)

    def add(r, c, v):
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])

    diag = np.zeros(N)
    for a in range(3):
        s = strides[a]
        ip = index[nodes + s]
        im = index[nodes - s]
        tp = np.where(ip >= 0, 1.0, _axis_distance(grid, nodes, a, 1.0))
        tm = np.where(im >= 0, 1.0, _axis_distance(grid, nodes, a, -1.0))
        # three-point Lagrange weights on {-tm, 0, tp} (units of h)
        w2p = 2.0 / (tp * (tp + tm))
        w2m = 2.0 / (tm * (tp + tm))
        w20 = -2.0 / (tp * tm)
        w1p = tm / (tp * (tp + tm))
        w1m = -tp / (tm * (tp + tm))
        w10 = (tp - tm) / (tp * tm)
        ca = gi[:, a, a] / hsp ** 2
        cb = bv[:, a] / hsp
        diag += -ca * w20 + cb * w10
        add(rid, ip, -ca * w2p + cb * w1p)
        add(rid, im, -ca * w2m + cb * w1m)
    for a, b in ((0, 1), (0, 2), (1, 2)):
        cab = -2.0 * gi[:, a, b] / (4.0 * hsp ** 2)
        if not np.any(cab):
            continue
        for sa, sb, sg in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
            add(rid, index[nodes + sa * strides[a] + sb * strides[b]], sg * cab)
    rows.append(rid)
    cols.append(rid)
    vals.append(diag)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )


@contextmanager
def _seeded_legacy_rng(seed: int = 0):
    """pyamg draws spectral-radius start vectors from the global legacy RNG."""
    state = np.random.get_state()
    np.random.seed(seed)
    try:
        yield
    finally:
        np.random.set_state(state)


def _amg_preconditioner(sc: SpinConnection):
    """Scalar AMG V-cycle on ``-d_a(sqrt(g) g^aa d_a)`` applied to ``sqrt(g) r``."""
    if "amg" in sc._cache:
        return sc._cache["amg"]
    grid = sc.grid
    geo = sc.geo
    nodes = np.flatnonzero(grid.ball)
    n = grid.n
    strides = (n * n, n, 1)
    index = -np.ones(n ** 3, dtype=np.int64)
    index[nodes] = np.arange(len(nodes))
    sg = geo.sqrtg.reshape(-1)
    gi = geo.ginv.reshape(-1, 3, 3)
    rows, cols, vals = [], [], []
    diag = np.zeros(len(nodes))
    rid = np.arange(len(nodes))
    for a in range(3):
        w = sg * gi[:, a, a]
        for s in (strides[a], -strides[a]):
            face = 0.5 * (w[nodes] + w[nodes + s]) / grid.spacing ** 2
            diag += face
            nb = index[nodes + s]
            keep = nb >= 0
            rows.append(rid[keep])
            cols.append(nb[keep])
            vals.append(-face[keep])
    rows.append(rid)
    cols.append(rid)
    vals.append(diag)
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))))
    with _seeded_legacy_rng():
        ml = pyamg.smoothed_aggregation_solver(K, symmetry="symmetric", max_coarse=500)
    M = ml.aspreconditioner(cycle="V")
    scale = sg[nodes]
    sc._cache["amg"] = (M, scale)
    return M, scale


def _block_jacobi(prob: _Problem, rep: CliffordRep):
    """Inverse of the node-diagonal 4x4 blocks of the discrete operator."""
    c = prob.coef
    h2 = prob.grid.spacing ** 2
    blocks = np.einsum("nk,kab->nab", c[:, 30:38], rep.even_basis())
    blocks += (2.0 * (c[:, 0] + c[:, 1] + c[:, 2]) / h2)[:, None, None] * np.eye(4)
    return np.linalg.inv(blocks)


@dataclass
class SolveResult:
    psi: np.ndarray
    psi0: np.ndarray
    iterations: int
    residual: float
    history: list
    first_order_residual: float
    seconds: float
    backend: str


def _boundary_field(grid, psi0, boundary, energy):
    psi = np.broadcast_to(psi0, grid.shape + (4,)).astype(complex)
    if boundary == "plain":
        return psi.copy()
    if boundary == "energy":
        r = np.maximum(grid.r, grid.spacing)
        return psi * ((1.0 + energy / (2.0 * r)) ** -2)[..., None]
    raise ValueError(f"unknown boundary profile {boundary!r}")


def solve_bvp(data: InitialDataSet, psi0, conventions: Conventions = STANDARD, rtol: float = 1e-8,
              maxiter: int = 3000, x0: np.ndarray | None = None, preconditioner: str = "amg",
              boundary: str = "plain", energy: float | None = None, backend: str | None = None,
              rep: CliffordRep = DEFAULT_REP) -> SolveResult:
    """Solve ``(Delta^s + R) psi = 0`` in the ball with ``psi = psi0`` outside.

    Parameters
    ----------
    psi0 : array_like, shape (4,)
        Constant boundary spinor of unit norm.
    rtol : float
        Relative residual target ``||L psi|| / ||b||`` where ``b`` is the
        boundary coupling.
    preconditioner : {"amg", "block-jacobi", "none"}
    boundary : {"plain", "energy"}
        ``"energy"`` uses the profile ``(1 + E/2r)^-2 psi0`` on the shell
        (``energy`` must then be given).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (4,) or abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("psi0 must be a unit spinor with 4 components")
    t0 = time.perf_counter()
    sc = spin_connection(data, conventions, rep)
    prob = _problem(sc, backend)
    grid = data.grid
    nodes = prob.nodes
    N = len(nodes)
    bc = _boundary_field(grid, psi0, boundary, energy if energy is not None else 0.0).reshape(-1, 4)
    base = bc.copy()
    base[nodes] = 0.0
    b = -prob.apply_full(base).ravel()
    work = np.zeros_like(base)

    def matvec(x):
        work[nodes] = x.reshape(N, 4)
        return prob.apply_full(work).ravel()

    A = LinearOperator((4 * N, 4 * N), matvec=matvec, dtype=complex)
    if preconditioner == "amg":
        Mamg, scale = _amg_preconditioner(sc)

        def prec(r):
            r = r.reshape(N, 4) * scale[:, None]
            out = np.empty((N, 4), dtype=complex)
            for c in range(4):
                out[:, c] = Mamg.matvec(r[:, c].real) + 1j * Mamg.matvec(r[:, c].imag)
            return out.ravel()

        M = LinearOperator((4 * N, 4 * N), matvec=prec, dtype=complex)
    elif preconditioner == "block-jacobi":
        inv = _block_jacobi(prob, rep)
        M = LinearOperator(
            (4 * N, 4 * N), matvec=lambda r: np.einsum("nab,nb->na", inv, r.reshape(N, 4)).ravel(), dtype=complex
        )
    elif preconditioner == "none":
        M = None
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    bnorm = float(np.linalg.norm(b))
    if x0 is None:
        xinit = bc[nodes].ravel()
    else:
        xinit = np.asarray(x0, dtype=complex).reshape(-1, 4)[nodes].ravel()
    history = []
    count = [0]

    def callback(xk):
        count[0] += 1
        if count[0] % 10 == 0:
            history.append(float(np.linalg.norm(A.matvec(xk) - b) / bnorm))

    if bnorm == 0.0:
        x, info = xinit, 0
    else:
        x, info = bicgstab(A, b, x0=xinit, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=callback)
    res = float(np.linalg.norm(A.matvec(x) - b) / bnorm) if bnorm else 0.0
    history.append(res)
    if info != 0 or not np.isfinite(res) or res > 10 * rtol:
        raise SolverError(f"BiCGSTAB did not converge (info={info}, residual={res:.3e})", history)
    full = bc.copy()
    full[nodes] = x.reshape(N, 4)
    psi = full.reshape(grid.shape + (4,))
    dpsi = dirac_apply(sc, psi)
    inner = data.grid.interior(2)
    d1 = float(np.sqrt(integrate_volume(grid, np.sum(np.abs(dpsi) ** 2, axis=-1), sc.geo.sqrtg, inner)))
    return SolveResult(
        psi=psi,
        psi0=psi0,
        iterations=count[0],
        residual=res,
        history=history,
        first_order_residual=d1,
        seconds=time.perf_counter() - t0,
        backend=kernels.BACKEND if backend is None else backend,
    )


# ---------------------------------------------------------------------------
# energy, second derivatives, barrier


def momentum_action(P, rep: CliffordRep = DEFAULT_REP) -> np.ndarray:
    """Clifford action ``P . = sum_k P_k nu . e_k`` of the ADM momentum.

    Hermitian with eigenvalues ``+-|P|``; the ordering ``nu e_k`` is the one
    for which the energy identity closes on Bowen-York data.
    """
    g = rep.gamma
    return sum(float(P[k]) * (g[0] @ g[k + 1]) for k in range(3))


def gradient_energy(sc: SpinConnection, psi: np.ndarray, psi0, E: float, P=(0.0, 0.0, 0.0),
                    region=None) -> dict:
    """``||nabla psi||^2`` and the defect of the energy identity.

    The identity is ``||nabla psi||^2 + int (psi, R psi) = 4 pi (E |psi0|^2 + (psi0, P.psi0))``.
    ``region`` defaults to the whole ball, including the core: the spinor
    is smooth there and carries part of the energy.
    """
    grid = sc.grid
    if region is None:
        region = grid.ball
    nab = covariant_derivative(sc, psi)
    dens = np.sum(np.abs(nab) ** 2, axis=(-2, -1))
    energy = integrate_volume(grid, dens, sc.geo.sqrtg, region)
    Rpsi = even_apply(sc.script_R(), psi, sc.rep)
    curv = integrate_volume(grid, np.real(np.sum(np.conj(psi) * Rpsi, axis=-1)), sc.geo.sqrtg, region)
    psi0 = np.asarray(psi0, dtype=complex)
    pterm = float(np.real(np.conj(psi0) @ momentum_action(P, sc.rep) @ psi0))
    target = 4.0 * np.pi * (E * float(np.real(np.vdot(psi0, psi0))) + pterm)
    return {
        "energy": energy,
        "curvature_term": curv,
        "target": target,
        "defect": abs(energy + curv - target),
        "relative_defect": abs(energy + curv - target) / max(abs(target), 1.0) if target else abs(energy + curv),
    }


def second_derivative(sc: SpinConnection, psi: np.ndarray, layers: int = 3):
    """``(nabla^2 psi)(e_i, e_j) = nabla_i nabla_j psi - sum_k Gamma_ijk nabla_k psi``.

    Returns ``(D2, norm2, antisym_defect)`` where ``D2[..., i, j, :]`` is the
    second derivative, ``norm2`` is ``sum_ij |D2_ij|^2`` and
    ``antisym_defect`` is ``max_ij |D2_ij - D2_ji - Rbar^Sigma(e_i, e_j) psi|``
    (requires the restricted curvature; computed lazily by the caller via
    ``curvature_endomorphism``).  Values within ``layers`` nodes of the
    outer shell are set to zero.
    """
    from .geometry import gauss_codazzi_restrict

    nab = covariant_derivative(sc, psi)
    G = sc.geo.frame_conn
    D2 = np.empty(psi.shape[:-1] + (3, 3, 4), dtype=complex)
    for j in range(3):
        D2[..., :, j, :] = covariant_derivative(sc, nab[..., j, :])
    D2 -= np.einsum("...ijk,...ka->...ija", G, nab)
    Rbar = gauss_codazzi_restrict(sc.data, sc.conventions)
    Rend = sc.rep.curvature_endomorphism(Rbar)  # [..., i, j, 4, 4]
    anti = D2 - np.swapaxes(D2, -3, -2) - np.einsum("...ijab,...b->...ija", Rend, psi)
    defect = np.max(np.sqrt(np.sum(np.abs(anti) ** 2, axis=-1)), axis=(-2, -1))
    keep = sc.grid.interior(layers)
    D2[~keep] = 0.0
    defect[~keep] = 0.0
    norm2 = np.sum(np.abs(D2) ** 2, axis=(-3, -2, -1))
    return D2, norm2, defect


def poisson_barrier(data: InitialDataSet, psi_or_density, rtol: float = 1e-10, maxiter: int = 2000):
    """Barrier ``F`` with ``-Delta_g F = (|h|^2 + |nabla h|) |psi|^2`` and ``F = 0`` outside the ball.

    ``psi_or_density`` is a spinor field or a precomputed ``|psi|^2``.
    Returns ``(F, diagnostics)``; the diagnostics contain the maximum
    principle excess ``max(|psi|^2 - 1 - F)`` over the ball.
    """
    grid = data.grid
    geo = geometry(data)
    arr = np.asarray(psi_or_density)
    dens = np.sum(np.abs(arr) ** 2, axis=-1) if np.iscomplexobj(arr) or arr.shape == grid.shape + (4,) else arr
    rho = h_norms(data, ps=(), rho_ps=(), region=grid.ball).rho
    src = rho * dens
    F = np.zeros(grid.shape)
    diag = {"max_principle_excess": float(np.max((dens - 1.0 - F)[grid.ball])), "iterations": 0}
    if not np.any(src[grid.ball]):
        return F, diag
    # Laplace-Beltrami: Delta f = g^ab d_a d_b f - g^ab Gamma^c_ab d_c f
    bvec = np.einsum("...ab,...cab->...c", geo.ginv, geo.gamma)
    A = scalar_operator(grid, geo.ginv, bvec)
    nodes = np.flatnonzero(grid.ball)
    rhs = src.reshape(-1)[nodes]
    with _seeded_legacy_rng():
        ml = pyamg.smoothed_aggregation_solver(A, max_coarse=500)
    it = [0]

    def cb(_):
        it[0] += 1

    x, info = bicgstab(A, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=ml.aspreconditioner(), callback=cb)
    res = float(np.linalg.norm(A @ x - rhs) / np.linalg.norm(rhs))
    if info != 0 or res > 10 * rtol:
        raise SolverError(f"barrier solve did not converge (residual {res:.3e})", [res])
    F.reshape(-1)[nodes] = x
    diag["iterations"] = it[0]
    diag["residual"] = res
    diag["min_F"] = float(F[grid.ball].min())
    diag["max_principle_excess"] = float(np.max((dens - 1.0 - F)[grid.ball]))
    return F, diag
