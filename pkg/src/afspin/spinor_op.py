"""The spinor operator built from four Witten spinors and its exceptional sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clifford import DEFAULT_REP, STANDARD, CliffordRep, Conventions
from .dirac import SolveResult, solve_bvp
from .geometry import InitialDataSet, geometry
from .grid import region_measure

log = logging.getLogger(__name__)

__all__ = [
    "SpinorBasis",
    "PiField",
    "solve_basis",
    "build_pi",
    "pi_norm_bounds_check",
    "deviation_p",
    "truncate_p",
    "omega_set",
    "exceptional_set",
    "exceptional_set_rhs",
]


@dataclass
class SpinorBasis:
    """Four solutions with orthonormal boundary spinors.

    ``values[..., i, :]`` is ``psi^i`` at each node.
    """

    values: np.ndarray
    psi0: np.ndarray
    solves: list

    @property
    def fields(self):
        return [self.values[..., i, :] for i in range(self.values.shape[-2])]


def solve_basis(data: InitialDataSet, conventions: Conventions = STANDARD, psi0=None, **kw) -> SpinorBasis:
    """Solve the boundary value problem for an orthonormal set of constant spinors."""
    if psi0 is None:
        psi0 = np.eye(4, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex)
    gram = psi0.conj() @ psi0.T
    if not np.allclose(gram, np.eye(len(psi0)), atol=1e-12):
        raise ValueError("boundary spinors are not orthonormal")
    vals = np.empty(data.grid.shape + (len(psi0), 4), dtype=complex)
    solves: list[SolveResult] = []
    for i, p in enumerate(psi0):
        res = solve_bvp(data, p, conventions, **kw)
        vals[..., i, :] = res.psi
        res.psi = None  # the basis array owns the values
        solves.append(res)
    return SpinorBasis(vals, psi0, solves)


@dataclass
class PiField:
    """``Pi`` (``[..., 4, 4]``) and the Gram matrix ``A_ij = (psi^i, psi^j)``."""

    Pi: np.ndarray
    A: np.ndarray


def _gram_form(rep):
    return rep.positive_form()


def build_pi(values: np.ndarray, rep: CliffordRep = DEFAULT_REP) -> PiField:
    """``Pi psi = sum_i (psi^i, psi) psi^i`` at each node.

    ``values`` has shape ``[..., m, 4]`` (``m`` spinors per node).
    """
    G = _gram_form(rep)
    Pi = np.einsum("...ia,...ib,bc->...ac", values, np.conj(values), G)
    A = np.einsum("...ia,ab,...jb->...ij", np.conj(values), G, values)
    return PiField(Pi, A)


def _norm2(values, rep):
    G = _gram_form(rep)
    return np.real(np.einsum("...ia,ab,...ib->...i", np.conj(values), G, values))


def pi_norm_bounds_check(values: np.ndarray, rep: CliffordRep = DEFAULT_REP, tol: float = 1e-12):
    """``1/4 sum |psi^i|^2 <= |Pi| <= sum |psi^i|^2`` with the operator norm of ``Pi``.

    The norm is taken with respect to the positive product, where ``Pi`` is
    self-adjoint and positive, so ``|Pi|`` is its largest eigenvalue (equal
    to the largest eigenvalue of ``A``).  Raises ``ArithmeticError`` on a
    violation beyond ``tol`` relative to the upper bound.
    """
    pf = build_pi(values, rep)
    s = np.sum(_norm2(values, rep), axis=-1)
    lower = 0.25 * s
    opn = np.linalg.eigvalsh(pf.A)[..., -1]
    upper = s
    slack = tol * np.maximum(upper, 1.0)
    if np.any(lower - opn > slack) or np.any(opn - upper > slack):
        raise ArithmeticError("norm bounds of the spinor operator violated")
    return lower, opn, upper


def deviation_p(values: np.ndarray, rep: CliffordRep = DEFAULT_REP, tol: float = 1e-12):
    """``p = ||1 - Pi||_HS^2`` by the closed form and by direct evaluation.

    Returns ``(p, op_norm)`` where ``op_norm`` is ``||1 - Pi||`` in operator
    norm.  Raises ``ArithmeticError`` if the two evaluations of ``p``
    disagree by more than ``tol`` relative to ``max(p, 1)``.
    """
    pf = build_pi(values, rep)
    m = values.shape[-2]
    nrm = _norm2(values, rep)
    closed = 4.0 - 2.0 * np.sum(nrm, axis=-1) + np.sum(np.abs(pf.A) ** 2, axis=(-2, -1))
    # Pi is self-adjoint for the positive product, so ||1 - Pi||_HS^2 = tr (1 - Pi)^2
    D = np.eye(4) - pf.Pi
    direct = np.real(np.einsum("...ab,...ba->...", D, D))
    if np.any(np.abs(closed - direct) > tol * np.maximum(np.abs(direct), 1.0)):
        raise ArithmeticError("closed form of p disagrees with the direct Hilbert-Schmidt norm")
    lam = np.linalg.eigvalsh(pf.A)
    # Pi has the non-zero eigenvalues of A, padded with zeros to dimension 4
    lam_pi = np.concatenate([np.zeros(lam.shape[:-1] + (max(0, 4 - m),)), lam], axis=-1)
    op = np.max(np.abs(1.0 - lam_pi), axis=-1)
    return closed, op


def truncate_p(p: np.ndarray, L: float, values: np.ndarray | None = None, rep: CliffordRep = DEFAULT_REP):
    """``min(p, (L^2/4 - 2)^2)``.

    With ``values`` the implication "below the cap every ``|psi^i| <= L``"
    is checked and returned as a second value.
    """
    if L < 3:
        raise ValueError(f"L must be at least 3, got {L}")
    cap = (L * L / 4.0 - 2.0) ** 2
    ph = np.minimum(p, cap)
    if values is None:
        return ph
    below = ph < cap
    big = np.sqrt(np.max(_norm2(values, rep), axis=-1)) > L
    return ph, bool(not np.any(below & big))


def omega_set(data: InitialDataSet, psi: np.ndarray, L: float):
    """``Omega_L = {|psi| >= L}`` inside the ball minus the core, and its volume."""
    if L < 1:
        raise ValueError("L must be at least 1")
    mag = np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1))
    region = (mag >= L) & data.domain
    return region, region_measure(data.grid, region, geometry(data).sqrtg)


def exceptional_set_rhs(E: float, h2: float, k: float, L: float, eps: float) -> float:
    """``(48/k^2)(4 pi E + ||h||_2^2) L^2 (4 + L^2)^2 / eps^2``."""
    return 48.0 / k ** 2 * (4.0 * np.pi * E + h2 ** 2) * L ** 2 * (4.0 + L ** 2) ** 2 / eps ** 2


def exceptional_set(data: InitialDataSet, values: np.ndarray, L: float, eps: float, E: float, h2: float,
                    k: float, rep: CliffordRep = DEFAULT_REP):
    """``U = {p >= eps^2}`` (so ``||1 - Pi||_HS < eps`` off ``U``).

    Returns ``(U, mu(U), rhs)`` where ``rhs`` bounds ``mu(U)^(1/3)``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if L < 3:
        raise ValueError("L must be at least 3")
    p, _ = deviation_p(values, rep)
    U = (p >= eps * eps) & data.domain
    mu = region_measure(data.grid, U, geometry(data).sqrtg)
    return U, mu, exceptional_set_rhs(E, h2, k, L, eps)
