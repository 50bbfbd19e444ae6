"""Spinor algebra of Cl(1,3) in a fixed Dirac-type representation.

Two sign conventions are supported.  ``CliffordRep.dirac()`` uses
``X.Y + Y.X = -2 g(X, Y)`` with ``g = diag(-1, 1, 1, 1)``, so the unit normal
squares to ``+1`` and spatial frame vectors to ``-1``; this is the convention
under which ``D^2 = Delta^s + R`` holds with a non-negative connection
Laplacian, and it is what the solver uses.  ``CliffordRep.eta()`` multiplies
every generator by ``i`` and realises ``X.Y + Y.X = +2 eta(X, Y)``.

In both representations the indefinite form is ``<phi, psi> = phi^H B psi``
with ``B = gamma_0`` of the Dirac representation (Hermitian, signature
(2, 2)), and the positive form ``(phi, psi) = c <phi, nu.psi>`` reduces to
the standard Hermitian product ``phi^H psi`` for the frame normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CliffordRep",
    "Conventions",
    "STANDARD",
    "DEFAULT_REP",
    "EVEN_LABELS",
    "even_basis",
    "even_mul_table",
    "apply",
    "spinor_norm2",
    "hs_norm2",
    "op_norm",
]

_SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)
ETA = np.diag([-1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class Conventions:
    """Sign flags tying extrinsic curvature to spacetime curvature.

    ``gauss`` multiplies ``h_ik h_jl - h_il h_jk`` in the spatial block,
    ``codazzi`` multiplies ``nabla_i h_jk - nabla_j h_ik`` in the
    ``R_{ij0k}`` block and in ``Ric(nu, e_i)``, ``connection`` multiplies the
    ``h_ij nu.e_j`` term of the spin connection.  The defaults are the ones
    for which the Weitzenboeck residual converges; flipping any of them is
    a mutation that the convergence harness must detect.
    """

    gauss: int = -1
    codazzi: int = -1
    connection: int = 1

    def flipped(self, name: str) -> "Conventions":
        vals = {"gauss": self.gauss, "codazzi": self.codazzi, "connection": self.connection}
        if name not in vals:
            raise KeyError(name)
        vals[name] = -vals[name]
        return Conventions(**vals)

    def as_dict(self) -> dict:
        return {"gauss": self.gauss, "codazzi": self.codazzi, "connection": self.connection}


STANDARD = Conventions()


@dataclass(frozen=True)
class CliffordRep:
    """Explicit gamma matrices plus the data fixing both inner products.

    Attributes
    ----------
    gamma : ndarray, shape (4, 4, 4)
        ``gamma[0]`` represents the unit normal, ``gamma[1:]`` the spatial
        orthonormal frame.
    relation_sign : int
        ``gamma_a gamma_b + gamma_b gamma_a = 2 * relation_sign * eta_ab``.
    B : ndarray
        Hermitian matrix of the indefinite product.
    positive_const : complex
        Normalisation ``c`` in ``(phi, psi) = c <phi, nu.psi>``.
    """

    gamma: np.ndarray
    relation_sign: int
    B: np.ndarray
    positive_const: complex
    name: str = "dirac"
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def dirac(cls) -> "CliffordRep":
        g0 = np.block([[_I2, _Z2], [_Z2, -_I2]])
        gk = [np.block([[_Z2, s], [-s, _Z2]]) for s in _SIGMA]
        gamma = np.stack([g0] + gk)
        return cls(gamma=gamma, relation_sign=-1, B=g0.copy(), positive_const=1.0 + 0j)

    @classmethod
    def eta(cls) -> "CliffordRep":
        base = cls.dirac()
        return cls(
            gamma=1j * base.gamma,
            relation_sign=1,
            B=base.B.copy(),
            positive_const=-1j,
            name="eta",
        )

    # -- algebra -----------------------------------------------------------

    @property
    def nu(self) -> np.ndarray:
        return self.gamma[0]

    def upper(self, a: int) -> np.ndarray:
        """``gamma^a`` with the index raised by ``eta``."""
        return ETA[a, a] * self.gamma[a]

    def vector(self, X) -> np.ndarray:
        """Clifford element of a frame 4-vector ``X^a``."""
        return np.tensordot(np.asarray(X, dtype=complex), self.gamma, axes=(0, 0))

    def clifford_mul(self, X, psi) -> np.ndarray:
        """``X . psi`` for frame components ``X = (X^0, X^1, X^2, X^3)``."""
        return apply(self.vector(X), psi)

    # -- inner products ----------------------------------------------------

    def indefinite_inner(self, phi, psi) -> complex:
        return np.einsum("...i,ij,...j->...", np.conj(phi), self.B, psi)

    def positive_inner(self, phi, psi, nu=(1.0, 0.0, 0.0, 0.0)):
        """``(phi, psi) = c <phi, nu.psi>`` for a future timelike unit ``nu``."""
        return self.positive_const * self.indefinite_inner(phi, apply(self.vector(nu), psi))

    def positive_form(self, nu=(1.0, 0.0, 0.0, 0.0)) -> np.ndarray:
        """Gram matrix ``G`` with ``(phi, psi) = phi^H G psi``."""
        return self.positive_const * self.B @ self.vector(nu)

    # -- curvature ---------------------------------------------------------

    def curvature_endomorphism(self, Rbar_ab) -> np.ndarray:
        """Spinor curvature from the 4x4 block ``R(e_i, e_j)_{alpha beta}``.

        Returns ``(-s/4) sum R_{ab} gamma^a gamma^b``, where ``s`` is the
        relation sign; for the Dirac representation this is
        ``1/4 sum R_{ab} gamma^a gamma^b``.  ``Rbar_ab`` may carry leading
        batch axes.
        """
        Rbar_ab = np.asarray(Rbar_ab)
        ups = np.stack([self.upper(a) for a in range(4)])
        prods = np.einsum("aij,bjk->abik", ups, ups)
        return (-self.relation_sign / 4.0) * np.einsum("...ab,abik->...ik", Rbar_ab, prods)

    def even_basis(self) -> np.ndarray:
        if "even" not in self._cache:
            self._cache["even"] = even_basis(self)
        return self._cache["even"]


def apply(M, psi):
    """Apply a (field of) 4x4 matrices to a (field of) spinors."""
    M = np.asarray(M)
    if M.ndim == 2:
        return np.einsum("ij,...j->...i", M, psi)
    return np.einsum("...ij,...j->...i", M, psi)


def spinor_norm2(psi) -> np.ndarray:
    """``|psi|^2`` for the positive product (standard Hermitian norm)."""
    return np.sum(psi.real ** 2 + psi.imag ** 2, axis=-1)


def hs_norm2(A) -> np.ndarray:
    """Hilbert-Schmidt norm squared ``tr(A^H A)``."""
    return np.sum(np.abs(A) ** 2, axis=(-2, -1))


def op_norm(A) -> np.ndarray:
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


# Even subalgebra: scalar, spatial bivectors, boost bivectors, pseudoscalar.
EVEN_LABELS = ("1", "e2e3", "e3e1", "e1e2", "nu e1", "nu e2", "nu e3", "nu e1e2e3")


def even_basis(rep: CliffordRep) -> np.ndarray:
    g = rep.gamma
    one = np.eye(4, dtype=complex)
    return np.stack(
        [
            one,
            g[2] @ g[3],
            g[3] @ g[1],
            g[1] @ g[2],
            g[0] @ g[1],
            g[0] @ g[2],
            g[0] @ g[3],
            g[0] @ g[1] @ g[2] @ g[3],
        ]
    )


def even_mul_table(rep: CliffordRep):
    """Structure constants ``E_k E_l = sign[k, l] * E_{idx[k, l]}``."""
    E = rep.even_basis()
    idx = np.zeros((8, 8), dtype=np.intp)
    sign = np.zeros((8, 8))
    for k in range(8):
        for l in range(8):
            P = E[k] @ E[l]
            coeffs = np.einsum("mij,ij->m", np.conj(E), P) / 4.0
            m = int(np.argmax(np.abs(coeffs)))
            c = coeffs[m]
            if abs(abs(c) - 1.0) > 1e-12 or abs(c.imag) > 1e-12:
                raise ArithmeticError("even subalgebra is not closed with real structure constants")
            idx[k, l] = m
            sign[k, l] = c.real
    return idx, sign


DEFAULT_REP = CliffordRep.dirac()
