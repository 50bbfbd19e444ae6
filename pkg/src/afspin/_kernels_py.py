"""Pure-numpy implementation of the spinor operator kernel.

Mirrors ``_ckernels.apply_operator`` exactly; used when the compiled
extension is unavailable or when ``AFSPIN_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import numpy as np


def _even_apply(coef, v, perm, phase):
    """``sum_k coef[:, k] E_k v`` with monomial ``E_k v = phase[k] * v[:, perm[k]]``."""
    out = np.zeros_like(v)
    for k in range(perm.shape[0]):
        out += coef[:, k, None] * (phase[k] * v[:, perm[k]])
    return out


def apply_operator(psi, nodes, coef, strides, inv_h, perm, phase):
    """Apply ``-g^ab d_a d_b + B^a d_a + C`` at the listed flat node indices.

    Parameters
    ----------
    psi : complex ndarray, shape (n_total, 4)
        Spinor values on the full grid, flattened in C order.
    nodes : int64 ndarray
        Flat indices of the nodes where the operator is evaluated.
    coef : float ndarray, shape (len(nodes), 38)
        ``g^xx, g^yy, g^zz, g^xy, g^xz, g^yz``, then ``B^x, B^y, B^z`` and
        ``C`` as even-algebra coefficients (8 each).
    strides : sequence of 3 ints
        Flat index offsets of the three grid axes.
    """
    sx, sy, sz = (int(s) for s in strides)
    ih2 = inv_h * inv_h
    c = psi[nodes]
    d1, d2 = [], []
    for s in (sx, sy, sz):
        p, m = psi[nodes + s], psi[nodes - s]
        d1.append(0.5 * inv_h * (p - m))
        d2.append(ih2 * (p - 2.0 * c + m))
    cross = []
    for s, t in ((sx, sy), (sx, sz), (sy, sz)):
        cross.append(
            0.25 * ih2 * (psi[nodes + s + t] - psi[nodes + s - t] - psi[nodes - s + t] + psi[nodes - s - t])
        )
    out = -(
        coef[:, 0, None] * d2[0]
        + coef[:, 1, None] * d2[1]
        + coef[:, 2, None] * d2[2]
        + 2.0 * (coef[:, 3, None] * cross[0] + coef[:, 4, None] * cross[1] + coef[:, 5, None] * cross[2])
    )
    for a in range(3):
        out += _even_apply(coef[:, 6 + 8 * a: 14 + 8 * a], d1[a], perm, phase)
    out += _even_apply(coef[:, 30:38], c, perm, phase)
    return out
