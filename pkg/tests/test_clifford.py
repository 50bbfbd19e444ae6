import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from afspin.clifford import (
    ETA,
    CliffordRep,
    Conventions,
    even_basis,
    even_mul_table,
    hs_norm2,
    op_norm,
    spinor_norm2,
)
from afspin.estimates import random_curvature_block
from afspin.geometry import rbar_norm2

REPS = [CliffordRep.dirac(), CliffordRep.eta()]


@pytest.mark.parametrize("rep", REPS, ids=lambda r: r.name)
def test_anticommutation(rep):
    g = rep.gamma
    for a, b in itertools.combinations_with_replacement(range(4), 2):
        ac = g[a] @ g[b] + g[b] @ g[a]
        np.testing.assert_allclose(ac, 2 * rep.relation_sign * ETA[a, b] * np.eye(4), atol=1e-14)


def test_eta_rep_uses_spacetime_sign():
    # gamma_a gamma_b + gamma_b gamma_a = 2 eta_ab with eta = diag(-1, 1, 1, 1)
    rep = CliffordRep.eta()
    np.testing.assert_allclose(rep.nu @ rep.nu, -np.eye(4), atol=1e-14)
    np.testing.assert_allclose(rep.gamma[1] @ rep.gamma[1], np.eye(4), atol=1e-14)


@pytest.mark.parametrize("rep", REPS, ids=lambda r: r.name)
def test_positive_product_is_positive(rep, rng):
    psi = rng.standard_normal((1000, 4)) + 1j * rng.standard_normal((1000, 4))
    val = rep.positive_inner(psi, psi)
    assert np.all(np.abs(val.imag) < 1e-12)
    assert np.all(val.real > 0)
    G = rep.positive_form()
    np.testing.assert_allclose(G, G.conj().T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(G) > 0)
    np.testing.assert_allclose(val.real, spinor_norm2(psi), rtol=1e-12)


@pytest.mark.parametrize("rep", REPS, ids=lambda r: r.name)
def test_spatial_clifford_action_adjointness(rep, rng):
    """Self-adjoint when spatial units square to +1, skew-adjoint otherwise."""
    phi = rng.standard_normal((50, 4)) + 1j * rng.standard_normal((50, 4))
    psi = rng.standard_normal((50, 4)) + 1j * rng.standard_normal((50, 4))
    for k in (1, 2, 3):
        X = np.zeros(4)
        X[k] = 1.0
        lhs = rep.positive_inner(phi, rep.clifford_mul(X, psi))
        rhs = rep.relation_sign * rep.positive_inner(rep.clifford_mul(X, phi), psi)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_curvature_endomorphism_single_component():
    rep = CliffordRep.dirac()
    Rb = np.zeros((4, 4))
    Rb[1, 2], Rb[2, 1] = 1.0, -1.0  # R(e1, e2)_{12} = 1 = -R(e1, e2)_{21}
    end = rep.curvature_endomorphism(Rb)
    np.testing.assert_allclose(end, 0.5 * rep.gamma[1] @ rep.gamma[2], atol=1e-15)
    assert hs_norm2(end) == pytest.approx(1.0)
    assert np.allclose(rep.curvature_endomorphism(np.zeros((4, 4))), 0.0)


@pytest.mark.parametrize("rep", REPS, ids=lambda r: r.name)
def test_trace_identity_random_tensors(rep):
    rng = np.random.default_rng(7)
    for _ in range(100):
        Rb = random_curvature_block(rng)
        lhs = np.sum(hs_norm2(rep.curvature_endomorphism(Rb)))
        assert abs(lhs - 0.5 * rbar_norm2(Rb)) <= 1e-12 * max(1.0, lhs)


def test_random_block_has_curvature_symmetries(rng):
    R = random_curvature_block(rng)
    np.testing.assert_allclose(R, -np.swapaxes(R, 0, 1), atol=1e-12)
    np.testing.assert_allclose(R, -np.swapaxes(R, 2, 3), atol=1e-12)
    S = R[:, :, 1:, 1:]
    np.testing.assert_allclose(S, np.transpose(S, (2, 3, 0, 1)), atol=1e-12)
    bianchi = S + np.transpose(S, (0, 2, 3, 1)) + np.transpose(S, (0, 3, 1, 2))
    np.testing.assert_allclose(bianchi, 0.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 4, 4), elements=st.floats(-10, 10)))
def test_operator_and_hs_norms(a):
    A = a[0] + 1j * a[1]
    op = op_norm(A)
    hs = np.sqrt(hs_norm2(A))
    assert op <= hs * (1 + 1e-12) + 1e-12
    assert hs <= 2 * op * (1 + 1e-12) + 1e-12


def test_even_subalgebra_closed():
    rep = CliffordRep.dirac()
    E = even_basis(rep)
    idx, sign = even_mul_table(rep)
    for k in range(8):
        for l in range(8):
            np.testing.assert_allclose(E[k] @ E[l], sign[k, l] * E[idx[k, l]], atol=1e-14)
    # each element is monomial: one non-zero per row
    assert np.all(np.sum(np.abs(E) > 1e-14, axis=-1) == 1)


def test_conventions_flip():
    c = Conventions()
    assert c.flipped("gauss").gauss == -c.gauss
    assert c.flipped("connection").flipped("connection") == c
    with pytest.raises(KeyError):
        c.flipped("sigma")
