import json

import numpy as np
import pytest

from afspin import datasets, estimates, spinor_op
from afspin.dirac import second_derivative, spin_connection
from afspin.estimates import HypothesisError, VerificationReport
from afspin.geometry import gauss_codazzi_restrict, h_norms, rbar_norm2
from afspin.grid import Grid

K_BALL = (36 * np.pi) ** (1 / 3)


def test_alpha_examples():
    assert estimates.alpha(2.0, 0.0) == 1.0
    assert estimates.alpha(2.4, 0.1) == pytest.approx(0.5)
    assert estimates.alpha(3.0, 3.0) == pytest.approx(1 / 25)
    with pytest.raises(ValueError):
        estimates.alpha(0.0, 1.0)


def test_l_threshold_floor_and_algebra():
    assert estimates.l_threshold(1.0, 0.0, 0.0, 0.0, 4.0)["L"] == 3.0
    # RHS = 4 with alpha = 1 gives (L - 1)^2 = 4
    thr = estimates.l_threshold(0.0, 1.0, 0.0, 4.0 / estimates.C_SUP, 1.0)
    assert thr["rhs"] == pytest.approx(4.0) and thr["L"] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        estimates.l_threshold(1.0, 1.0, 1.0, 1.0, 1.0, variant="other")


def test_l_threshold_direct_substitution():
    thr = estimates.l_threshold(1.3, 2.4, 0.7, 37.0, 2.8)
    L, a = thr["L"], thr["alpha"]
    rhs = estimates.C_SUP * (4 * np.pi * 1.3 + 2.4) * 37.0 / (2.8 ** 2 * (2.8 + 24 * 0.7) ** 2)
    assert (L ** a - 1) ** 2 == pytest.approx(rhs, rel=1e-10)
    sq = estimates.l_threshold(1.3, 2.4, 0.7, 37.0, 2.8, variant="squared")
    assert sq["L"] > L  # ||h||_2^2 > ||h||_2 here


def test_report_semantics():
    r = VerificationReport("x", lhs=1.0, rhs=0.9, tolerance=0.2)
    assert r.margin == pytest.approx(-0.1) and r.passed
    r = VerificationReport("x", lhs=1.0, rhs=np.inf)
    assert not r.passed
    d = VerificationReport("x", lhs=np.float64(1.0), rhs=2.0, inputs={"a": np.arange(2)}).to_dict()
    json.dumps(d)
    assert d["pass"] and d["margin"] == 1.0


def test_sobolev_flat_ball_constant():
    data = datasets.flat(Grid.centered(32, 4.0))
    reps = estimates.sobolev_check(data, K_BALL)
    assert {r.inputs["trial"] for r in reps} >= {"inv1pr2"}
    assert all(r.passed and r.margin >= 0 for r in reps)


def test_sobolev_homogeneity():
    data = datasets.flat(Grid.centered(24, 4.0))
    f = np.clip(1 - (data.grid.r / 2.0) ** 2, 0, None) ** 3
    a = estimates.sobolev_check(data, K_BALL, trials=[("f", f)])[0]
    b = estimates.sobolev_check(data, K_BALL, trials=[("f", -3 * f)])[0]
    assert b.lhs == pytest.approx(3 * a.lhs) and b.rhs == pytest.approx(3 * a.rhs)


def test_omega_volume_schwarzschild_L2(schwarzschild_small):
    d = schwarzschild_small
    b = spinor_op.solve_basis(d)
    k = 3.0
    norms = h_norms(d).norms
    r = estimates.omega_volume_check(d, b.values[..., 0, :], 2.0, 1.0, norms, k)
    assert r.lhs == 0.0
    assert r.rhs == pytest.approx(192 * 4 * np.pi / k ** 2)  # time-symmetric form, alpha = 1
    with pytest.raises(HypothesisError):
        estimates.omega_volume_check(d, b.values[..., 0, :], 1.0, 1.0, norms, k)


def test_sup_bound_hypothesis_and_trivial_case(flat_small):
    psi = np.zeros(flat_small.grid.shape + (4,), complex)
    psi[..., 0] = 1
    norms = h_norms(flat_small).norms
    r = estimates.sup_bound_check(flat_small, psi, 3.0, norms, K_BALL, 3.0)
    assert r.lhs == 0.0 and r.rhs == 0.0 and r.passed and r.extra["side_condition_pass"]
    with pytest.raises(HypothesisError):
        estimates.sup_bound_check(flat_small, psi, 3.0, norms, K_BALL, 4.0)


def test_curvature_projection_flat_is_zero(flat_small):
    vals = np.broadcast_to(np.eye(4, dtype=complex), flat_small.grid.shape + (4, 4)).copy()
    rep, margin, mask = estimates.curvature_projection_check(flat_small, vals)
    assert np.max(np.abs(margin[mask])) < 1e-20
    assert rep.extra["fraction_strict"] == 1.0


def test_curvature_projection_synthetic_identity_projector():
    """With Pi = 1 the inequality reduces to |Rbar|^2 <= 8 sum |nabla^2 psi^i|^2."""
    rel = []
    for n in (24, 36):
        grid = Grid.centered(n, 3.0)
        data = datasets.perturbed(grid, seed=0)
        sc = spin_connection(data)
        anti2 = np.zeros(grid.shape)
        d2 = np.zeros(grid.shape)
        for i in range(4):
            psi = np.zeros(grid.shape + (4,), complex)
            psi[..., i] = 1.0
            D2, n2, _ = second_derivative(sc, psi)
            anti2 += np.sum(np.abs(D2 - np.swapaxes(D2, -3, -2)) ** 2, axis=(-3, -2, -1))
            d2 += n2
        mask = grid.interior(4)
        assert np.all(2 * anti2[mask] <= 8 * d2[mask] * (1 + 1e-12))
        Rb2 = rbar_norm2(gauss_codazzi_restrict(data))
        rel.append(np.max(np.abs(2 * anti2 - Rb2)[mask]) / np.max(Rb2[mask]))
    assert rel[1] < rel[0] and rel[1] < 0.05


def test_flatness_terms_flat_and_eta_scaling(bowen_york_small):
    flat = datasets.flat(Grid.centered(20, 4.0))
    vals = np.broadcast_to(np.eye(4, dtype=complex), flat.grid.shape + (4, 4)).copy()
    eta = estimates.bump_eta(flat)
    terms = estimates.flatness_terms(flat, vals, eta, 3.0, K_BALL, 0.0, h_norms(flat).norms)
    assert all(abs(v) < 1e-12 for v in terms.values())

    d = bowen_york_small
    b = spinor_op.solve_basis(d)
    norms = h_norms(d).norms
    t1 = estimates.flatness_terms(d, b.values, estimates.bump_eta(d), 3.0, 3.0, 1.28, norms)
    t2 = estimates.flatness_terms(d, b.values, estimates.bump_eta(d, scale=2.0), 3.0, 3.0, 1.28, norms)
    for key in ("T1", "T2", "T3", "lhs"):
        assert t2[key] == pytest.approx(2 * t1[key], rel=1e-12)
    assert all(v > 0 for v in t1.values())


def test_bump_eta_profile():
    data = datasets.flat(Grid.centered(24, 4.0))
    eta = estimates.bump_eta(data)
    r = data.grid.r
    assert np.all(eta.eta[r <= 1.2] == 1.0) and np.all(eta.eta[r >= 2.4] == 0.0)
    assert np.all((eta.eta >= 0) & (eta.eta <= 1))
    with pytest.raises(ValueError):
        estimates.bump_eta(data, 2.0, 1.0)


def test_flatness_flat_vacuous():
    flat = datasets.flat(Grid.centered(20, 4.0))
    vals = np.broadcast_to(np.eye(4, dtype=complex), flat.grid.shape + (4, 4)).copy()
    r = estimates.flatness_check(flat, vals, estimates.bump_eta(flat), 0.0, (0, 0, 0), K_BALL)
    assert r.lhs == 0.0 and r.passed
    assert r.extra["curvature_integral"] == 0.0
    assert all(v is None for v in r.extra["empirical_constants"].values())


def test_algebra_check_passes():
    r = estimates.algebra_check(seed=3, nodes=2000, tensors=50)
    assert r.passed and r.extra["trace_identity_defect"] < 1e-12


def test_positive_mass_and_gradient_bound():
    assert estimates.positive_mass_check(1.0, (0.0, 0.0, 0.5)).passed
    assert not estimates.positive_mass_check(1.0, (0.0, 0.0, 1.01)).passed
    r = estimates.gradient_bound_check(10.0, 1.0, (0.0, 0.0, 0.0), tol=0.0)
    assert r.rhs == pytest.approx(4 * np.pi) and r.passed


def test_identity_tolerance_scales_with_spacing_and_radius():
    g = Grid.centered(48, 8.0)
    tol = estimates.identity_tolerance(g, 10.0)
    assert tol == pytest.approx(estimates.C_IDENTITY * (g.spacing ** 2 + 1 / 8.0) * 10.0)
    assert estimates.identity_tolerance(Grid.centered(96, 16.0)) < estimates.identity_tolerance(g)
