"""Explicit-constant inequalities and the normalized terms of the curvature estimate.

Every check returns a ``VerificationReport`` whose ``margin`` is
``rhs - lhs`` and which passes when ``margin >= -tol``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import spinor_op
from .clifford import DEFAULT_REP, STANDARD, CliffordRep, Conventions, hs_norm2
from .dirac import second_derivative, spin_connection
from .geometry import (
    InitialDataSet,
    gauss_codazzi_restrict,
    geometry,
    h_norms,
    rbar_covariant_norm,
    rbar_norm2,
)
from .grid import fd_derivative, integrate_volume, lp_norm

log = logging.getLogger(__name__)

__all__ = [
    "VerificationReport",
    "HypothesisError",
    "TestFunction",
    "C_SUP",
    "alpha",
    "l_threshold",
    "bump_eta",
    "sobolev_check",
    "omega_volume_check",
    "sup_bound_check",
    "exceptional_set_check",
    "curvature_projection_check",
    "analysis_region",
    "flatness_terms",
    "flatness_check",
    "positive_mass_check",
    "gradient_bound_check",
    "identity_tolerance",
    "C_IDENTITY",
    "max_principle_check",
    "random_curvature_block",
    "algebra_check",
]

C_SUP = 6 * 48 ** 2
# discrete identity tolerance C (h^2 + 1/r_outer), relative to the identity's scale;
# calibrated once on Schwarzschild m = 1 (r_outer = 12, n = 64, 80, 96: ratios
# 0.37, 0.57, 0.69) and frozen
C_IDENTITY = 0.7


def identity_tolerance(grid, scale: float = 1.0, c: float = C_IDENTITY) -> float:
    """Tolerance for discretized global identities on a truncated ball.

    The ``h^2`` part covers the stencils; the ``1/r_outer`` part covers the
    Dirichlet truncation, which shifts ``||nabla psi||^2`` by ``O(E/r_outer)``.
    """
    return c * (grid.spacing ** 2 + 1.0 / grid.r_outer) * abs(scale)


class HypothesisError(ValueError):
    """A statement was invoked outside its hypotheses."""


def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


@dataclass
class VerificationReport:
    id: str
    lhs: float
    rhs: float
    inputs: dict = field(default_factory=dict)
    tolerance: float = 0.0
    extra: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return float(self.rhs - self.lhs)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.margin) and self.margin >= -self.tolerance)

    def to_dict(self) -> dict:
        d = _num(asdict(self))
        d["margin"] = self.margin
        d["pass"] = self.passed
        return d


def _grid_info(data: InitialDataSet) -> dict:
    return {"n": data.grid.n, "spacing": data.grid.spacing, "r_outer": data.grid.r_outer}


# ---------------------------------------------------------------------------
# constants


def alpha(k: float, h_norm3: float) -> float:
    """``(1 + 24 ||h||_3 / k)^-1``."""
    if not k > 0:
        raise ValueError("isoperimetric constant must be positive")
    return 1.0 / (1.0 + 24.0 * h_norm3 / k)


def l_threshold(E: float, h2: float, h3: float, rho3: float, k: float, variant: str = "linear") -> dict:
    """Smallest ``L >= 3`` with ``(L^a - 1)^2 >= C (4 pi E + X) rho3 / (k^2 (k + 24 h3)^2)``.

    ``X`` is ``||h||_2`` for ``variant="linear"`` and ``||h||_2^2`` for
    ``variant="squared"``.  Both right-hand sides are returned.
    """
    a = alpha(k, h3)
    rhs = {
        "linear": C_SUP * (4.0 * np.pi * E + h2) * rho3 / (k ** 2 * (k + 24.0 * h3) ** 2),
        "squared": C_SUP * (4.0 * np.pi * E + h2 ** 2) * rho3 / (k ** 2 * (k + 24.0 * h3) ** 2),
    }
    if variant not in rhs:
        raise ValueError(f"unknown variant {variant!r}")
    L = max(3.0, (1.0 + np.sqrt(rhs[variant])) ** (1.0 / a))
    return {"L": float(L), "alpha": a, "rhs": rhs[variant], "rhs_variants": rhs, "variant": variant,
            "satisfied": bool((L ** a - 1.0) ** 2 >= rhs[variant] * (1 - 1e-12))}


# ---------------------------------------------------------------------------
# test functions


@dataclass
class TestFunction:
    """Scalar test function with its gradient norm and Laplace-Beltrami Laplacian."""

    name: str
    eta: np.ndarray
    grad_norm: np.ndarray
    laplacian: np.ndarray

    __test__ = False  # not a pytest class


def _smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def bump_eta(data: InitialDataSet, r1: float | None = None, r2: float | None = None, scale: float = 1.0):
    """C^2 bump ``== scale`` on ``r <= r1`` decaying to 0 at ``r2``."""
    R = data.grid.r_outer
    r1 = 0.3 * R if r1 is None else r1
    r2 = 0.6 * R if r2 is None else r2
    if not 0 < r1 < r2 <= R:
        raise ValueError("need 0 < r1 < r2 <= r_outer")
    eta = scale * (1.0 - _smoothstep5((data.grid.r - r1) / (r2 - r1)))
    return _test_function(data, eta, f"bump({r1:g},{r2:g})")


def _test_function(data, f, name):
    geo = geometry(data)
    hsp = data.grid.spacing
    df = np.stack([fd_derivative(f, a, hsp) for a in range(3)], axis=-1)
    grad2 = np.einsum("...ab,...a,...b->...", geo.ginv, df, df)
    flux = geo.sqrtg[..., None] * np.einsum("...ab,...b->...a", geo.ginv, df)
    lap = sum(fd_derivative(flux[..., a], a, hsp) for a in range(3)) / geo.sqrtg
    return TestFunction(name, f, np.sqrt(grad2), lap)


def default_sobolev_trials(data: InitialDataSet):
    """Bumps kept at least two core radii from the core, plus a truncated ``1/(1+r^2)``.

    The last trial is used only on core-free data.
    """
    R = data.grid.r_outer
    r = data.grid.r
    keep = 2.0 * data.core_radius
    trials = []
    shell = np.clip(1.0 - ((r - 0.5 * R) / (0.3 * R)) ** 2, 0.0, None) ** 3
    if 0.2 * R >= keep:
        trials.append(("shell(0.5R,0.3R)", shell))
    for c, rad in (((0.0, 0.0, 0.0), 0.5 * R), ((0.5 * R, 0.0, 0.0), 0.3 * R),
                   ((0.0, -0.35 * R, 0.35 * R), 0.25 * R)):
        if np.linalg.norm(c) - rad < keep:
            continue
        d = np.sqrt(np.sum((data.grid.coords - np.asarray(c)) ** 2, axis=-1))
        f = np.clip(1.0 - (d / rad) ** 2, 0.0, None) ** 3
        trials.append((f"bump({c[0] / R:.2f}R,{c[1] / R:.2f}R,{c[2] / R:.2f}R;{rad / R:.2f}R)", f))
    if data.core_radius == 0:
        Rt = 0.9 * R
        trials.append(("inv1pr2", np.clip(1.0 / (1.0 + r ** 2) - 1.0 / (1.0 + Rt ** 2), 0.0, None)))
    return trials


def sobolev_check(data: InitialDataSet, k: float, trials=None, tol: float = 1e-9) -> list:
    """``||f||_6 <= (6/k) ||nabla f||_2`` for each trial function."""
    if trials is None:
        trials = default_sobolev_trials(data)
    geo = geometry(data)
    region = data.domain
    reports = []
    for name, f in trials:
        tf = _test_function(data, f, name)
        lhs = lp_norm(data.grid, f, 6.0, geo.sqrtg, region)
        g2 = lp_norm(data.grid, tf.grad_norm, 2.0, geo.sqrtg, region)
        rhs = 6.0 / k * g2
        reports.append(
            VerificationReport(
                id="sobolev", lhs=lhs, rhs=rhs, inputs={"trial": name, "k": k, "grad_L2": g2},
                tolerance=tol * max(rhs, 1.0), grid=_grid_info(data), provenance=data.provenance,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# explicit-constant statements


def omega_volume_check(data: InitialDataSet, psi: np.ndarray, L: float, E: float, norms: dict, k: float,
                  tol: float = 1e-9) -> VerificationReport:
    """``mu(Omega_L)^(1/3) <= 192/(L^a - 1)^2 (4 pi E + ||h||_2^2)/k^2``."""
    if L <= 1:
        raise HypothesisError("L must exceed 1")
    a = alpha(k, norms["h_3"])
    region, mu = spinor_op.omega_set(data, psi, L)
    pref = 192.0 / (L ** a - 1.0) ** 2 / k ** 2
    rhs = pref * (4.0 * np.pi * E + norms["h_2"] ** 2)
    return VerificationReport(
        id="omega_volume", lhs=mu ** (1.0 / 3.0), rhs=rhs,
        inputs={"L": L, "E": E, "k": k, "alpha": a, "h_2": norms["h_2"], "h_3": norms["h_3"], "mu_Omega_L": mu},
        tolerance=tol * max(rhs, 1.0),
        extra={"rhs_h2_linear": pref * (4.0 * np.pi * E + norms["h_2"])},
        grid=_grid_info(data), provenance=data.provenance,
    )


def sup_bound_check(data: InitialDataSet, psi: np.ndarray, L: float, norms: dict, k: float, L_min: float,
                 tol: float = 1e-9) -> VerificationReport:
    """``|| |psi|^2 - 1 ||_{L^6(Omega_L)} <= (72/k^2)(L+1) ||rho||_{6/5}`` and its side condition."""
    if L < L_min * (1 - 1e-12):
        raise HypothesisError(f"L={L} is below the threshold {L_min}")
    geo = geometry(data)
    region, mu = spinor_op.omega_set(data, psi, L)
    dens = np.sum(np.abs(psi) ** 2, axis=-1)
    lhs = lp_norm(data.grid, dens - 1.0, 6.0, geo.sqrtg, region)
    rhs = 72.0 / k ** 2 * (L + 1.0) * norms["rho_1.2"]
    rho = h_norms(data, ps=(), rho_ps=(), region=data.domain).rho
    side = 36.0 / k ** 2 * lp_norm(data.grid, rho, 1.5, geo.sqrtg, region)
    rep = VerificationReport(
        id="sup_bound", lhs=lhs, rhs=rhs,
        inputs={"L": L, "L_min": L_min, "k": k, "rho_6/5": norms["rho_1.2"], "mu_Omega_L": mu},
        tolerance=tol * max(rhs, 1.0),
        extra={"side_condition": side, "side_condition_pass": bool(side <= 0.5)},
        grid=_grid_info(data), provenance=data.provenance,
    )
    return rep


def exceptional_set_check(data: InitialDataSet, values: np.ndarray, L: float, eps: float, E: float, norms: dict,
                  k: float, tol: float = 1e-9) -> VerificationReport:
    """``mu(U)^(1/3) <= (48/k^2)(4 pi E + ||h||_2^2) L^2 (4 + L^2)^2 / eps^2``."""
    U, mu, rhs = spinor_op.exceptional_set(data, values, L, eps, E, norms["h_2"], k)
    return VerificationReport(
        id="exceptional_set", lhs=mu ** (1.0 / 3.0), rhs=rhs,
        inputs={"L": L, "eps": eps, "E": E, "k": k, "h_2": norms["h_2"], "mu_U": mu},
        tolerance=tol * max(rhs, 1.0), grid=_grid_info(data), provenance=data.provenance,
    )


def positive_mass_check(E: float, P, rel_tol: float = 1e-3, provenance=None) -> VerificationReport:
    """``E - |P| >= -rel_tol * E``."""
    pn = float(np.linalg.norm(P))
    return VerificationReport(id="positive_mass", lhs=pn, rhs=E, inputs={"E": E, "P": list(map(float, P))},
                              tolerance=rel_tol * abs(E), provenance=provenance or {})


def gradient_bound_check(energy: float, E: float, P, tol: float, provenance=None) -> VerificationReport:
    """``||nabla psi||^2 <= 4 pi (E + |P|)``."""
    rhs = 4.0 * np.pi * (E + float(np.linalg.norm(P)))
    return VerificationReport(id="gradient_bound", lhs=energy, rhs=rhs,
                              inputs={"E": E, "P": list(map(float, P)), "tolerance_scale": rhs}, tolerance=tol,
                              extra={"rhs_8piE": 8.0 * np.pi * E}, provenance=provenance or {})


def max_principle_check(data: InitialDataSet, psi: np.ndarray, c: float = 10.0) -> VerificationReport:
    """``max |psi|^2 <= 1 + c h^2`` over the ball."""
    dens = np.sum(np.abs(psi) ** 2, axis=-1)
    return VerificationReport(id="max_principle", lhs=float(dens[data.grid.ball].max()), rhs=1.0,
                              tolerance=c * data.grid.spacing ** 2, grid=_grid_info(data),
                              provenance=data.provenance)


# ---------------------------------------------------------------------------
# curvature statements


def curvature_projection_check(data: InitialDataSet, values: np.ndarray, conventions: Conventions = STANDARD,
                  band: float = 0.0, layers: int = 3, rep: CliffordRep = DEFAULT_REP):
    """Pointwise ``(1 - ||1 - Pi||) |Rbar_M|^2 <= 8 sum_i |nabla^2 psi^i|^2``.

    Returns ``(report, margin_field, mask)``.  The report's ``lhs``/``rhs``
    are the pass fraction and the required fraction; nodes pass when the
    margin is at least ``-band * h^2``.  Hilbert-Schmidt norm in the
    prefactor; the operator-norm variant is reported alongside.
    """
    sc = spin_connection(data, conventions, rep)
    total = np.zeros(data.grid.shape)
    for i in range(values.shape[-2]):
        _, n2, _ = second_derivative(sc, np.ascontiguousarray(values[..., i, :]), layers)
        total += n2
    p, opn = spinor_op.deviation_p(values, rep)
    Rb2 = rbar_norm2(gauss_codazzi_restrict(data, conventions))
    margin = 8.0 * total - (1.0 - np.sqrt(p)) * Rb2
    margin_op = 8.0 * total - (1.0 - opn) * Rb2
    mask = data.grid.interior(layers) & data.domain
    tol = band * data.grid.spacing ** 2
    m = margin[mask]
    frac_tol = float(np.mean(m >= -tol)) if m.size else 1.0
    frac_strict = float(np.mean(m >= 0.0)) if m.size else 1.0
    q = np.quantile(m, [0.0, 0.01, 0.5]) if m.size else np.zeros(3)
    report = VerificationReport(
        id="curvature_projection", lhs=0.0, rhs=frac_tol - 1.0,
        inputs={"band": band, "nodes": int(mask.sum())},
        extra={
            "fraction_within_band": frac_tol,
            "fraction_strict": frac_strict,
            "margin_quantiles": {"min": q[0], "q01": q[1], "median": q[2]},
            "min_margin_opnorm": float(margin_op[mask].min()) if m.size else 0.0,
        },
        grid=_grid_info(data), provenance=data.provenance,
    )
    return report, margin, mask


def analysis_region(data: InitialDataSet, layers: int = 3, core_factor: float = 4.0) -> np.ndarray:
    """Interior nodes at least ``core_factor`` core radii from the puncture.

    Curvature derivatives are not resolved closer to the puncture on
    desk-scale grids.
    """
    return data.domain & data.grid.interior(layers) & (data.grid.r >= core_factor * data.core_radius)


def flatness_terms(data: InitialDataSet, values: np.ndarray, eta: TestFunction, L: float, k: float, E: float,
                norms: dict, conventions: Conventions = STANDARD, region=None) -> dict:
    """The three normalized right-hand terms of the second-derivative estimate.

    Constants are set to one.  The last term uses the ``L^{12/5}`` norm;
    the literal ``5/12`` exponent is reported as ``T3_p5_12``.
    """
    geo = geometry(data, conventions)
    hn = h_norms(data, ps=(), rho_ps=())
    if region is None:
        region = analysis_region(data)
    Rbar = gauss_codazzi_restrict(data, conventions)
    Rb = np.sqrt(rbar_norm2(Rbar))
    dRb = rbar_covariant_norm(data, Rbar, conventions)
    del Rbar
    ric = np.sqrt(np.sum(_frame2(geo.ricci, geo.E) ** 2, axis=(-2, -1)))
    e = eta.eta

    def sup(f):
        return float(np.max(f[region])) if np.any(region) else 0.0

    t1 = sup(np.abs(eta.laplacian) + eta.grad_norm * hn.h_abs + e * (ric + hn.h_abs ** 2 + hn.dh_full)) * E
    t2 = L * sup(e * (dRb + hn.h_abs * Rb)) * np.sqrt(max(E, 0.0))
    q = dRb + hn.h_abs * Rb
    n125 = lp_norm(data.grid, q, 12.0 / 5.0, geo.sqrtg, region)
    n512 = lp_norm(data.grid, q, 5.0 / 12.0, geo.sqrtg, region)
    pre = np.sqrt(L + 1.0) / k * sup(e) * np.sqrt(norms["rho_1.2"]) * np.sqrt(max(E, 0.0))
    sc = spin_connection(data, conventions)
    lhs = 0.0
    for i in range(values.shape[-2]):
        _, n2, _ = second_derivative(sc, np.ascontiguousarray(values[..., i, :]))
        lhs += integrate_volume(data.grid, e * n2, geo.sqrtg, region)
    return {"T1": t1, "T2": t2, "T3": pre * n125, "T3_p5_12": pre * n512, "lhs": lhs}


def _frame2(T, E):
    return np.einsum("...ai,...bj,...ij->...ab", E, E, T)


def flatness_check(data: InitialDataSet, values: np.ndarray, eta: TestFunction, E: float, P, k: float,
                    conventions: Conventions = STANDARD, eps: float = 0.5) -> VerificationReport:
    """Curvature integral off the exceptional set against the normalized terms.

    ``L`` is the threshold, ``eps = 1/2`` and ``U = {p >= eps^2}``.  The
    report's pass flag carries the explicit measure bound of ``U`` (cube-root
    form); the curvature inequality has unstated constants and is reported
    through the empirical ratios ``c_i = LHS / T_i``.
    """
    geo = geometry(data, conventions)
    hn = h_norms(data, ps=(2.0, 3.0), rho_ps=(1.2, 3.0))
    norms = hn.norms
    thr = l_threshold(E, norms["h_2"], norms["h_3"], norms["rho_3"], k)
    L = thr["L"]
    U, mu, rhs_exc = spinor_op.exceptional_set(data, values, L, eps, E, norms["h_2"], k)
    region = analysis_region(data)
    Rb2 = rbar_norm2(gauss_codazzi_restrict(data, conventions))
    lhs = integrate_volume(data.grid, eta.eta * Rb2, geo.sqrtg, region & ~U)
    terms = flatness_terms(data, values, eta, L, k, E, norms, conventions, region)
    # a vanishing term cannot carry any share of the integral: reported as None
    ratios = {f"c_{key}": (lhs / terms[key] if terms[key] > 0 else None) for key in ("T1", "T2", "T3")}
    volume_form = L ** 6 / k ** 2 * (4.0 * np.pi * E + norms["h_2"] ** 2)
    return VerificationReport(
        id="flatness", lhs=mu ** (1.0 / 3.0), rhs=rhs_exc,
        inputs={"E": E, "P": list(map(float, P)), "k": k, "L": L, "eps": eps, "alpha": thr["alpha"],
                **{k_: v for k_, v in norms.items()}},
        tolerance=1e-9 * max(rhs_exc, 1.0),
        extra={"curvature_integral": lhs, "mu_U": mu, "terms": terms, "empirical_constants": ratios,
               "mu_U_over_volume_form": mu / volume_form if volume_form > 0 else 0.0,
               "threshold": thr},
        grid=_grid_info(data), provenance=data.provenance,
    )


# ---------------------------------------------------------------------------
# randomized algebraic identities


def random_curvature_block(rng: np.random.Generator, terms: int = 3) -> np.ndarray:
    """Random ``[3, 3, 4, 4]`` block ``R_{ij alpha beta}`` of an algebraic curvature tensor.

    Built as a sum of Kulkarni-Nomizu products of random symmetric 4x4
    matrices, so pair symmetries and the first Bianchi identity hold.
    """
    R = np.zeros((4, 4, 4, 4))
    for _ in range(terms):
        A = rng.standard_normal((4, 4))
        B = rng.standard_normal((4, 4))
        A, B = A + A.T, B + B.T
        R += (np.einsum("ac,bd->abcd", A, B) + np.einsum("bd,ac->abcd", A, B)
              - np.einsum("ad,bc->abcd", A, B) - np.einsum("bc,ad->abcd", A, B))
    return R[1:, 1:]


def algebra_check(seed: int = 0, nodes: int = 10_000, tensors: int = 100,
                  rep: CliffordRep = DEFAULT_REP, tol: float = 1e-12) -> VerificationReport:
    """Norm bounds of ``Pi``, the closed form of ``p`` and the curvature trace identity.

    ``lhs`` is the largest relative defect over ``nodes`` random spinor
    quadruples and ``tensors`` random curvature blocks; ``rhs`` is zero.
    """
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((nodes, 4, 4)) + 1j * rng.standard_normal((nodes, 4, 4))
    vals *= rng.uniform(0.0, 2.0, (nodes, 1, 1))
    lower, opn, upper = spinor_op.pi_norm_bounds_check(vals, rep, tol=np.inf)
    bound_defect = float(np.max(np.maximum(lower - opn, opn - upper) / np.maximum(upper, 1.0)))
    p, _ = spinor_op.deviation_p(vals, rep, tol=np.inf)
    pf = spinor_op.build_pi(vals, rep)
    D = np.eye(4) - pf.Pi
    direct = np.real(np.einsum("...ab,...ba->...", D, D))
    p_defect = float(np.max(np.abs(p - direct) / np.maximum(np.abs(direct), 1.0)))
    Rb = np.stack([random_curvature_block(rng) for _ in range(tensors)])
    ends = rep.curvature_endomorphism(Rb)
    lhs_tr = np.sum(hs_norm2(ends), axis=(-2, -1))
    rhs_tr = 0.5 * rbar_norm2(Rb)
    tr_defect = float(np.max(np.abs(lhs_tr - rhs_tr) / np.maximum(rhs_tr, 1.0)))
    worst = max(max(bound_defect, 0.0), p_defect, tr_defect)
    return VerificationReport(
        id="algebra", lhs=worst, rhs=0.0, tolerance=tol,
        inputs={"seed": seed, "nodes": nodes, "tensors": tensors},
        extra={"norm_bounds_defect": bound_defect, "p_closed_form_defect": p_defect,
               "trace_identity_defect": tr_defect},
    )
