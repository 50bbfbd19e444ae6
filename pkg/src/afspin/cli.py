"""Command-line front end: ``afspin generate | verify | convergence``.

Exit codes: 0 pass, 1 invalid arguments, 2 inequality violation, 3 solver
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import adm, datasets, estimates, spinor_op
from .clifford import DEFAULT_REP, STANDARD, Conventions
from .dirac import (
    SolverError,
    gradient_energy,
    poisson_barrier,
    smooth_test_spinor,
    solve_bvp,
    spin_connection,
    weitzenbock_residual,
)
from .geometry import h_norms, isoperimetric_estimate
from .grid import Grid, GridError

log = logging.getLogger(__name__)

__all__ = ["Config", "load_config", "run_verification", "run_convergence", "dumps_report", "main"]

SCHEMA = "report-v1"
EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4

ALL_CHECKS = (
    "algebra", "adm", "positive_mass", "energy_identity", "gradient_bound", "max_principle", "sobolev",
    "omega_volume", "sup_bound", "barrier", "pi_norm_bounds", "exceptional_set", "curvature_projection", "flatness_terms", "flatness",
)
# checks whose pass flag carries an explicit-constant inequality
EXPLICIT = {"algebra", "positive_mass", "gradient_bound", "max_principle", "sobolev", "omega_volume", "sup_bound",
            "pi_norm_bounds", "exceptional_set", "curvature_projection", "flatness"}
NEEDS_SPINORS = {"energy_identity", "gradient_bound", "max_principle", "omega_volume", "sup_bound", "barrier",
                 "pi_norm_bounds", "exceptional_set", "curvature_projection", "flatness_terms", "flatness"}


@dataclass
class Config:
    checks: tuple = ALL_CHECKS
    k: float | None = None
    radii: tuple | None = None
    fit_order: int = 2
    eta: tuple | None = None
    eps: float = 0.5
    projection_band: float = 2.0
    rtol: float = 1e-8
    preconditioner: str = "amg"
    seed: int = 0
    source: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "checks": list(self.checks), "k": self.k, "radii": None if self.radii is None else list(self.radii),
            "fit_order": self.fit_order, "eta": None if self.eta is None else list(self.eta), "eps": self.eps,
            "projection_band": self.projection_band, "rtol": self.rtol, "preconditioner": self.preconditioner,
            "seed": self.seed,
        }


def _floats(text) -> tuple:
    return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)


def _checks(text) -> tuple:
    items = tuple(x.strip() for x in str(text).split(",") if x.strip())
    if items == ("all",):
        return ALL_CHECKS
    bad = [c for c in items if c not in ALL_CHECKS]
    if bad:
        raise ValueError(f"unknown checks {bad}; choose from {list(ALL_CHECKS)}")
    return items


def load_config(path=None, text: str | None = None) -> Config:
    """Read an INI file with sections ``[estimates]``, ``[solver]``, ``[run]``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    elif text is not None:
        cp.read_string(text)
    cfg = Config()
    est = cp["estimates"] if cp.has_section("estimates") else {}
    sol = cp["solver"] if cp.has_section("solver") else {}
    run = cp["run"] if cp.has_section("run") else {}
    if "checks" in run:
        cfg.checks = _checks(run["checks"])
    if "seed" in run:
        cfg.seed = int(run["seed"])
    if "k" in est:
        cfg.k = float(est["k"])
    if "radii" in est:
        cfg.radii = _floats(est["radii"])
    if "fit_order" in est:
        cfg.fit_order = int(est["fit_order"])
    if "eta" in est:
        cfg.eta = _floats(est["eta"])
    if "eps" in est:
        cfg.eps = float(est["eps"])
    if "projection_band" in est:
        cfg.projection_band = float(est["projection_band"])
    if "rtol" in sol:
        cfg.rtol = float(sol["rtol"])
    if "preconditioner" in sol:
        cfg.preconditioner = sol["preconditioner"]
    cfg.source = {s: dict(cp[s]) for s in cp.sections()}
    return cfg


# ---------------------------------------------------------------------------
# JSON


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    return x


def dumps_report(report: dict) -> str:
    """Canonical JSON: sorted keys, non-finite numbers as ``null``."""
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# verify


def _entry(rep: estimates.VerificationReport, explicit: bool, **extra) -> dict:
    d = rep.to_dict()
    d["explicit_constant"] = explicit
    d.update(extra)
    return d


def _info(id_, values: dict, provenance=None) -> dict:
    return {"id": id_, "explicit_constant": False, "pass": None, "extra": values, "provenance": provenance or {}}


def run_verification(data, cfg: Config | None = None, conventions: Conventions = STANDARD,
                     basis: spinor_op.SpinorBasis | None = None) -> dict:
    """Run the selected checks on ``data``; returns the report payload.

    ``basis`` reuses an already solved spinor basis for ``data``.  Raises
    ``SolverError`` if a spinor solve fails.
    """
    cfg = cfg or Config()
    checks = [c for c in ALL_CHECKS if c in cfg.checks]
    grid = data.grid
    out = []
    series = []

    # prerequisites are always computed
    radii = np.asarray(cfg.radii) if cfg.radii else adm.default_radii(data)
    Er = adm.adm_energy(data, radii, fit_order=cfg.fit_order)
    Pr = adm.adm_momentum(data, radii, fit_order=cfg.fit_order)
    E, P = float(Er.value), np.asarray(Pr.value, dtype=float)
    for row_e, row_p in zip(Er.table, Pr.table):
        series.append({"series": "adm", "R": row_e["R"], "E_R": row_e["E_R"],
                       "P_R_x": row_p["P_R"][0], "P_R_y": row_p["P_R"][1], "P_R_z": row_p["P_R"][2]})
    if cfg.k is not None:
        k, k_src = float(cfg.k), "config"
    else:
        k, trial = isoperimetric_estimate(data)
        k_src = f"trial:{trial}"
    hn = h_norms(data)
    norms = hn.norms
    thr = estimates.l_threshold(E, norms["h_2"], norms["h_3"], norms["rho_3"], k)
    L = thr["L"]
    inputs = {"E": E, "P": P.tolist(), "k": k, "k_source": k_src, "alpha": thr["alpha"], "L_min": L,
              "eps": cfg.eps, **norms, "l_threshold": thr}

    if basis is None and any(c in NEEDS_SPINORS for c in checks):
        basis = spinor_op.solve_basis(data, conventions, rtol=cfg.rtol, preconditioner=cfg.preconditioner)
    if basis is not None:
        inputs["solver"] = [{"iterations": s.iterations, "residual": s.residual,
                             "first_order_residual": s.first_order_residual} for s in basis.solves]

    if "algebra" in checks:
        out.append(_entry(estimates.algebra_check(cfg.seed), True))
    if "adm" in checks:
        prov = data.provenance
        extra = {"E": E, "P": P.tolist(), "E_fit": Er.diagnostics, "P_fit": Pr.diagnostics}
        if "E" in prov:
            extra["E_reference"] = prov["E"]
            extra["E_relative_error"] = abs(E - prov["E"]) / max(abs(prov["E"]), 1e-300) if prov["E"] else abs(E)
        if "P" in prov:
            extra["P_reference"] = list(prov["P"])
        out.append(_info("adm", extra, prov))
    if "positive_mass" in checks:
        out.append(_entry(estimates.positive_mass_check(E, P, provenance=data.provenance), True))
    sc = spin_connection(data, conventions) if basis is not None else None
    if "energy_identity" in checks or "gradient_bound" in checks:
        for i in range(4):
            ge = gradient_energy(sc, basis.values[..., i, :], basis.psi0[i], E, P)
            if "energy_identity" in checks:
                tol = estimates.identity_tolerance(grid)
                out.append(_info("energy_identity", {"spinor": i, **ge, "relative_tolerance": tol,
                                                     "within_tolerance": ge["relative_defect"] <= tol},
                                 data.provenance))
            if "gradient_bound" in checks:
                tol = estimates.identity_tolerance(grid, 4.0 * np.pi * (E + float(np.linalg.norm(P))))
                rep = estimates.gradient_bound_check(ge["energy"], E, P, tol=tol, provenance=data.provenance)
                out.append(_entry(rep, True, spinor=i))
    if "max_principle" in checks:
        if float(np.max(hn.h_abs)) == 0.0:
            for i in range(4):
                out.append(_entry(estimates.max_principle_check(data, basis.values[..., i, :]), True, spinor=i))
        else:
            out.append(_info("max_principle", {"skipped": "h is not identically zero"}))
    if "sobolev" in checks:
        for rep in estimates.sobolev_check(data, k):
            out.append(_entry(rep, True))
    if "omega_volume" in checks:
        for Lv in sorted({2.0, L}):
            for i in range(4):
                rep = estimates.omega_volume_check(data, basis.values[..., i, :], Lv, E, norms, k)
                out.append(_entry(rep, True, spinor=i))
    if "sup_bound" in checks:
        for i in range(4):
            rep = estimates.sup_bound_check(data, basis.values[..., i, :], L, norms, k, L)
            out.append(_entry(rep, True, spinor=i))
    if "barrier" in checks:
        for i in range(4):
            _, diag = poisson_barrier(data, basis.values[..., i, :])
            out.append(_info("barrier", {"spinor": i, **diag}))
    if "pi_norm_bounds" in checks:
        try:
            lower, opn, upper = spinor_op.pi_norm_bounds_check(basis.values)
            p, _ = spinor_op.deviation_p(basis.values)
            ok = True
        except ArithmeticError as exc:
            lower = opn = upper = p = np.zeros(1)
            ok, err = False, str(exc)
        worst = float(max(np.max(lower - opn), np.max(opn - upper)))
        entry = {"id": "pi_norm_bounds", "explicit_constant": True, "lhs": worst, "rhs": 0.0, "margin": -worst,
                 "pass": ok, "tolerance": 1e-12, "extra": {"p_max": float(np.max(p))}}
        if not ok:
            entry["extra"]["error"] = err
        out.append(entry)
    if "exceptional_set" in checks:
        out.append(_entry(estimates.exceptional_set_check(data, basis.values, L, cfg.eps, E, norms, k), True))
    if "curvature_projection" in checks:
        rep, _, _ = estimates.curvature_projection_check(data, basis.values, conventions, band=cfg.projection_band)
        d = _entry(rep, True)
        # the statement passes when at least 99% of interior nodes pass strictly
        # and every node lies within the tolerance band
        d["pass"] = bool(rep.extra["fraction_strict"] >= 0.99 and rep.extra["fraction_within_band"] == 1.0)
        out.append(d)
    if "flatness_terms" in checks or "flatness" in checks:
        eta = estimates.bump_eta(data, *(cfg.eta or (None, None)))
        if "flatness_terms" in checks:
            terms = estimates.flatness_terms(data, basis.values, eta, L, k, E, norms, conventions)
            out.append(_info("flatness_terms", {"L": L, "eta": eta.name, **terms}))
        if "flatness" in checks:
            rep = estimates.flatness_check(data, basis.values, eta, E, P, k, conventions, cfg.eps)
            out.append(_entry(rep, True, eta=eta.name))

    summary = {
        "explicit_checks": sum(1 for e in out if e["explicit_constant"]),
        "violations": sorted({e["id"] for e in out if e["explicit_constant"] and not e["pass"]}),
    }
    summary["pass"] = not summary["violations"]
    return {
        "schema": SCHEMA,
        "dataset": {"name": data.name, "grid": {"n": grid.n, "spacing": grid.spacing, "r_outer": grid.r_outer},
                    "core_radius": data.core_radius, "provenance": data.provenance},
        "conventions": conventions.as_dict(),
        "representation": DEFAULT_REP.name,
        "config": cfg.as_dict(),
        "inputs": inputs,
        "checks": out,
        "series": series,
        "summary": summary,
    }


def _write_csv(path, rows):
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _clean(r.get(k, "")) for k in keys})


def _check_rows(report):
    rows = []
    for e in report["checks"]:
        rows.append({"series": "checks", "id": e["id"], "lhs": e.get("lhs", ""), "rhs": e.get("rhs", ""),
                     "margin": e.get("margin", ""), "pass": e.get("pass", ""),
                     "spinor": e.get("spinor", "")})
    return rows + report["series"]


# ---------------------------------------------------------------------------
# convergence


def _observed_orders(hs, errs):
    out = []
    for i in range(1, len(hs)):
        if errs[i - 1] > 0 and errs[i] > 0:
            out.append(math.log(errs[i - 1] / errs[i]) / math.log(hs[i - 1] / hs[i]))
        else:
            out.append(float("nan"))
    return out


def run_convergence(generator: str, levels, r_outer: float, params: dict | None = None,
                    conventions: Conventions = STANDARD, solve: bool = True, seed: int = 0,
                    floor: float = 1e-10, min_order: float = 1.8) -> dict:
    """Per-level identity defects and observed orders.

    The Weitzenboeck residual is measured on a fixed smooth test spinor over
    interior nodes at least four core radii from the puncture.  Residuals
    below ``floor`` count as converged (rounding level).
    """
    params = params or {}
    levels = sorted(int(n) for n in levels)
    if len(levels) < 2:
        raise ValueError("need at least two refinement levels")
    rows = []
    for n in levels:
        grid = Grid.centered(n, r_outer)
        data = datasets.generate(generator, grid, **params)
        sc = spin_connection(data, conventions)
        psi = smooth_test_spinor(grid, seed=seed)
        res = weitzenbock_residual(sc, psi)
        mask = grid.interior(4) & data.domain & (grid.r >= 4.0 * data.core_radius)
        row = {"n": n, "spacing": grid.spacing, "weitzenbock": float(np.max(res[mask]))}
        if solve:
            try:
                r = solve_bvp(data, np.array([1, 0, 0, 0], dtype=complex), conventions)
            except SolverError as exc:
                row["solver_error"] = str(exc)
            else:
                E = data.provenance.get("E", 0.0)
                P = data.provenance.get("P", (0.0, 0.0, 0.0))
                ge = gradient_energy(sc, r.psi, r.psi0, E, P)
                row["energy_defect"] = ge["relative_defect"]
                row["dirac_residual"] = r.first_order_residual
                row["iterations"] = r.iterations
        rows.append(row)
        log.info("level %d: %s", n, row)
    hs = [r["spacing"] for r in rows]
    result = {"generator": generator, "params": params, "conventions": conventions.as_dict(), "levels": rows,
              "orders": {}, "flags": []}
    for key in ("weitzenbock", "energy_defect", "dirac_residual"):
        if not all(key in r for r in rows):
            continue
        errs = [r[key] for r in rows]
        result["orders"][key] = _observed_orders(hs, errs)
        if key != "weitzenbock":
            continue
        if max(errs) < floor:
            result["flags"].append("weitzenbock: rounding level, order check skipped")
            continue
        if any(b >= a for a, b in zip(errs, errs[1:])):
            result["flags"].append("weitzenbock: non-monotone")
        if any(not o >= min_order for o in result["orders"][key]):
            result["flags"].append(f"weitzenbock: observed order below {min_order}")
    result["converged"] = not result["flags"] or all("skipped" in f for f in result["flags"])
    return result


# ---------------------------------------------------------------------------
# argument parsing


def _parse_params(items) -> dict:
    out = {}
    for it in items or ():
        key, _, val = it.partition("=")
        vals = _floats(val)
        out[key.strip()] = vals if len(vals) > 1 else vals[0]
    return out


def _gen_params(args) -> dict:
    p = {}
    if args.m is not None:
        p["m"] = args.m
    if args.p is not None:
        p["P"] = _floats(args.p)
    if args.m_conf is not None:
        p["m_conf"] = args.m_conf
    if args.c is not None:
        p["c"] = args.c
    if args.a is not None:
        p["a"] = args.a
    if args.seed is not None:
        p["seed"] = args.seed
    return p


def cmd_generate(args) -> int:
    name = args.generator.replace("-", "_")
    grid = Grid.centered(args.n, args.r_outer, args.spacing)
    data = datasets.generate(name, grid, **_gen_params(args))
    datasets.save(data, args.output)
    trh = np.einsum("...ii->...", data.h)[grid.ball]
    dev = np.abs(data.g - np.eye(3))[grid.ball & (grid.r >= 0.5 * grid.r_outer)]
    print(f"wrote {args.output}: {data.name} n={grid.n} spacing={grid.spacing:.6g} r_outer={grid.r_outer:.6g}")
    print(f"max |tr h| = {np.max(np.abs(trh)):.3e}")
    print(f"max |g - delta| for r >= r_outer/2 = {np.max(dev) if dev.size else 0.0:.3e}")
    print(f"provenance: {json.dumps(_clean(data.provenance), sort_keys=True)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        data = datasets.load(args.input)
        cfg = load_config(args.config) if args.config else Config()
    except (OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.checks:
        cfg.checks = _checks(args.checks)
    if args.k is not None:
        cfg.k = args.k
    if args.radii:
        cfg.radii = _floats(args.radii)
    if args.eta:
        cfg.eta = _floats(args.eta)
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        report = run_verification(data, cfg)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    text = dumps_report(report)
    try:
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
            csv_path = args.csv or (str(args.output).rsplit(".", 1)[0] + ".csv")
            _write_csv(csv_path, _check_rows(report))
        else:
            sys.stdout.write(text)
            if args.csv:
                _write_csv(args.csv, _check_rows(report))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for e in report["checks"]:
        if e["explicit_constant"]:
            print(f"{'PASS' if e['pass'] else 'FAIL'} {e['id']} margin={e.get('margin')}", file=sys.stderr)
    return EXIT_OK if report["summary"]["pass"] else EXIT_VIOLATION


def cmd_convergence(args) -> int:
    conv = STANDARD
    for name in args.mutate or ():
        conv = conv.flipped(name)
    levels = [int(x) for x in args.levels.split(",")]
    params = _parse_params(args.param)
    if args.seed is not None and args.generator.replace("-", "_") == "perturbed":
        params.setdefault("seed", args.seed)
    result = run_convergence(args.generator.replace("-", "_"), levels, args.r_outer, params, conv,
                             solve=not args.no_solve, seed=args.seed or 0)
    rows = []
    for i, r in enumerate(result["levels"]):
        row = dict(r)
        for key, orders in result["orders"].items():
            row[f"order_{key}"] = orders[i - 1] if i > 0 else ""
        rows.append(row)
    buf = io.StringIO()
    keys = sorted({k for r in rows for k in r})
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _clean(r.get(k, "")) for k in keys})
    try:
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for f in result["flags"]:
        print(f"flag: {f}", file=sys.stderr)
    if args.strict and not result["converged"]:
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="afspin", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write an AFID1 dataset")
    g.add_argument("generator", help="flat, schwarzschild, bowen-york, constant-h, round-sphere, perturbed")
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--r-outer", type=float, default=12.0)
    g.add_argument("--spacing", type=float, default=None)
    g.add_argument("--m", type=float, default=None)
    g.add_argument("--p", default=None, help="momentum, e.g. 0,0,0.5")
    g.add_argument("--m-conf", type=float, default=None)
    g.add_argument("--c", type=float, default=None)
    g.add_argument("--a", type=float, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("verify", help="run checks on a dataset")
    v.add_argument("--input", required=True)
    v.add_argument("--output", default=None, help="report JSON (stdout if omitted)")
    v.add_argument("--csv", default=None)
    v.add_argument("--config", default=None)
    v.add_argument("--checks", default=None, help="comma-separated ids or 'all'")
    v.add_argument("--strict", action="store_true", help="accepted for symmetry; violations always exit 2")
    v.add_argument("--k", type=float, default=None)
    v.add_argument("--radii", default=None)
    v.add_argument("--eta", default=None, help="bump radii r1,r2")
    v.add_argument("--seed", type=int, default=None)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("convergence", help="refinement study of the discrete identities")
    c.add_argument("generator")
    c.add_argument("--levels", default="24,36,54")
    c.add_argument("--r-outer", type=float, default=3.0)
    c.add_argument("--param", action="append", help="generator parameter key=value")
    c.add_argument("--mutate", action="append", choices=["gauss", "codazzi", "connection"])
    c.add_argument("--no-solve", action="store_true")
    c.add_argument("--strict", action="store_true")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--output", default=None)
    c.set_defaults(func=cmd_convergence)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
