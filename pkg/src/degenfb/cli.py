"""Scenario runner and command-line interface.

Configurations are flat ``key = value`` text files with a strict schema
(unknown keys are rejected).  A scenario bundles the weight manifold, the
boundary data recipe, the grid, and analysis toggles; ``run_scenario``
solves it and runs the toggled diagnostics, dumping fields and CSV/JSON
reports that the stage subcommands can re-consume independently.

Exit codes: 0 success, 2 configuration/validation error, 3 solver
non-convergence, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import audit as audit_mod
from . import blowup as blowup_mod
from . import strata as strata_mod
from . import weiss as weiss_mod
from .field import Grid, dump_field, load_field
from .geometry import Manifold
from .minimizer import (BoundaryRecipe, ScenarioConfig, SolveConfig, energy,
                        solve)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_ACCEPTANCE = 4


class ConfigError(ValueError):
    pass


def _parse_bool(s):
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_auto_float(s):
    return None if s == "auto" else float(s)


def _parse_pair(s):
    parts = [p.strip() for p in s.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'x, y', got {s!r}")
    return (float(parts[0]), float(parts[1]))


def _parse_coeffs(s):
    if not s.strip():
        return []
    out = []
    for item in s.split(","):
        power, coeff = item.split(":")
        out.append((float(power), float(coeff)))
    return out


SCHEMA = {
    "scenario": (str, "stokes"),
    "gamma": (float, 0.5),
    "manifold.kind": (str, "axis-line"),
    "manifold.anchor": (_parse_pair, (0.0, 0.0)),
    "manifold.alpha": (float, 1.0),
    "manifold.coeffs": (_parse_coeffs, []),
    "manifold.bound": (float, 0.0),
    "boundary.kind": (str, "sector-trace"),
    "boundary.constant": (float, 0.0),
    "boundary.orientation": (_parse_auto_float, None),
    "boundary.amplitude": (_parse_auto_float, None),
    "boundary.modulation": (float, 0.0),
    "boundary.one_sided": (_parse_bool, False),
    "boundary.field": (str, ""),
    "domain.radius": (float, 2.0),
    "grid.resolution": (int, 257),
    "grid.extent": (float, 2.0),
    "solve.tolerance": (float, 1e-12),
    "solve.max_sweeps": (int, 20000),
    "solve.ordering": (str, "red-black"),
    "solve.positivity_threshold": (float, 0.0),
    "fb.threshold": (_parse_auto_float, None),
    "corner.fit_radius": (float, 0.2),
    "strata.eps": (float, 0.05),
    "strata.rho": (_parse_auto_float, None),
    "analysis.weiss": (_parse_bool, True),
    "analysis.blowup": (_parse_bool, True),
    "analysis.strata": (_parse_bool, True),
    "analysis.beta": (_parse_bool, True),
    "analysis.audit": (_parse_bool, True),
    "analysis.stokes": (_parse_bool, True),
    "seed": (int, 0),
}

STAGES = ("solve", "weiss", "blowup", "strata", "beta", "audit", "stokes")


def parse_config(path=None, text=None, overrides=None):
    """Parse a flat key-value config; unknown keys are rejected."""
    values = {k: default for k, (_, default) in SCHEMA.items()}
    if path is not None:
        with open(path) as fh:
            text = fh.read()
    if text:
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            parser = SCHEMA[key][0]
            try:
                values[key] = parser(val)
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}")
    for key, val in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown override {key!r}")
        values[key] = val
    _validate(values)
    return values


def _validate(cfg):
    n = cfg["grid.resolution"]
    if n < 3 or (n - 1) & (n - 2) != 0:
        raise ConfigError("grid.resolution must be a power of two plus one")
    if cfg["gamma"] <= 0:
        raise ConfigError("gamma must be positive")
    if cfg["solve.tolerance"] <= 0:
        raise ConfigError("solve.tolerance must be positive")
    if cfg["grid.extent"] <= 0:
        raise ConfigError("grid.extent must be positive")
    if cfg["manifold.kind"] not in ("axis-line", "single-point", "graph-curve"):
        raise ConfigError(f"unknown manifold.kind {cfg['manifold.kind']!r}")
    if cfg["domain.radius"] < 0:
        raise ConfigError("domain.radius must be nonnegative (0 = box domain)")


def build_manifold(cfg):
    kind = cfg["manifold.kind"]
    if kind == "axis-line":
        return Manifold.axis_line(y=cfg["manifold.anchor"][1],
                                  anchor_x=cfg["manifold.anchor"][0],
                                  alpha=cfg["manifold.alpha"])
    if kind == "single-point":
        return Manifold.point(at=cfg["manifold.anchor"],
                              alpha=cfg["manifold.alpha"])
    return Manifold.graph(cfg["manifold.coeffs"], alpha=cfg["manifold.alpha"],
                          anchor=cfg["manifold.anchor"],
                          bound=cfg["manifold.bound"] or None)


def build_scenario(cfg):
    custom = None
    if cfg["boundary.kind"] == "custom":
        if not cfg["boundary.field"]:
            raise ConfigError("custom boundary data needs boundary.field")
        custom = load_field(cfg["boundary.field"]).values
    boundary = BoundaryRecipe(kind=cfg["boundary.kind"],
                              constant=cfg["boundary.constant"],
                              orientation=cfg["boundary.orientation"],
                              amplitude=cfg["boundary.amplitude"],
                              modulation=cfg["boundary.modulation"],
                              custom=custom,
                              one_sided=cfg["boundary.one_sided"])
    manifold = build_manifold(cfg)
    return ScenarioConfig(gamma=cfg["gamma"], manifold=manifold,
                          boundary=boundary,
                          domain_radius=cfg["domain.radius"] or None)


def build_grid(cfg):
    return Grid.centered(cfg["grid.extent"], cfg["grid.resolution"])


def build_solver(cfg):
    return SolveConfig(tolerance=cfg["solve.tolerance"],
                       max_sweeps=cfg["solve.max_sweeps"],
                       ordering=cfg["solve.ordering"],
                       positivity_threshold=cfg["solve.positivity_threshold"])


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _fb_threshold(cfg, field):
    tau = cfg["fb.threshold"]
    return audit_mod.default_threshold(field, cfg["gamma"]) if tau is None else tau


def _rho(cfg, field):
    rho = cfg["strata.rho"]
    return 8.0 * field.h if rho is None else rho


def stage_solve(cfg, outdir):
    scenario = build_scenario(cfg)
    result = solve(build_grid(cfg), scenario, build_solver(cfg))
    dump_field(result.field, os.path.join(outdir, "field.csv"))
    with open(os.path.join(outdir, "telemetry.csv"), "w") as fh:
        fh.write("step,label,energy\n")
        for k, (label, e) in enumerate(result.telemetry):
            fh.write(f"{k},{label},{float(e)!r}\n")
    breakdown = energy(result.field, scenario.manifold, cfg["gamma"])
    summary = {
        "converged": bool(result.converged),
        "sweeps": int(result.sweeps),
        "residual": float(result.residual),
        "energy": {
            "dirichlet": breakdown.dirichlet,
            "measure": breakdown.measure,
            "total": breakdown.total,
        },
    }
    return result, summary


def _load_or_fail(outdir):
    path = os.path.join(outdir, "field.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no field dump at {path}; run the solve stage first")
    return load_field(path)


def stage_weiss(cfg, outdir, field=None):
    field = field if field is not None else _load_or_fail(outdir)
    manifold = build_manifold(cfg)
    gamma = cfg["gamma"]
    points = _probe_points(cfg, manifold)
    r_max = 0.5
    rows = []
    profiles = []
    for x in points:
        prof = weiss_mod.weiss_profile(field, manifold, gamma, x, r_max=r_max)
        violations = weiss_mod.monotonicity_audit(
            prof, manifold.holder_seminorm(1.0), manifold.alpha, gamma,
            tolerance=0.05)
        profiles.append(prof)
        for r, w, a in zip(prof.scales, prof.values, prof.allowances):
            rows.append((x[0], x[1], r, w, a))
    with open(os.path.join(outdir, "weiss.csv"), "w") as fh:
        fh.write("x,y,r,w,allowance\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    n_viol = sum(len(weiss_mod.monotonicity_audit(
        p, manifold.holder_seminorm(1.0), manifold.alpha, gamma, 0.05))
        for p in profiles)
    theta = weiss_mod.volume_density(
        field, (0.0, 0.0), [8 * field.h, 16 * field.h, 32 * field.h])
    return {
        "points": [[float(p[0]), float(p[1])] for p in points],
        "monotonicity_violations": int(n_viol),
        "theta_origin": theta.limit,
        "theta_hint": theta.hint,
    }


def _probe_points(cfg, manifold):
    """Deterministic probe points on the weight manifold inside B_{1/2}."""
    ts = np.linspace(-0.45, 0.45, 10)
    if manifold.kind == "graph-curve":
        return [manifold.curve_points(t) for t in ts]
    if manifold.kind == "single-point":
        return [manifold.anchor.copy()]
    return [np.array([manifold.anchor[0] + t, manifold.anchor[1]]) for t in ts]


def stage_blowup(cfg, outdir, field=None):
    field = field if field is not None else _load_or_fail(outdir)
    gamma = cfg["gamma"]
    origin = np.zeros(2)
    scales = [r for r in (0.8, 0.4, 0.2, 0.1, 0.05) if r >= 8 * field.h]
    seq = blowup_mod.blowup_sequence(field, origin, gamma, scales)
    rows = []
    for r, f in zip(seq.scales, seq.fields):
        for j in (0, 1):
            d = blowup_mod.symmetry_deficit(f, j, gamma)
            rows.append((origin[0], origin[1], r, j, d.deficit,
                         d.direction if d.direction is not None else np.nan))
    with open(os.path.join(outdir, "deficits.csv"), "w") as fh:
        fh.write("x,y,r,j,deficit,direction\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    align = (blowup_mod.align_to_model(seq.fields[-1], gamma, n_rot=360)
             if seq.fields else (np.nan, np.nan))
    return {
        "scales": [float(s) for s in seq.scales],
        "distances": [float(d) for d in seq.distances],
        "converged": bool(seq.converged),
        "truncated": bool(seq.truncated),
        "model_distance": float(align[0]),
        "model_orientation": float(align[1]),
    }


def stage_strata(cfg, outdir, field=None):
    field = field if field is not None else _load_or_fail(outdir)
    manifold = build_manifold(cfg)
    gamma = cfg["gamma"]
    fb = audit_mod.extract_free_boundary(field, _fb_threshold(cfg, field),
                                         manifold)
    decomp = strata_mod.decompose_singular(field, manifold, gamma, fb)
    rho = _rho(cfg, field)
    containment = strata_mod.containment_audit(
        field, manifold, gamma,
        [np.asarray(p) for p in decomp.nondegenerate], rho,
        domain_radius=cfg["domain.radius"] or None)
    radii = [r for r in (4 * field.h, 8 * field.h, 16 * field.h, 0.0625,
                         0.125, 0.25) if r <= 0.25]
    radii = sorted(set(radii))
    fit = strata_mod.minkowski_content(decomp.nondegenerate, radii, field.h)
    report = {
        "singular_points": [[float(p[0]), float(p[1])]
                            for p in decomp.nondegenerate],
        "cusp_points": [[float(p[0]), float(p[1])] for p in decomp.degenerate],
        "epsilon_star": containment.epsilon_star,
        "minkowski_slope": fit.slope,
        "minkowski_bound": (float(np.max(fit.normalized))
                            if fit.normalized is not None and len(fit.normalized)
                            else None),
    }
    with open(os.path.join(outdir, "strata.csv"), "w") as fh:
        fh.write("x,y,theta,label\n")
        for p in decomp.nondegenerate:
            fh.write(f"{p[0]!r},{p[1]!r},{decomp.theta[p]!r},S\n")
        for p in decomp.degenerate:
            fh.write(f"{p[0]!r},{p[1]!r},{decomp.theta[p]!r},Sigma\n")
    return report


def stage_beta(cfg, outdir, field=None):
    """Demonstration beta diagnostics on the extracted interface and on a
    seeded random measure (oracle cross-check lives in the test suite)."""
    field = field if field is not None else _load_or_fail(outdir)
    manifold = build_manifold(cfg)
    fb = audit_mod.extract_free_boundary(field, _fb_threshold(cfg, field))
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    if len(fb) > 0:
        pts = fb.vertices
        take = rng.choice(len(pts), size=min(len(pts), 200), replace=False)
        mu = strata_mod.PointMeasure.uniform(pts[np.sort(take)])
        for r in (0.25, 0.5):
            prof = strata_mod.beta_number(mu, np.zeros(2), r, k=1)
            rows.append((0.0, 0.0, r, 1, prof.beta_sq))
        rsum = strata_mod.reifenberg_sum(mu, np.zeros(2), 0.25, k=1, depth=6)
    else:
        rsum = 0.0
    with open(os.path.join(outdir, "beta.csv"), "w") as fh:
        fh.write("x,y,r,k,beta_sq\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return {"interface_beta": [[float(r), float(b)] for _, _, r, _, b in rows],
            "reifenberg_sum": float(rsum)}


def stage_audit(cfg, outdir, field=None):
    field = field if field is not None else _load_or_fail(outdir)
    manifold = build_manifold(cfg)
    gamma = cfg["gamma"]
    fb = audit_mod.extract_free_boundary(field, _fb_threshold(cfg, field),
                                         manifold)
    radii = [r for r in (0.5, 0.25, 0.125, 0.0625) if r >= 8 * field.h]
    growth = audit_mod.growth_audit(field, manifold, gamma, fb, radii)
    lip = audit_mod.lipschitz_audit(field, gamma, radii)
    coarea = audit_mod.coarea_perimeter(
        field, manifold, gamma, center=(0.0, 0.0), radius=0.5, eps=0.02,
        with_bound=False)
    with open(os.path.join(outdir, "fb.csv"), "w") as fh:
        fh.write("chain,x,y\n")
        for ci, chain in enumerate(fb.chains):
            for p in chain:
                fh.write(f"{ci},{float(p[0])!r},{float(p[1])!r}\n")
    return {
        "fb_points": int(len(fb)),
        "c_max": growth.c_max,
        "c_min": growth.c_min,
        "bulk_min": growth.bulk_min,
        "lipschitz_slope": lip.slope,
        "layer_energy": coarea.layer_energy,
        "perimeter": coarea.perimeter,
    }


def stage_stokes(cfg, outdir, field=None):
    field = field if field is not None else _load_or_fail(outdir)
    gamma = cfg["gamma"]
    manifold = build_manifold(cfg)
    fb = audit_mod.extract_free_boundary(field, _fb_threshold(cfg, field),
                                         manifold)
    target = np.pi / (1.0 + gamma)
    try:
        angle = audit_mod.corner_angle(fb, (0.0, 0.0),
                                       fit_radius=cfg["corner.fit_radius"])
    except audit_mod.CornerError as exc:
        return {"corner_angle": None, "target": float(target),
                "error": str(exc), "passed": False}
    theta = weiss_mod.volume_density(
        field, (0.0, 0.0), [8 * field.h, 16 * field.h, 32 * field.h])
    checks = [
        {"name": "corner-angle", "operation": "corner_angle",
         "value": float(angle), "target": float(target), "tolerance": 0.15,
         "passed": bool(abs(angle - target) <= 0.15)},
        {"name": "volume-density", "operation": "volume_density",
         "value": theta.limit, "target": 1.0 / (2.0 * (1.0 + gamma)),
         "tolerance": 0.05,
         "passed": bool(abs(theta.limit - 1.0 / (2.0 * (1.0 + gamma))) <= 0.05)},
    ]
    return {"corner_angle": float(angle), "target": float(target),
            "checks": checks, "passed": all(c["passed"] for c in checks)}


# ---------------------------------------------------------------------------
# runner and emission
# ---------------------------------------------------------------------------

def run_scenario(cfg, outdir, only=None):
    os.makedirs(outdir, exist_ok=True)
    report = {"scenario": _echo(cfg)}
    stages = STAGES if only is None else ("solve", only)
    result = None
    if "solve" in stages:
        result, summary = stage_solve(cfg, outdir)
        report["solve"] = summary
        if not result.converged:
            report["error"] = "solver did not converge"
            return report, EXIT_NONCONVERGED
    field = result.field if result is not None else None
    runners = {
        "weiss": stage_weiss, "blowup": stage_blowup, "strata": stage_strata,
        "beta": stage_beta, "audit": stage_audit, "stokes": stage_stokes,
    }
    for name, fn in runners.items():
        if name in stages and cfg.get(f"analysis.{name}", True):
            report[name] = fn(cfg, outdir, field)
    code = EXIT_OK
    if "stokes" in report and not report["stokes"].get("passed", True):
        code = EXIT_ACCEPTANCE
    return report, code


def _echo(cfg):
    echo = {}
    for key, val in sorted(cfg.items()):
        if isinstance(val, tuple):
            val = list(val)
        if isinstance(val, list):
            val = [list(v) if isinstance(v, tuple) else v for v in val]
        echo[key] = val
    return echo


def emit_report(report, outdir, fmt="json"):
    """Write the report; emission is deterministic and re-emission is
    byte-identical."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    if fmt == "json":
        path = os.path.join(outdir, "report.json")
        with open(path, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        paths.append(path)
    elif fmt == "csv-bundle":
        path = os.path.join(outdir, "report_summary.csv")
        with open(path, "w") as fh:
            fh.write("key,value\n")
            for key, val in sorted(_flatten(report).items()):
                fh.write(f"{key},{val}\n")
        paths.append(path)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return paths


def _flatten(tree, prefix=""):
    flat = {}
    if isinstance(tree, dict):
        for k, v in tree.items():
            flat.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(tree, (list, tuple)):
        for i, v in enumerate(tree):
            flat.update(_flatten(v, f"{prefix}{i}."))
    else:
        if isinstance(tree, float):
            tree = repr(tree)
        flat[prefix.rstrip(".")] = tree
    return flat


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="degenfb",
        description="Variational solver and geometric diagnostics for "
                    "one-phase problems with a degenerate weight.")
    parser.add_argument("command", choices=STAGES + ("report",))
    parser.add_argument("--config", default=None, help="scenario config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--resolution", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--only", default=None, choices=STAGES,
                        help="run the solve plus a single analysis stage")
    args = parser.parse_args(argv)

    overrides = {}
    if args.resolution is not None:
        overrides["grid.resolution"] = args.resolution
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = parse_config(args.config, overrides=overrides)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command == "report":
            path = os.path.join(args.out, "report.json")
            if not os.path.exists(path):
                print(f"no report at {path}", file=sys.stderr)
                return EXIT_CONFIG
            with open(path) as fh:
                report = json.load(fh)
            emit_report(report, args.out, "json")
            emit_report(report, args.out, "csv-bundle")
            return EXIT_OK
        if args.command == "solve":
            report, code = run_scenario(cfg, args.out, only="solve")
        elif args.command == "stokes" and args.only:
            report, code = run_scenario(cfg, args.out, only=args.only)
        elif args.command == "stokes":
            report, code = run_scenario(cfg, args.out)
        else:
            # stage commands consume an existing field dump
            stage = {
                "weiss": stage_weiss, "blowup": stage_blowup,
                "strata": stage_strata, "beta": stage_beta,
                "audit": stage_audit,
            }[args.command]
            report = {"scenario": _echo(cfg), args.command: stage(cfg, args.out)}
            code = EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    emit_report(report, args.out, "json")
    for name, block in report.items():
        if isinstance(block, dict) and "passed" in block:
            status = "PASS" if block["passed"] else "FAIL"
            print(f"[{status}] {name}")
    return code


if __name__ == "__main__":
    sys.exit(main())
