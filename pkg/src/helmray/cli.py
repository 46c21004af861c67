"""Command-line entry point: one binary, subcommand dispatch, manifest outputs.

Every run writes its artifacts plus a manifest.json (config hash, seed,
versions, argv) into the output directory; CSV outputs are byte-reproducible
for identical config and seed.  Timestamps live only in the manifest.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import (ConstantsLedger, estimate_C_DtN_tilde, estimate_C_H2,
                     estimate_C_int_tilde, mesh_threshold)
from .config import RunConfig
from .dtn import build_dtn
from .experiments import (RadialCutoff, estimate_eta, h2_scaling_study,
                          quasimode_lower_bound, quasioptimality_study,
                          resolvent_scan)
from .fem import (assemble, assemble_load_scattering, assemble_load_source,
                  build_space, energy_norm, solve)
from .geometry import check_gradients, validate_configuration
from .mesh import generate_mesh
from .raytrace import hamiltonian, PhasePoint, classify_trapping, longest_ray_length
from .util import fmt_float, write_csv, write_json


def _out_dir(args, name):
    out = Path(args.out) if args.out else Path(f"out-{name}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out, args, cfg: RunConfig, extra=None):
    data = {
        "subcommand": args.command,
        "argv": sys.argv[1:],
        "config_sha256": cfg.sha256(),
        "seed": _seed(args, cfg),
        "versions": {
            "helmray": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "timestamps": {"written_at_unix": time.time()},
    }
    if extra:
        data.update(extra)
    write_json(out / "manifest.json", data)
    (out / "config.ini").write_text(cfg.to_text())


def _load_config(args):
    return RunConfig.from_file(args.config) if args.config else RunConfig.default()


def _seed(args, cfg):
    return args.seed if args.seed is not None else cfg.seed()


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    report = validate_configuration(coeffs, obstacle, geom)
    grad_err = check_gradients(coeffs, np.array([[0.1, 0.2], [0.5, -0.3], [0.9, 0.1]]))
    out = _out_dir(args, "validate")
    payload = {
        "ok": bool(report.ok),
        "failures": [{"invariant": name,
                      "point": None if pt is None else [float(pt[0]), float(pt[1])]}
                     for name, pt in report.failures],
        "gradient_fd_relative_error": grad_err,
    }
    write_json(out / "validation.json", payload)
    _manifest(out, args, cfg)
    print(json.dumps(payload, indent=2))
    return 0 if report.ok else 1


def _cmd_rays(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    ray_cfg = cfg.ray_config(
        step_size=args.step, max_time_budget=args.budget,
        grid_pos_r=args.grid_pos, grid_dir=args.grid_dir,
        refinement_rounds=args.refine)
    R = args.R if args.R is not None else geom.R
    result = longest_ray_length(coeffs, obstacle, geom, R, ray_cfg,
                                allow_censored=args.allow_censored)
    out = _out_dir(args, "rays")
    payload = {
        "L": result.L,
        "maximizer": {"x": [float(v) for v in result.maximizer.x],
                      "xi": [float(v) for v in result.maximizer.xi]},
        "censored_fraction": result.diagnostics.censored_fraction,
        "n_samples": result.diagnostics.n_samples,
        "n_glancing": result.diagnostics.n_glancing,
        "n_budget": result.diagnostics.n_budget,
        "R": float(R),
    }
    write_json(out / "rays.json", payload)
    if args.dump_trajectory:
        from .raytrace import integrate_ray
        traj = integrate_ray(coeffs, obstacle, geom, result.maximizer, ray_cfg)
        rows = [(t, s[0], s[1], s[2], s[3],
                 hamiltonian(coeffs, PhasePoint(s[:2], s[2:])))
                for t, s in zip(traj.times, traj.states)]
        write_csv(out / "trajectory.csv", ["s", "x1", "x2", "xi1", "xi2", "H"], rows)
    _manifest(out, args, cfg)
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_trapping(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    report = classify_trapping(coeffs, obstacle, geom, cfg.ray_config())
    out = _out_dir(args, "trapping")
    payload = {
        "nontrapping": report.nontrapping,
        "n_samples": report.n_samples,
        "n_budget": report.n_budget,
        "n_glancing": report.n_glancing,
        "budget": report.budget,
        "censored": [{"x": [float(v) for v in p.x], "xi": [float(v) for v in p.xi]}
                     for p in report.censored_initial_conditions],
    }
    write_json(out / "trapping.json", payload)
    _manifest(out, args, cfg)
    print(json.dumps({k: payload[k] for k in
                      ("nontrapping", "n_samples", "n_budget", "n_glancing")}, indent=2))
    return 0


def _cmd_dtn_check(args):
    cfg = _load_config(args)
    op = build_dtn(args.k, args.R, args.nmax)
    out = _out_dir(args, "dtn-check")
    rows = [(int(n), float(op.t(n).real), float(op.t(n).imag)) for n in op.orders]
    write_csv(out / "dtn_coefficients.csv", ["n", "re_t_n", "im_t_n"], rows)
    sign_ok = bool(np.all(op.coefficients.real <= 1e-12 * np.abs(op.coefficients)))
    payload = {"k": args.k, "R": args.R, "n_max": op.n_max,
               "sign_property_re_nonpositive": sign_ok,
               "max_re": float(op.coefficients.real.max())}
    write_json(out / "sign_report.json", payload)
    _manifest(out, args, cfg)
    print(json.dumps(payload, indent=2))
    return 0 if sign_ok else 1


def _cmd_solve(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    k = args.k if args.k is not None else cfg.wave().k
    h = args.h if args.h is not None else cfg.get("fem", "h")
    mesh = generate_mesh(obstacle, geom, h)
    space = build_space(mesh)
    dtn = build_dtn(k, geom.R)
    system = assemble(coeffs, space, dtn, k, cfg.get("fem", "quad_degree", 4))
    if args.problem == "scattering":
        ang = np.deg2rad(args.incident_angle)
        rhs = assemble_load_scattering(space, dtn, (np.cos(ang), np.sin(ang)))
    else:
        width = 0.25 * geom.R1

        def f(x):
            x = np.atleast_2d(x)
            return np.exp(-np.sum(x**2, axis=1) / (2.0 * width**2))

        rhs = assemble_load_source(space, f, support_radius=geom.R)
    u = solve(system, rhs)
    out = _out_dir(args, "solve")
    vv = u.vertex_values()
    write_csv(out / "solution.csv", ["vertex", "x1", "x2", "re_u", "im_u"],
              [(i, mesh.vertices[i, 0], mesh.vertices[i, 1], vv[i].real, vv[i].imag)
               for i in range(mesh.n_vertices)])
    payload = {
        "k": float(k), "h_target": float(h), "h_fem": mesh.h_fem,
        "problem": args.problem,
        "n_vertices": mesh.n_vertices, "n_dofs": space.n_dofs,
        "shape_regularity": mesh.shape_regularity,
        "energy_norm": energy_norm(coeffs, space, u, k, system=system),
        "residual": u.residual,
    }
    write_json(out / "solve.json", payload)
    _manifest(out, args, cfg)
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_constants(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    k0 = cfg.wave().k0
    seed = _seed(args, cfg)
    c_int_tilde = estimate_C_int_tilde()
    c_dtn_tilde = estimate_C_DtN_tilde(geom.R, [k0, 2.0 * k0, 4.0 * k0])
    ch2 = estimate_C_H2(coeffs, obstacle, geom, samples=args.samples, seed=seed)
    ray_cfg = cfg.ray_config()
    ray = longest_ray_length(coeffs, obstacle, geom, geom.R + 2.0, ray_cfg,
                             allow_censored=args.allow_censored)
    ledger = ConstantsLedger(
        C_int_tilde=c_int_tilde,
        C_DtN_tilde=c_dtn_tilde,
        C_H2=ch2.value,
        A_min=coeffs.A_min, A_max=coeffs.A_max,
        nu_min=coeffs.nu_min, nu_max=coeffs.nu_max,
        k0=k0,
        L_ray=ray.L,
        provenance={"C_int_tilde": "empirical", "C_DtN_tilde": "empirical",
                    "C_H2": "empirical", "L_ray": "empirical",
                    "A_bounds": "supplied", "nu_bounds": "supplied",
                    "k0": "supplied"},
    )
    ledger.validate()
    out = _out_dir(args, "constants")
    ledger.to_json(out / "ledger.json")
    _manifest(out, args, cfg)
    print(json.dumps({"C_int_tilde": ledger.C_int_tilde,
                      "C_DtN_tilde": ledger.C_DtN_tilde,
                      "C_H2": ledger.C_H2, "L_ray": ledger.L_ray,
                      "C_int": ledger.C_int, "C_DtN": ledger.C_DtN}, indent=2))
    return 0


def _cmd_threshold(args):
    cfg = _load_config(args)
    ledger = ConstantsLedger.from_json(args.ledger)
    report = mesh_threshold(ledger, args.k, h_query=args.h)
    out = _out_dir(args, "threshold")
    write_json(out / "threshold.json", report.to_dict())
    _manifest(out, args, cfg)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_resolvent_scan(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    ks = [float(tok) for tok in args.ks.replace(",", " ").split()]
    cutoff = RadialCutoff(inner=cfg.get("experiment", "cutoff_inner"),
                          outer=cfg.get("experiment", "cutoff_outer"))
    scan = resolvent_scan(coeffs, obstacle, geom, ks, cutoff, s=args.s,
                          rtol=1e-4, seed=_seed(args, cfg))
    out = _out_dir(args, "resolvent-scan")
    write_csv(out / "resolvent_scan.csv",
              ["k", "norm", "k_times_norm", "lower_reference", "upper_reference",
               "converged", "iterations"],
              [(r["k"], r["norm"], r["k_times_norm"], r["lower_reference"],
                r["upper_reference"], str(r["converged"]), r["iterations"])
               for r in scan.rows])
    _manifest(out, args, cfg, extra={"method": scan.method, "s": scan.s})
    print(json.dumps(scan.rows, indent=2, default=fmt_float))
    return 0


def _cmd_quasimode(args):
    cfg = _load_config(args)
    result = quasimode_lower_bound(args.L, args.delta, args.h)
    out = _out_dir(args, "quasimode")
    payload = {"L": args.L, "delta": args.delta, "h": args.h,
               "ratio": result.ratio, "reference": result.reference,
               "f_norm_sq": result.f_norm_sq, "u_norm_sq": result.u_norm_sq,
               "mu": result.mu,
               "note": "flat 1-D transport model of the amplification pair"}
    write_json(out / "quasimode.json", payload)
    _manifest(out, args, cfg)
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_eta(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    k = args.k if args.k is not None else cfg.wave().k
    h = args.h if args.h is not None else cfg.get("fem", "h")
    est = estimate_eta(coeffs, obstacle, geom, k, h, samples=args.samples,
                       seed=_seed(args, cfg))
    out = _out_dir(args, "eta")
    payload = {"k": est.k, "h_fem": est.h_fem, "samples": est.samples,
               "eta": est.value, "per_sample": est.per_sample}
    write_json(out / "eta.json", payload)
    _manifest(out, args, cfg)
    print(json.dumps({k2: payload[k2] for k2 in ("k", "h_fem", "samples", "eta")},
                     indent=2))
    return 0


def _cmd_convergence(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    ledger = ConstantsLedger.from_json(args.ledger)
    ks = [float(tok) for tok in args.ks.replace(",", " ").split()]
    hs = [float(tok) for tok in args.hs.replace(",", " ").split()]
    table = quasioptimality_study(coeffs, obstacle, geom, ledger, ks, hs,
                                  incident_direction=(1.0, 0.0))
    out = _out_dir(args, "convergence")
    header = ["k", "h_target", "h_fem", "energy_error", "l2_error",
              "best_approx_error", "qo_ratio", "threshold_rhs", "admissible",
              "failed"]
    rows = []
    for r in table.rows:
        rows.append(tuple(r.get(col, "") if not isinstance(r.get(col), bool)
                          else str(r.get(col)) for col in header))
    write_csv(out / "convergence.csv", header, rows)
    write_json(out / "summary.json",
               {"quasioptimality_bound": table.quasioptimality_bound,
                "rows": len(table.rows),
                "admissible_rows": sum(1 for r in table.rows
                                       if r.get("admissible") is True)})
    _manifest(out, args, cfg)
    print(f"{len(table.rows)} rows; bound 2(1+C_DtN) = "
          f"{table.quasioptimality_bound:.4f}")
    return 0


def _cmd_h2_scan(args):
    cfg = _load_config(args)
    coeffs, obstacle, geom = cfg.coefficients(), cfg.obstacle(), cfg.geometry()
    ks = [float(tok) for tok in args.ks.replace(",", " ").split()]
    result = h2_scaling_study(coeffs, obstacle, geom, ks, seed=_seed(args, cfg))
    out = _out_dir(args, "h2-scan")
    write_csv(out / "h2_scan.csv",
              ["k", "load", "h2_over_f", "ratio_to_linear", "h_fem"],
              [(r["k"], r["load"], r["h2_over_f"], r["ratio_to_linear"], r["h_fem"])
               for r in result["rows"]])
    write_json(out / "summary.json", {"fitted_exponent": result["fitted_exponent"]})
    _manifest(out, args, cfg)
    print(json.dumps({"fitted_exponent": result["fitted_exponent"]}, indent=2))
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration path")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker pool size")

    p = argparse.ArgumentParser(prog="helmray",
                                description="longest rays, radiation-closed "
                                            "Helmholtz FEM, and explicit "
                                            "mesh-threshold constants")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, parents=[common])

    sp = add("validate", "check configuration invariants")
    sp.set_defaults(fn=_cmd_validate)

    sp = add("rays", "longest-ray length of a ball")
    sp.add_argument("--R", type=float, help="ball radius (default geometry R)")
    sp.add_argument("--grid-pos", type=int, dest="grid_pos")
    sp.add_argument("--grid-dir", type=int, dest="grid_dir")
    sp.add_argument("--step", type=float)
    sp.add_argument("--budget", type=float)
    sp.add_argument("--refine", type=int)
    sp.add_argument("--allow-censored", action="store_true")
    sp.add_argument("--dump-trajectory", action="store_true")
    sp.set_defaults(fn=_cmd_rays)

    sp = add("trapping", "sampled nontrapping verdict")
    sp.set_defaults(fn=_cmd_trapping)

    sp = add("dtn-check", "modal radiation coefficients")
    sp.add_argument("--k", type=float, required=True)
    sp.add_argument("--R", type=float, required=True)
    sp.add_argument("--nmax", type=int, default=None)
    sp.set_defaults(fn=_cmd_dtn_check)

    sp = add("solve", "one discretized solve")
    sp.add_argument("--k", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--problem", choices=("source", "scattering"),
                    default="scattering")
    sp.add_argument("--incident-angle", type=float, default=0.0,
                    help="degrees")
    sp.set_defaults(fn=_cmd_solve)

    sp = add("constants", "estimate the constants ledger")
    sp.add_argument("--samples", type=int, default=8)
    sp.add_argument("--allow-censored", action="store_true")
    sp.set_defaults(fn=_cmd_constants)

    sp = add("threshold", "mesh-size admissibility report")
    sp.add_argument("--ledger", required=True, help="ledger.json from constants")
    sp.add_argument("--k", type=float, required=True)
    sp.add_argument("--h", type=float, default=None)
    sp.set_defaults(fn=_cmd_threshold)

    sp = add("resolvent-scan", "cutoff resolvent norms over k")
    sp.add_argument("--ks", required=True, help="comma-separated wavenumbers")
    sp.add_argument("--s", type=int, choices=(0, 1), default=0)
    sp.set_defaults(fn=_cmd_resolvent_scan)

    sp = add("quasimode", "1-D transport amplification pair")
    sp.add_argument("--L", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--h", type=float, default=0.01)
    sp.set_defaults(fn=_cmd_quasimode)

    sp = add("eta", "adjoint best-approximation estimate")
    sp.add_argument("--k", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--samples", type=int, default=8)
    sp.set_defaults(fn=_cmd_eta)

    sp = add("convergence", "quasioptimality sweep")
    sp.add_argument("--ledger", required=True)
    sp.add_argument("--ks", required=True)
    sp.add_argument("--hs", required=True)
    sp.set_defaults(fn=_cmd_convergence)

    sp = add("h2-scan", "second-order norm growth in k")
    sp.add_argument("--ks", required=True)
    sp.set_defaults(fn=_cmd_h2_scan)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        report = {"error": type(exc).__name__, "message": str(exc),
                  "subcommand": args.command}
        print(json.dumps(report, indent=2), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
