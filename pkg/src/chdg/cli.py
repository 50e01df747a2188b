"""Command-line driver: run scenario cases, convergence sweeps and solver
robustness sweeps, with flat key=value configs and reproducible manifests.

Commands (exit 0 on success, 2 on validation errors, 3 on solver failure):

    chdg run         --case NAME [--config FILE] [--set k=v ...] [--out DIR]
    chdg convergence [--config FILE] [--set k=v ...] [--out DIR]
    chdg robustness  [--config FILE] [--set k=v ...] [--out DIR]
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .cases import CASE_FACTORIES, make_case
from .chcore import SolverConfig, StageFailureError, StageContext
from .diagnostics import (convergence_rates, l2_error, write_field_vtk,
                          write_timeseries)
from .spaces import Field
from .timeloop import StepCollapseError, trbdf2_tableau, advance
from . import cases as cases_mod

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


def _parse_bool(s):
    if str(s).lower() in ("1", "true", "yes", "on"):
        return True
    if str(s).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


# dotted config key -> (section, CaseSetup/Solver attr, parser)
_CASE_KEYS = {
    "case": ("case", str),
    "t_end": ("t_end", float),
    "dt0": ("dt0", float),
    "adaptive": ("adaptive", _parse_bool),
    "dt_max": ("dt_max", float),
    "seed": ("ic_seed", int),
    "u0": ("u0", float),
    "mesh.nx": ("nx", int),
    "mesh.ny": ("ny", int),
    "mesh.Lx": ("Lx", float),
    "mesh.Ly": ("Ly", float),
    "mesh.periodic_x": ("periodic_x", _parse_bool),
    "mesh.periodic_y": ("periodic_y", _parse_bool),
    "mesh.perturb_factor": ("perturb_factor", float),
    "mesh.perturb_seed": ("perturb_seed", int),
    "space.order": ("order", int),
    "space.quad_order": ("quad_order", int),
    "params.d0": ("d0", float),
    "params.eps": ("eps", float),
    "params.flux_scheme": ("flux_scheme", str),
    "params.kappa_ip": ("kappa_ip", float),
    "controller.tol_a": ("tol_a", float),
    "controller.tol_r": ("tol_r", float),
    "controller.s0": ("s0", float),
    "controller.beta1": ("beta1", float),
    "controller.beta2": ("beta2", float),
    "controller.kappa": ("kappa_ctrl", float),
}
_SOLVER_KEYS = {
    "solver.gmres_rtol": ("gmres_rtol", float),
    "solver.newton_rtol": ("newton_rtol", float),
    "solver.linear_solver": ("linear_solver", str),
    "solver.inner_method": ("inner_method", str),
    "solver.inner_degree": ("inner_degree", int),
    "solver.sor_sweeps": ("sor_sweeps", int),
    "solver.gmres_restart": ("gmres_restart", int),
    "solver.gmres_max_iter": ("gmres_max_iter", int),
}
_OUTPUT_KEYS = {
    "output.vtk_every": int,
    "robustness.kdx_max": int,
    "robustness.kdt": int,
    "robustness.kdt_sweep": _parse_bool,
}


def parse_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        out[key] = val
    return out


def load_config(path=None, sets=()):
    cfg = {}
    if path is not None:
        with open(path) as f:
            cfg.update(parse_config_text(f.read()))
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = (part.strip() for part in item.split("=", 1))
        cfg[key] = val
    known = set(_CASE_KEYS) | set(_SOLVER_KEYS) | set(_OUTPUT_KEYS)
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
    return cfg


def resolve(cfg, default_case=None):
    """Turn a raw config dict into (CaseSetup, SolverConfig, extras)."""
    name = cfg.get("case", default_case)
    if name is None:
        raise ConfigError("no case selected (use --case or case=...)")
    if name not in CASE_FACTORIES:
        raise ConfigError(f"unknown case {name!r}; valid cases: "
                          + ", ".join(sorted(CASE_FACTORIES)))
    setup = make_case(name)
    for key, raw in cfg.items():
        if key == "case":
            continue
        if key in _CASE_KEYS:
            attr, typ = _CASE_KEYS[key]
            setattr(setup, attr, typ(raw))
    solver = SolverConfig()
    for key, raw in cfg.items():
        if key in _SOLVER_KEYS:
            attr, typ = _SOLVER_KEYS[key]
            setattr(solver, attr, typ(raw))
    extras = {k: _OUTPUT_KEYS[k](cfg[k]) for k in _OUTPUT_KEYS if k in cfg}
    return setup, solver, extras


def write_manifest(path, setup, solver, extras):
    """Config snapshot sufficient to reproduce the run (versions commented)."""
    lines = [f"# chdg {__version__}, numpy {np.__version__}",
             f"case = {setup.name}"]
    for key, (attr, _) in _CASE_KEYS.items():
        if key == "case":
            continue
        lines.append(f"{key} = {getattr(setup, attr)}")
    for key, (attr, _) in _SOLVER_KEYS.items():
        lines.append(f"{key} = {getattr(solver, attr)}")
    for key, val in extras.items():
        lines.append(f"{key} = {val}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_run(setup, solver, extras, outdir):
    os.makedirs(outdir, exist_ok=True)
    write_manifest(os.path.join(outdir, "manifest.txt"), setup, solver, extras)
    run = cases_mod.build_run(setup, solver)
    tab = trbdf2_tableau()
    vtk_every = extras.get("output.vtk_every", 0)

    def snapshot(n_acc, t, phi):
        if vtk_every and n_acc % vtk_every == 0:
            _write_vtk(run, phi,
                       os.path.join(outdir, f"fields_{n_acc:05d}.vtk"))

    res = advance(run.system, run.phi0, 0.0, setup.t_end, tab,
                  run.controller, adaptive=setup.adaptive, on_accept=snapshot)
    write_timeseries(res.records, os.path.join(outdir, "timeseries.csv"))
    _write_vtk(run, res.y, os.path.join(outdir, "fields_final.vtk"))
    if run.exact is not None:
        phi = Field(run.dg, res.y)
        err = l2_error(phi, lambda p: run.exact(p, res.t))
        print(f"[chdg] L2 error vs exact at t={res.t:g}: {err:.6e}")
    print(f"[chdg] case {setup.name}: {res.n_accepted} accepted / "
          f"{res.n_rejected} rejected steps to t={res.t:g}; "
          f"output in {outdir}")
    return EXIT_OK


def _write_vtk(run, phi_vec, path):
    ctx = StageContext.unit()
    sigma, mu, j = run.ops.solve_auxiliary(phi_vec, ctx)
    write_field_vtk(path, run.mesh,
                    point_fields={"phi": Field(run.dg, phi_vec),
                                  "mu": Field(run.dg, mu)},
                    cell_fields={"flux": Field(run.hdiv, j),
                                 "grad_phi": Field(run.hdiv, sigma)})


def convergence_study(solver=None, resolutions=(16, 32, 64), verbose=True):
    """Manufactured-solution errors and observed orders for phi and sigma."""
    solver = solver or SolverConfig()
    tab = trbdf2_tableau()
    errs_phi, errs_sig, hs = [], [], []
    for nx in resolutions:
        setup = make_case("manufactured", nx=nx)
        run = cases_mod.build_run(setup, solver)
        res = advance(run.system, run.phi0, 0.0, setup.t_end, tab,
                      run.controller, adaptive=False)
        phi = Field(run.dg, res.y)
        sigma, _, _ = run.ops.solve_auxiliary(res.y, StageContext.unit())
        e_phi = l2_error(phi, lambda p: run.exact(p, res.t))
        e_sig = l2_error(Field(run.hdiv, sigma),
                         lambda p: run.exact_grad(p, res.t))
        errs_phi.append(e_phi)
        errs_sig.append(e_sig)
        hs.append(1.0 / nx)
        if verbose:
            print(f"[chdg] {nx:>3}^2  err_phi={e_phi:.6e}  err_sigma={e_sig:.6e}")
    rates_phi = convergence_rates(errs_phi, hs)
    rates_sig = convergence_rates(errs_sig, hs)
    if verbose:
        print(f"[chdg] rates phi:   "
              + "  ".join(f"{r:.3f}" for r in rates_phi))
        print(f"[chdg] rates sigma: "
              + "  ".join(f"{r:.3f}" for r in rates_sig))
    return {"h": hs, "err_phi": errs_phi, "err_sigma": errs_sig,
            "rates_phi": rates_phi, "rates_sigma": rates_sig}


def cmd_convergence(setup_unused, solver, extras, outdir):
    os.makedirs(outdir, exist_ok=True)
    out = convergence_study(solver)
    path = os.path.join(outdir, "convergence.csv")
    with open(path, "w") as f:
        f.write("h,err_phi,err_sigma\n")
        for h, ep, es in zip(out["h"], out["err_phi"], out["err_sigma"]):
            f.write(f"{h:.17g},{ep:.17g},{es:.17g}\n")
    print(f"[chdg] wrote {path}")
    worst = min(min(out["rates_phi"]), min(out["rates_sigma"]))
    if worst < 1.8:
        print(f"[chdg] FAIL: observed rate {worst:.3f} < 1.8")
        return 1
    print(f"[chdg] PASS: all rates >= 1.8 (worst {worst:.3f})")
    return EXIT_OK


def robustness_study(solver=None, kdx_list=(0, 1, 2, 3), k_dt=6,
                     eps_list=(2.0 ** -4, 2.0 ** -6), verbose=True):
    """Average linear iterations per nonlinear iteration over the last ten
    of twenty fixed steps, per mesh-refinement level and epsilon."""
    solver = solver or SolverConfig()
    tab = trbdf2_tableau()
    table = {}
    for eps in eps_list:
        for kdx in kdx_list:
            setup = make_case("robustness", k_dx=kdx, k_dt=k_dt,
                              eps_choice=eps)
            run = cases_mod.build_run(setup, solver)
            res = advance(run.system, run.phi0, 0.0, setup.t_end, tab,
                          run.controller, adaptive=False)
            acc = [r for r in res.records if r.accepted]
            tail = acc[-10:]
            gm = sum(r.gmres_iters_total for r in tail)
            nt = sum(r.newton_iters for r in tail)
            conv = all(all(st.newton.linear_converged
                           for st in stages if st.newton is not None)
                       for stages in res.stage_stats)
            table[(kdx, eps)] = {"avg_linear_per_newton": gm / nt,
                                 "newton_iters": nt, "converged": conv}
            if verbose:
                print(f"[chdg] k_dx={kdx} eps=2^{np.log2(eps):+.0f}: "
                      f"avg linear/newton = {gm / nt:.1f} "
                      f"(converged={conv})")
    return table


def cmd_robustness(setup_unused, solver, extras, outdir):
    os.makedirs(outdir, exist_ok=True)
    kdx_max = extras.get("robustness.kdx_max", 3)
    k_dt = extras.get("robustness.kdt", 6)
    eps_list = (2.0 ** -4, 2.0 ** -6)
    table = robustness_study(solver, tuple(range(kdx_max + 1)), k_dt, eps_list)
    path = os.path.join(outdir, "robustness.csv")
    with open(path, "w") as f:
        f.write("k_dx," + ",".join(f"eps_2^{int(np.log2(e))}"
                                   for e in eps_list) + "\n")
        for kdx in range(kdx_max + 1):
            row = [str(kdx)] + [f"{table[(kdx, e)]['avg_linear_per_newton']:.17g}"
                                for e in eps_list]
            f.write(",".join(row) + "\n")
    print(f"[chdg] wrote {path}")
    if extras.get("robustness.kdt_sweep", False):
        table_dt = {}
        for eps in eps_list:
            for kdt in range(3, 9):
                sub = robustness_study(solver, (3,), kdt, (eps,),
                                       verbose=False)
                table_dt[(kdt, eps)] = sub[(3, eps)]
                print(f"[chdg] k_dt={kdt} eps=2^{int(np.log2(eps))}: "
                      f"{sub[(3, eps)]['avg_linear_per_newton']:.1f}")
        path2 = os.path.join(outdir, "robustness_kdt.csv")
        with open(path2, "w") as f:
            f.write("k_dt," + ",".join(f"eps_2^{int(np.log2(e))}"
                                       for e in eps_list) + "\n")
            for kdt in range(3, 9):
                row = [str(kdt)] + [
                    f"{table_dt[(kdt, e)]['avg_linear_per_newton']:.17g}"
                    for e in eps_list]
                f.write(",".join(row) + "\n")
    if not all(v["converged"] for v in table.values()):
        print("[chdg] FAIL: some linear solves did not converge")
        return EXIT_SOLVER
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="chdg",
        description="Mixed-DG Cahn-Hilliard solver: scenario runs, "
                    "convergence and robustness studies")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "convergence", "robustness"):
        p = sub.add_parser(name)
        p.add_argument("--case", default=None,
                       help="case name (run command)")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.sets)
        if args.case is not None:
            cfg["case"] = args.case
        if args.command == "run":
            setup, solver, extras = resolve(cfg)
        else:
            setup, solver, extras = resolve(cfg, default_case="manufactured")
    except (ConfigError, OSError) as exc:
        print(f"[chdg] error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    outdir = args.out or os.path.join("runs", args.command if
                                      args.command != "run" else setup.name)
    try:
        if args.command == "run":
            return cmd_run(setup, solver, extras, outdir)
        if args.command == "convergence":
            return cmd_convergence(setup, solver, extras, outdir)
        return cmd_robustness(setup, solver, extras, outdir)
    except (StageFailureError, StepCollapseError) as exc:
        print(f"[chdg] solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"[chdg] error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
