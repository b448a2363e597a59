"""Command-line interface.

Every pipeline stage is a subcommand producing file artifacts (CSV/JSON).
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__, axon, ffem, klreduce, pipeline, sparsegrid
from .dispersion import admittivity, complex_permittivity, conductivity, relative_permittivity
from .errors import ConfigError, NumericalError
from .volumeconductor import assemble_solve, build_mesh, contact_mean_potential

log = logging.getLogger("axonuq")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="axonuq",
                                description="Activation-threshold uncertainty studies")
    p.add_argument("--version", action="version", version=f"axonuq {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--config", help="JSON config file (defaults embedded)")
        sp.add_argument("--seed", type=int, help="override the sampling seed")
        sp.add_argument("--threads", type=int,
                        help="worker processes (env AXONUQ_THREADS as fallback)")
        sp.add_argument("--out", default=out_default, help="output directory")

    sp = sub.add_parser("dispersion", help="material-law evaluations")
    dsub = sp.add_subparsers(dest="subcommand", required=True)
    de = dsub.add_parser("eval", help="evaluate the dispersion law at frequencies")
    common(de)
    de.add_argument("--omega", required=True,
                    help="angular frequencies [rad/s], comma separated")

    sp = sub.add_parser("kl", help="reduced random-conductivity model")
    ksub = sp.add_subparsers(dest="subcommand", required=True)
    kb = ksub.add_parser("build", help="sample, eigendecompose, truncate, save")
    common(kb, out_default=".")
    ks = ksub.add_parser("sample", help="realize a conductivity curve")
    common(ks)
    ks.add_argument("--model", required=True, help="saved model JSON")
    ks.add_argument("--y", required=True, help="reduced coordinates, comma separated")

    gn = sub.add_parser("grid", help="sparse quadrature grids")
    gsub = gn.add_subparsers(dest="subcommand", required=True)
    gg = gsub.add_parser("nodes", help="emit points and weights as CSV")
    common(gg)
    gg.add_argument("--dim", type=int, required=True)
    gg.add_argument("--level", type=int, required=True)

    sp = sub.add_parser("field", help="volume-conductor solves")
    fsub = sp.add_subparsers(dest="subcommand", required=True)
    fs = fsub.add_parser("solve", help="single-frequency solve at the mean material")
    common(fs)
    fs.add_argument("--omega", type=float, required=True, help="angular frequency [rad/s]")
    fw = fsub.add_parser("sweep", help="transfer function at the mean material")
    common(fw, out_default=".")

    ax = sub.add_parser("axon", help="cable-model simulation")
    asub = ax.add_subparsers(dest="subcommand", required=True)
    asim = asub.add_parser("simulate", help="simulate one axon, dump the trace")
    common(asim)
    asim.add_argument("--amplitude", type=float, required=True, help="stimulus amplitude [A]")
    asim.add_argument("--distance", type=float, required=True, help="axon distance [mm]")

    th = sub.add_parser("threshold", help="activation threshold at the mean material")
    common(th)
    th.add_argument("--distance", type=float, required=True, help="axon distance [mm]")

    uq = sub.add_parser("uq", help="full uncertainty study")
    usub = uq.add_subparsers(dest="subcommand", required=True)
    ur = usub.add_parser("run", help="collocation study; writes result and report")
    common(ur, out_default=".")

    rp = sub.add_parser("report", help="regenerate report files from a saved result")
    rp.add_argument("--result", required=True, help="uq_result.json path")
    rp.add_argument("--out", default=".", help="output directory")
    return p


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise ConfigError(f"not a comma-separated float list: {text!r}") from exc


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _mean_solver(cfg) -> pipeline._NodeSolver:
    model = pipeline.build_kl_model(cfg)
    return pipeline._NodeSolver(cfg, model)


def _cmd_dispersion_eval(args, cfg):
    params = pipeline.mean_params(cfg)
    rows = ["omega_rad_s,eps_r,kappa_S_m,admittivity_re,admittivity_im"]
    for w in _floats(args.omega):
        f = complex_permittivity(params, w)
        adm = admittivity(params, w)
        rows.append(f"{w:.17g},{f.real:.17g},{conductivity(params, w):.17g},"
                    f"{adm.real:.17g},{adm.imag:.17g}")
    text = "\n".join(rows) + "\n"
    if args.out:
        path = os.path.join(_outdir(args), "dispersion.csv")
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        print(text, end="")
    return 0


def _cmd_kl_build(args, cfg):
    model = pipeline.build_kl_model(cfg, seed=args.seed)
    path = os.path.join(_outdir(args), "kl_model.json")
    model.save(path)
    lam = model.scale**2
    print(f"grid points: {model.grid.n}")
    print(f"rank: {model.rank}")
    print("eigenvalues:", " ".join(f"{x:.6e}" for x in lam))
    print(path)
    return 0


def _cmd_kl_sample(args, cfg):
    model = klreduce.KLModel.load(args.model)
    y = _floats(args.y)
    if y.size != model.rank:
        raise ConfigError(f"expected {model.rank} coordinates")
    curve = model.realize(y)
    rows = ["omega_rad_s,kappa_S_m"]
    rows += [f"{w:.17g},{v:.17g}" for w, v in zip(model.grid.omega, curve)]
    text = "\n".join(rows) + "\n"
    if args.out:
        path = os.path.join(_outdir(args), "kl_sample.csv")
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        print(text, end="")
    return 0


def _cmd_grid_nodes(args, cfg):
    rule = sparsegrid.smolyak(args.dim, args.level)
    head = ",".join(f"y{j + 1}" for j in range(rule.dim))
    rows = [f"{head},weight"]
    for p, w in zip(rule.points, rule.weights):
        rows.append(",".join(f"{x:.17g}" for x in p) + f",{w:.17g}")
    text = "\n".join(rows) + "\n"
    if args.out:
        path = os.path.join(_outdir(args), f"grid_d{rule.dim}_l{rule.level}.csv")
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        print(text, end="")
    return 0


def _cmd_field_solve(args, cfg):
    params = pipeline.mean_params(cfg)
    mesh = build_mesh(pipeline.electrode_geometry(cfg), cfg["mesh"]["target_elements"])
    sig = admittivity(params, args.omega)
    enc = complex(cfg["sweep"]["encapsulation_kappa_scale"] * sig.real, sig.imag)
    sol = assemble_solve(mesh, enc, sig, omega=args.omega)
    v = contact_mean_potential(mesh, sol)
    print(f"nodes: {mesh.n_nodes}  elements: {mesh.n_triangles}")
    print(f"contact potential per ampere: {v.real:.6g} {v.imag:+.6g}j V")
    if args.out:
        out = _outdir(args)
        mesh.to_csv(os.path.join(out, "mesh_nodes.csv"),
                    os.path.join(out, "mesh_triangles.csv"))
        np.savetxt(os.path.join(out, "potential.csv"),
                   np.column_stack([mesh.nodes, sol.phi.real, sol.phi.imag]),
                   delimiter=",", header="r,z,phi_re,phi_im", comments="", fmt="%.17g")
        print(out)
    return 0


def _cmd_field_sweep(args, cfg):
    solver = _mean_solver(cfg)
    tf = ffem.sweep(solver.mesh,
                    klreduce.ConductivityCurve(solver.kl_model.grid, solver.kl_model.mean),
                    solver.eps_r, solver.omega_nodes, solver.points,
                    enc_kappa_scale=solver.enc_scale)
    sig = ffem.reconstruct_time(tf, solver.spectrum)
    tf_path = os.path.join(_outdir(args), "transfer_function.csv")
    with open(tf_path, "w") as fh:
        fh.write("point,omega_rad_s,h_re,h_im\n")
        for i in range(tf.H.shape[0]):
            for j, w in enumerate(tf.omega_nodes):
                fh.write(f"{i},{w:.17g},{tf.H[i, j].real:.17g},{tf.H[i, j].imag:.17g}\n")
    sig_path = os.path.join(_outdir(args), "extracellular_potential.csv")
    t = np.arange(sig.nt) * sig.dt
    with open(sig_path, "w") as fh:
        fh.write("t_s," + ",".join(f"p{i}" for i in range(sig.values.shape[0])) + "\n")
        for j in range(sig.nt):
            fh.write(f"{t[j]:.17g}," + ",".join(f"{v:.17g}" for v in sig.values[:, j]) + "\n")
    print(tf_path)
    print(sig_path)
    return 0


def _cmd_axon_simulate(args, cfg):
    solver = _mean_solver(cfg)
    distances = [s.geometry.distance for s in solver.systems]
    target = args.distance * 1e-3
    try:
        idx = next(i for i, d in enumerate(distances) if abs(d - target) < 1e-9)
    except StopIteration:
        raise ConfigError(f"distance {args.distance} mm is not in the configured set "
                          f"{[d * 1e3 for d in distances]}")
    sig = solver.unit_response(np.zeros(solver.kl_model.rank))
    cable = solver.systems[idx]
    nc = cable.n_compartments
    unit = sig.values[idx * nc:(idx + 1) * nc]
    res = axon.simulate(cable, args.amplitude * unit,
                        solver.dt, n_periods=cfg["threshold"]["n_periods"])
    print(f"activated: {res.activated}  (distal node crossed 0 V: {res.distal_node_crossed})")
    print(f"peak inner potential: {res.trace.max():.6g} V")
    if args.out:
        path = os.path.join(_outdir(args), "axon_trace.csv")
        phi_e_out = args.amplitude * unit[-1, np.arange(res.trace.size) % sig.nt]
        phi_m_out = res.trace - phi_e_out
        with open(path, "w") as fh:
            fh.write("t_s,phi_m_out_V,phi_i_out_V\n")
            for t, pm, pi in zip(res.times, phi_m_out, res.trace):
                fh.write(f"{t:.17g},{pm:.17g},{pi:.17g}\n")
        print(path)
    return 0


def _cmd_threshold(args, cfg):
    solver = _mean_solver(cfg)
    distances = [s.geometry.distance for s in solver.systems]
    target = args.distance * 1e-3
    try:
        idx = next(i for i, d in enumerate(distances) if abs(d - target) < 1e-9)
    except StopIteration:
        raise ConfigError(f"distance {args.distance} mm is not in the configured set")
    thr = solver.node_thresholds(np.zeros(solver.kl_model.rank))
    print(f"threshold at {args.distance} mm: {thr[idx] * 1e3:.6g} mA")
    return 0


def _cmd_uq_run(args, cfg):
    threads = pipeline.resolve_threads(cfg, args.threads)
    plan = pipeline.build_plan(cfg, seed=args.seed)
    log.info("collocation: %d nodes, %d axons, %d workers",
             plan.rule.n_points, len(cfg["axons"]["distances_mm"]), threads)
    result = pipeline.run_collocation(plan, threads=threads)
    out = _outdir(args)
    result_path = os.path.join(out, "uq_result.json")
    result.save(result_path)
    written = pipeline.write_report(result, out)
    for i, d in enumerate(result.distances_m):
        print(f"axon {i + 1} ({d * 1e3:.3g} mm): mean {result.mean_a[i] * 1e3:.4g} mA, "
              f"std {result.std_a[i] * 1e3:.4g} mA")
    print(result_path)
    for path in written:
        print(path)
    return 0


def _cmd_report(args, cfg):
    result = pipeline.UQResult.load(args.result)
    for path in pipeline.write_report(result, _outdir(args)):
        print(path)
    return 0


_HANDLERS = {
    ("dispersion", "eval"): _cmd_dispersion_eval,
    ("kl", "build"): _cmd_kl_build,
    ("kl", "sample"): _cmd_kl_sample,
    ("grid", "nodes"): _cmd_grid_nodes,
    ("field", "solve"): _cmd_field_solve,
    ("field", "sweep"): _cmd_field_sweep,
    ("axon", "simulate"): _cmd_axon_simulate,
    ("threshold", None): _cmd_threshold,
    ("uq", "run"): _cmd_uq_run,
    ("report", None): _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    key = (args.command, getattr(args, "subcommand", None))
    handler = _HANDLERS[key]
    try:
        cfg = pipeline.load_config(getattr(args, "config", None))
        if getattr(args, "seed", None) is not None and "kl" in cfg:
            cfg["kl"]["seed"] = args.seed
        return handler(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
