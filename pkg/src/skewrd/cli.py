"""Command-line experiment runner.

Verbs: ``run``, ``analyze`` and ``rom-compare``. Exit codes: 0 on
success, 2 for usage or configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .diagnostics import EnergyRecorder
from .errors import DomainError, InvalidArgumentError, NumericalFailureError
from .integrator import run_simulation
from .kinetics import (ThreeComponentModel, TwoComponentModel, as_system, check_skew_gradient,
                       check_turing, classify_stability, count_homogeneous_roots, find_steady_states,
                       turing_threshold)
from .output import write_config, write_metadata, write_solution
from .presets import (PRESETS, build_grid, build_initial, build_mesh, build_model, build_space,
                      merge_config, preset_config)
from .rom import rom_compare, write_report_csv, write_snapshots

log = logging.getLogger("skewrd")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    pass


def _parser():
    p = argparse.ArgumentParser(prog="skewrd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("run", "time-integrate a configuration"),
                        ("analyze", "kinetics analysis of a configuration"),
                        ("rom-compare", "full model against POD and POD-DEIM")):
        q = sub.add_parser(verb, help=help_)
        q.add_argument("--preset", choices=sorted(PRESETS))
        q.add_argument("--config", type=Path, help="YAML configuration file")
        q.add_argument("--seed", type=int)
        q.add_argument("--out", type=Path, help="output directory")
        q.add_argument("--degree", type=int)
        q.add_argument("--sigma", type=float)
        q.add_argument("--dt", type=float)
        q.add_argument("--dx", type=float)
        q.add_argument("--T", dest="final_time", type=float, help="final time")
        q.add_argument("--pod-k", type=int)
        q.add_argument("--deim-m", type=int)
        q.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> dict:
    """Preset, then the YAML file, then the command-line flags."""
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = yaml.safe_load(args.config.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a mapping")
    name = args.preset or file_cfg.get("preset")
    if name is None and args.config is None:
        raise UsageError("give --preset or --config")
    cfg = merge_config(preset_config(name), file_cfg)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        cfg["seed"] = args.seed
    if args.degree is not None:
        cfg.setdefault("space", {})["degree"] = args.degree
    if args.sigma is not None:
        cfg.setdefault("space", {})["sigma"] = args.sigma
    if args.dt is not None:
        cfg.setdefault("time", {})["dt"] = args.dt
    if args.final_time is not None:
        cfg.setdefault("time", {})["T"] = args.final_time
        cfg["time"].pop("steps", None)
    if args.dx is not None:
        mesh = cfg.setdefault("mesh", {})
        if mesh.get("kind") == "square":
            mesh["n"] = int(round((mesh["x"][1] - mesh["x"][0]) / args.dx))
        else:
            mesh["dx"] = args.dx
    if args.pod_k is not None:
        cfg.setdefault("rom", {})["k"] = args.pod_k
    if args.deim_m is not None:
        cfg.setdefault("rom", {})["m"] = args.deim_m
    return cfg


def _out_dir(args, cfg, verb):
    out = args.out or Path("out") / f"{cfg.get('preset', 'custom')}-{verb}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_warnings(model):
    warnings = []
    ok, res = check_skew_gradient(model, tol=1e-10)
    if not ok:
        msg = f"parameters violate the skew-gradient condition (residual {res:.3e})"
        if isinstance(model, ThreeComponentModel):
            msg += "; recorded energy has no skew-gradient meaning"
        warnings.append(msg)
    return warnings


def cmd_run(args, cfg) -> int:
    model = build_model(cfg)
    sysm = as_system(model)
    space = build_space(cfg)
    grid = build_grid(cfg)
    state0 = build_initial(cfg, space, sysm.n_components)
    out = _out_dir(args, cfg, "run")
    every = cfg.get("output", {}).get("every") or max(1, grid.steps // 10)
    names = sysm.names
    write_config(out / "config.yaml", cfg)

    energy = EnergyRecorder(space, sysm)
    written = []

    def snapshot_writer(step, state):
        if step % every == 0 or step == grid.steps:
            written.append(write_solution(out, space, state, step, names).name)

    warnings = _model_warnings(model)
    for w in warnings:
        log.warning(w)
    t0 = time.perf_counter()
    traj = run_simulation(space, sysm, grid, state0, [energy, snapshot_writer])
    wall = time.perf_counter() - t0
    energy.trace.to_csv(out / "energy.csv")
    with open(out / "newton.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "iterations"])
        for n, it in enumerate(traj.newton_iterations, start=1):
            w.writerow([n, it])
    iters = np.asarray(traj.newton_iterations)
    meta = dict(
        verb="run", preset=cfg.get("preset"), seed=cfg.get("seed"), version=__version__,
        python=platform.python_version(), n_elements=space.n_elements, n_dofs=space.n_dofs,
        degree=space.degree, sigma=space.sigma, dt=grid.dt, steps=grid.steps, T=grid.T,
        model=dict(type=type(model).__name__, **{k: v for k, v in vars(model).items() if k != "note"}),
        warnings=warnings, timings=dict(wall_seconds=wall), files=written,
        newton=dict(max=int(iters.max()) if iters.size else 0, mean=float(iters.mean()) if iters.size else 0.0),
        final_energy=energy.trace.energies[-1],
    )
    write_metadata(out / "metadata.json", meta)
    print(f"{grid.steps} steps, N={space.n_dofs}, E(T)={energy.trace.energies[-1]:.10g}, "
          f"wall {wall:.2f}s -> {out}")
    return EXIT_OK


def analyze_model(model) -> list:
    """Rows ``(check, value)`` of every applicable kinetics analysis."""
    rows = []
    ok, res = check_skew_gradient(model)
    rows.append(("skew-gradient", "satisfied" if ok else "violated"))
    rows.append(("skew-gradient residual", f"{res:.6g}"))
    rows.append(("homogeneous steady states", str(count_homogeneous_roots(model))))
    if isinstance(model, TwoComponentModel) and model.variant == "A":
        rows.append(("stability class", classify_stability(model)))
    for i, st in enumerate(find_steady_states(model)):
        vals = ", ".join(f"{v:.6f}" for v in st.values)
        rows.append((f"steady state {i}", f"({vals}) {st.stability}"))
        if isinstance(model, TwoComponentModel):
            rep = check_turing(model, st)
            rows.append((f"steady state {i} f1'", f"{rep.f1u:.6f}"))
            rows.append((f"steady state {i} turing conditions", " ".join("T" if h else "F" for h in rep.holds)))
            rows.append((f"steady state {i} turing unstable", str(rep.turing_unstable)))
            try:
                b3, b4 = turing_threshold(model, st)
            except DomainError as exc:
                rows.append((f"steady state {i} d2 thresholds", f"n/a ({exc})"))
            else:
                rows.append((f"steady state {i} d2 thresholds", f"{b3:.6f} {b4:.6f}"))
    return rows


def cmd_analyze(args, cfg) -> int:
    model = build_model(cfg)
    rows = analyze_model(model)
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    if args.out is not None:
        out = _out_dir(args, cfg, "analyze")
        write_config(out / "config.yaml", cfg)
        with open(out / "analysis.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "value"])
            w.writerows(rows)
    return EXIT_OK


def cmd_rom_compare(args, cfg) -> int:
    rom = cfg.get("rom", {})
    model = build_model(cfg)
    grid = build_grid(cfg)
    out = _out_dir(args, cfg, "rom-compare")
    write_config(out / "config.yaml", cfg)
    meshes = rom.get("meshes") or [cfg["mesh"].get("n")]
    reports = []
    t0 = time.perf_counter()
    for i, n in enumerate(meshes, start=1):
        mcfg = merge_config(cfg, {"mesh": {"n": n}}) if n is not None else cfg
        space = build_space(mcfg, build_mesh(mcfg))
        init = build_initial(mcfg, space, as_system(model).n_components)
        rep, det = rom_compare(space, model, grid, init, int(rom.get("k", 10)), int(rom.get("m", 50)),
                               int(rom.get("stride", 1)), int(rom.get("repeats", 3)), label=str(i),
                               nonlinear_snapshots=rom.get("nonlinear_snapshots", "full"))
        reports.append(rep)
        for c, name in enumerate(as_system(model).names):
            write_snapshots(out / f"snapshots_mesh{i}_{name}.bin", det["snapshots"].states[c], name)
        write_snapshots(out / f"snapshots_mesh{i}_F.bin", det["snapshots"].nonlinear, "F")
        print(f"mesh {i}: {rep.n_elements} triangles, N={rep.n_dofs}, full {rep.t_full:.2f}s, "
              f"POD {rep.t_pod:.2f}s, POD-DEIM {rep.t_deim:.2f}s, S_POD {rep.s_pod:.2f}, "
              f"S_DEIM {rep.s_deim:.2f}, errors POD {rep.err_pod}, POD-DEIM {rep.err_deim}")
    write_report_csv(out / "rom_report.csv", reports)
    write_metadata(out / "metadata.json", dict(
        verb="rom-compare", preset=cfg.get("preset"), seed=cfg.get("seed"), version=__version__,
        timings=dict(wall_seconds=time.perf_counter() - t0),
        reports=[dict(zip(r.header(), r.row())) for r in reports]))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "analyze": cmd_analyze, "rom-compare": cmd_rom_compare}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.verb](args, cfg)
    except (UsageError, InvalidArgumentError, DomainError, KeyError, TypeError) as exc:
        print(f"skewrd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailureError as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"skewrd: numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
