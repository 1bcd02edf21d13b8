"""Command-line entry point.

Subcommands::

    stefanch run --config run.ini [--out DIR]
    stefanch verify [--only NAME[,NAME]] [--out DIR] [--threads K]
    stefanch sweep-eps | sweep-lambda | depend | mms [--config run.ini] [--out DIR] [--threads K]

Exit codes: 0 success, 1 failed verification, 2 solver failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, harness
from .config import RunConfig, load
from .errors import (ConfigError, InteriorityError, NewtonDivergence, SolverFailure,
                     StefanCHError, StepRejected)
from .forms import DiscreteSpace
from .geometry import MeshPair, PairedField
from .stepper import RECORD_FIELDS, integrate

EXIT_OK, EXIT_FAIL, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3

log = logging.getLogger("stefanch")


# ---------------------------------------------------------------------------
# building blocks from a RunConfig


def build_space(cfg: RunConfig) -> DiscreteSpace:
    return harness.unit_square_space(cfg.N)


def build_initial(cfg: RunConfig, mesh: MeshPair) -> PairedField:
    if cfg.initial == "constant":
        return data.constant_field(mesh, cfg.m0)
    if cfg.initial == "mms":
        return data.Manufactured(cfg.mms_expr, cfg.graph()).initial(mesh)
    return data.cosine_field(mesh, cfg.m0, cfg.amplitude)


def build_source(cfg: RunConfig, mesh: MeshPair):
    """Source preset; every preset has zero combined mean."""
    if cfg.source == "zero":
        return data.zero_source(mesh)
    if cfg.source == "mms":
        return data.Manufactured(cfg.mms_expr, cfg.graph()).source(mesh)
    return data.bump_source(mesh, amplitude=cfg.source_amplitude)


def dump_fields(out: Path, step: int, space: DiscreteSpace, u: np.ndarray) -> None:
    """``x y value`` for the bulk and ``s value`` for the boundary."""
    mesh = space.mesh
    bulk = np.column_stack([mesh.nodes, u])
    bnd = np.column_stack([mesh.arc_length, u[mesh.trace]])
    np.savetxt(out / f"u_bulk_{step:06d}.txt", bulk, fmt="%.17g")
    np.savetxt(out / f"u_boundary_{step:06d}.txt", bnd, fmt="%.17g")


# ---------------------------------------------------------------------------
# commands


def cmd_run(cfg: RunConfig, out: Path) -> int:
    space = build_space(cfg)
    try:
        scfg = cfg.solve_config()
        u0 = build_initial(cfg, space.mesh)
        source = build_source(cfg, space.mesh)
        result = integrate(space, scfg, u0, source)
    except InteriorityError as exc:
        print(f"configuration error: data.m0: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonDivergence, StepRejected, SolverFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    table = harness.Table(RECORD_FIELDS, [tuple(r[k] for k in RECORD_FIELDS) for r in result.records])
    harness.write_csv(out / "trajectory.csv", table)
    if cfg.stride > 0:
        fdir = out / "fields"
        fdir.mkdir(exist_ok=True)
        for k in range(0, len(result.u), cfg.stride):
            dump_fields(fdir, k, space, result.u[k])
    if cfg.graph_kind == "stefan":
        harness.write_csv(out / "mushy.csv", harness.mushy_trajectory(space, result))
    (out / "config.ini").write_text(cfg.to_text())
    print(f"wrote {out / 'trajectory.csv'} ({len(result.records)} records)")
    return EXIT_OK


def _report(experiments: list[harness.Experiment], out: Path) -> int:
    for e in experiments:
        e.write(out)
    harness.write_summary(out / "summary.txt", experiments)
    for e in experiments:
        print(f"{e.name}: {'PASS' if e.passed else 'FAIL'}")
        for n in e.notes:
            print(f"  {n}")
    failed = [e.name for e in experiments if not e.passed]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(out: Path, only: list[str] | None, threads: int) -> int:
    try:
        experiments = harness.run_experiments(only, threads=threads)
    except KeyError as exc:
        print(f"configuration error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    return _report(experiments, out)


def _configured_experiment(name: str, cfg: RunConfig, threads: int) -> harness.Experiment:
    space = build_space(cfg)
    u0 = build_initial(cfg, space.mesh)
    g = build_source(cfg, space.mesh)
    graph, pert = cfg.graph(), cfg.perturbation_spec()
    if name == "sweep-lambda":
        tab = harness.sweep_lambda(space, u0, g, epsilon=cfg.epsilon, dt=cfg.dt, T=cfg.T,
                                   graph=graph, perturbation=pert, threads=threads)
        ok = tab.monotone() and tab.slope() >= 0.8
        return harness.Experiment("lambda", ok, {"convergence": tab.table()},
                                  [f"slope {tab.slope():.4f}"])
    if name == "sweep-eps":
        tab = harness.sweep_epsilon(space, u0, g, dt=cfg.dt, T=cfg.T, graph=graph,
                                    perturbation=pert, threads=threads)
        return harness.Experiment("eps", tab.monotone(), {"convergence": tab.table()},
                                  [f"slope {tab.slope():.4f}"])
    if name == "depend":
        mode = data.zero_mean_mode(space.mesh)
        rows, ok = [], True
        for a in harness.DEPEND_AMPLITUDES:
            rep = harness.continuous_dependence(space, u0, u0 + a * mode, g, g, dt=cfg.dt,
                                                T=cfg.T, graph=graph, threads=threads)
            ok &= rep.passed
            rows.append(("u0", a, float(np.max(rep.lhs)), rep.rhs, rep.max_ratio, rep.violations,
                         rep.xi_lhs, rep.xi_rhs, rep.C, rep.c_p, rep.passed))
        header = ("perturbed", "amplitude", "max_lhs", "rhs", "max_ratio", "violations",
                  "xi_lhs", "xi_rhs", "C", "c_p", "verdict")
        return harness.Experiment("depend", ok, {"inequalities": harness.Table(header, rows)})
    rep = harness.mms_orders(graph=graph, threads=threads)
    return harness.Experiment("mms", rep.passed, {"spatial": rep.spatial, "temporal": rep.temporal},
                              [f"spatial slope {rep.spatial_slope:.4f}",
                               f"temporal slope {rep.temporal_slope:.4f}"])


_BUILTIN = {"sweep-eps": "eps", "sweep-lambda": "lambda", "depend": "depend", "mms": "mms"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stefanch", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "verify", "sweep-eps", "sweep-lambda", "depend", "mms"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="configuration file")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("--threads", type=int, default=1, help="concurrent runs in sweeps")
        if name == "verify":
            s.add_argument("--only", help="comma-separated experiment names "
                                          f"({', '.join(harness.EXPERIMENTS)})")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = max(1, args.threads)
    try:
        cfg = load(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.out if args.config else f"{args.command}_out")
    if args.command == "run":
        return cmd_run(cfg, out)
    if args.command == "verify":
        only = [s.strip() for s in args.only.split(",") if s.strip()] if args.only else None
        return cmd_verify(out, only, threads)
    try:
        if args.config is None:
            experiments = harness.run_experiments([_BUILTIN[args.command]], threads=threads)
        else:
            experiments = [_configured_experiment(args.command, cfg, threads)]
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StefanCHError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return _report(experiments, out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
