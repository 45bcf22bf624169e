"""Command line interface: ``ldpwave <command> <config> [--seed] [--out] [--eps-list]``.

Exit codes: 0 success, 2 inconclusive verdicts present, 1 error.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from .action import quasipotential, quasipotential_matrix
from .common import print_status
from .dynamics import find_equilibria, heteroclinic_scan
from .fwgraph import QuasipotentialMatrix, rate_function_table
from .harness import (
    ExperimentConfig,
    LdpReport,
    emit,
    ldp_verify,
    stochastic_stability_check,
    transition_vs_vtilde,
)
from .spectral import State
from .stochastic import simulate

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2


def _write_json(data, path: pathlib.Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(data, f, indent=2)
            f.write("\n")
    except OSError as e:
        raise OSError(f"Could not write {path}: {e}") from e


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.eps_list:
        cfg = cfg.with_eps(args.eps_list)
    return cfg


def _out(args, cfg: ExperimentConfig = None) -> pathlib.Path:
    if args.out is not None:
        return pathlib.Path(args.out)
    return pathlib.Path(cfg.output if cfg is not None else "output")


def cmd_equilibria(args) -> int:
    cfg = _load(args)
    eq = find_equilibria(cfg.model, seeds=cfg.equilibrium_seeds)
    for i, e in enumerate(eq):
        print_status(
            f"{i}: {e.label}, residual {e.residual:.2e}, a_1 = {e.state.position[0]:+.6f}"
            + (" (degenerate)" if e.degenerate else "")
        )
    _write_json(eq.to_dict(), _out(args, cfg) / "equilibria.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    eps = args.eps if args.eps is not None else cfg.eps_schedule[0]
    T = args.T if args.T is not None else cfg.sampling.t_total
    traj = simulate(State.zeros(cfg.model.n_modes), eps, T, cfg.sampling.dt, cfg.seed, cfg.model, args.sample_every)
    path = _out(args, cfg) / "trajectory.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    traj.to_frame().to_csv(path, index=False, float_format="%.12g")
    print_status(f"Wrote {len(traj)} states to {path}.")
    return EXIT_OK


def cmd_map(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    eq = find_equilibria(cfg.model, seeds=cfg.equilibrium_seeds)
    _write_json(eq.to_dict(), out / "equilibria.json")
    connections = heteroclinic_scan(eq, cfg.model)
    _write_json([c.to_dict() for c in connections], out / "connections.json")
    V, _ = quasipotential_matrix(cfg.model, eq, cfg.action, verbose=args.verbose)
    V.to_file(out / "quasipotentials.json")
    table = rate_function_table(V, stable=eq.stable_indices)
    table.to_frame().to_csv(out / "rate_function.csv", index=False, float_format="%.12g")
    print_status(f"Mapped {len(eq)} equilibria and {len(connections)} connections into {out}.")
    return EXIT_OK


def cmd_quasipotential(args) -> int:
    cfg = _load(args)
    eq = find_equilibria(cfg.model, seeds=cfg.equilibrium_seeds)
    for name, idx in (("source", args.source), ("target", args.target)):
        if not 0 <= idx < len(eq):
            raise ValueError(f"'{name}' must be in 0..{len(eq) - 1}; got {idx}.")
    result = quasipotential(eq[args.source].state, eq[args.target].state, cfg.model, cfg.action, args.verbose)
    out = _out(args, cfg)
    _write_json(result.to_dict(), out / f"quasipotential_{args.source}_{args.target}.json")
    result.path.to_frame().to_csv(out / f"control_{args.source}_{args.target}.csv", index=False)
    print_status(
        f"V({args.source}, {args.target}) = {result.value:.6g}"
        f" (eta = {result.eta:g}, feasible: {result.feasible})."
    )
    return EXIT_OK if result.feasible else EXIT_INCONCLUSIVE


def cmd_wgraph(args) -> int:
    V = QuasipotentialMatrix.from_file(args.config)
    table = rate_function_table(V, stable=args.stable)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    table.to_frame().to_csv(out / "wgraph.csv", index=False, float_format="%.12g")
    _write_json(table.to_dict(), out / "wgraph.json")
    print_status(f"W = {table.W.tolist()}.")
    return EXIT_OK


def _finish(reports: Sequence[LdpReport], out: pathlib.Path) -> int:
    for report in reports:
        for path in emit(report, out):
            print_status(f"Wrote {path}.")
        print_status(f"{report.kind}: {report.verdict}.")
    return EXIT_INCONCLUSIVE if any(r.inconclusive for r in reports) else EXIT_OK


def cmd_ldp_verify(args) -> int:
    cfg = _load(args)
    eq = find_equilibria(cfg.model, seeds=cfg.equilibrium_seeds)
    reports = [
        ldp_verify(cfg, eq=eq, verbose=args.verbose),
        stochastic_stability_check(cfg, eq=eq, verbose=args.verbose),
    ]
    return _finish(reports, _out(args, cfg))


def cmd_chain(args) -> int:
    cfg = _load(args)
    eq = find_equilibria(cfg.model, seeds=cfg.equilibrium_seeds)
    pairs = args.pairs
    if not pairs:
        stable = eq.stable_indices
        pairs = [(i, j) for i in stable for j in stable if i != j]
    report = transition_vs_vtilde(cfg, pairs, eq=eq, verbose=args.verbose)
    return _finish([report], _out(args, cfg))


def _pair(text: str):
    try:
        i, j = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Pairs are given as 'i,j'; got '{text}'.")
    return i, j


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ldpwave",
        description="Large deviations of the damped stochastic nonlinear wave equation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help, config_help="Experiment configuration (yaml)."):
        s = sub.add_parser(name, help=help)
        s.add_argument("config", type=pathlib.Path, help=config_help)
        s.add_argument("--seed", type=int, default=None, help="Override the configured seed.")
        s.add_argument("--out", type=pathlib.Path, default=None, help="Output directory.")
        s.add_argument("--eps-list", type=float, nargs="+", default=None, help="Override the eps schedule.")
        s.add_argument("--verbose", "-v", action="store_true", help="Show progress.")
        s.set_defaults(func=func)
        return s

    add("equilibria", cmd_equilibria, "Find and classify the equilibria.")
    s = add("simulate", cmd_simulate, "Simulate one path from the origin.")
    s.add_argument("--eps", type=float, default=None, help="Noise intensity (default: first of schedule).")
    s.add_argument("--T", type=float, default=None, help="Horizon (default: sampling.t_total).")
    s.add_argument("--sample-every", type=int, default=10)
    add("map", cmd_map, "Equilibria, connections, quasipotentials and rate function.")
    s = add("quasipotential", cmd_quasipotential, "Quasipotential between two equilibria.")
    s.add_argument("--source", type=int, required=True)
    s.add_argument("--target", type=int, required=True)
    s = add("wgraph", cmd_wgraph, "W-graph minima and rate function of a matrix.", "Quasipotential matrix (json).")
    s.add_argument("--stable", type=int, nargs="*", default=None, help="Indices of the stable equilibria.")
    add("ldp-verify", cmd_ldp_verify, "Monte Carlo check of the stationary-measure estimates.")
    s = add("chain", cmd_chain, "Boundary-chain transitions against V~.")
    s.add_argument("--pairs", type=_pair, nargs="*", default=None, help="Pairs 'i,j' (default: stable pairs).")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        print_status(f"Error: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
