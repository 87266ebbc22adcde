"""Command-line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 numerical solver failure,
3 infeasible synthesis (the `synthesize` command only).
"""
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    default_config,
    fig3_style_config,
    load_config,
    resolve_threads,
    write_default_config,
)
from .data import build_data_matrices, check_generalized_slater, noise_model_from_bound
from .errors import DataValidationError, ScenarioDdcError, SolverFailureError
from .experiments import (
    aggregate_records,
    read_records_csv,
    run_heatmap_M_N,
    run_heatmap_sigma_N,
    run_uncertainty_sets_1d,
    write_aggregate_csv,
)
from .fleet import default_benchmark_fleet, generate_dataset
from .io import (
    file_sha256,
    load_controller,
    load_dataset,
    report_to_json,
    save_controller,
    save_dataset,
)
from .scenario import achievable_alpha, decision_dimension, required_scenarios_raw
from .synthesis import (
    Infeasible,
    NumericalFailure,
    SynthesisCertificate,
    assemble_scenario_lmi,
    solve_feasibility,
)
from .validation import estimate_alpha

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER_FAILURE = 2
EXIT_INFEASIBLE = 3


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _common_flags(parser):
    parser.add_argument("--config", type=Path, help="TOML experiment configuration")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", type=Path, help="output file or directory")
    parser.add_argument("--threads", type=int, help="worker count (env SCENARIO_DDC_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenario-ddc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"scenario-ddc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_bound = sub.add_parser("bound", help="scenario sample-size bound")
    p_bound.add_argument("--alpha", type=float, required=True)
    p_bound.add_argument("--epsilon", type=float, required=True)
    p_bound.add_argument("--nx", type=int, required=True)
    p_bound.add_argument("--nu", type=int, required=True)
    p_bound.add_argument("--invert-for-n", type=int, metavar="N",
                         help="also report the violation level achievable with N samples")

    p_gen = sub.add_parser("generate", help="sample a fleet and record rollouts")
    _common_flags(p_gen)
    p_gen.add_argument("--sigma2", type=float, help="override fleet variance scale")
    p_gen.add_argument("--n", type=int, help="number of systems/trajectories")
    p_gen.add_argument("--m", type=int, help="rollout horizon M")
    p_gen.add_argument("--wbar", type=float, help="per-step disturbance energy bound")

    p_syn = sub.add_parser("synthesize", help="solve the stacked feasibility program")
    _common_flags(p_syn)
    p_syn.add_argument("--data", type=Path, required=True, help="dataset JSON")
    p_syn.add_argument("--wbar", type=float, required=True,
                       help="disturbance energy bound assumed for the data")
    p_syn.add_argument("--delta", type=float, help="positive-definiteness margin")
    p_syn.add_argument("--objective", choices=["feasibility", "max-margin"])
    p_syn.add_argument(
        "--slater", choices=["discard", "keep", "fail"], default="discard",
        help="policy for rollouts failing the regularity precheck",
    )

    p_val = sub.add_parser("validate", help="estimate violation level on fresh draws")
    _common_flags(p_val)
    p_val.add_argument("--controller", type=Path, required=True, help="controller JSON")
    p_val.add_argument("--sigma2", type=float, required=True)
    p_val.add_argument("--n-test", type=int, default=1000)

    p_exp = sub.add_parser("experiment", help="run a sweep preset")
    p_exp.add_argument(
        "kind",
        choices=["heatmap-sigma-n", "heatmap-m-n", "uncertainty-sets-1d"],
    )
    _common_flags(p_exp)
    p_exp.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_exp.add_argument("--timings", action="store_true",
                       help="record wall-clock solve times in the raw CSV "
                            "(breaks byte-reproducibility of reruns)")

    p_agg = sub.add_parser("aggregate", help="average raw records per cell")
    p_agg.add_argument("--raw", type=Path, required=True, help="raw-record CSV")
    p_agg.add_argument("--out", type=Path, required=True, help="aggregated CSV path")

    p_init = sub.add_parser("init-config", help="write a config template")
    p_init.add_argument("--out", type=Path, default=Path("scenario-ddc.toml"))
    return parser


def _load_cfg(args, fallback=None):
    cfg = load_config(args.config) if args.config else (fallback or default_config())
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, master_seed=args.seed)
    return cfg


def _cmd_bound(args) -> int:
    n = decision_dimension(args.nx, args.nu)
    raw = required_scenarios_raw(args.alpha, args.epsilon, args.nx, args.nu)
    N = int(np.ceil(raw))
    print(json.dumps({"n": n, "raw": raw, "N": N}))
    if raw != N:
        print(
            f"note: raw bound {raw:.3f} rounded up to N = {N}; truncating "
            f"instead would give {int(raw)}, which does not satisfy the bound."
        )
    if args.invert_for_n:
        alpha = achievable_alpha(args.invert_for_n, args.epsilon, args.nx, args.nu)
        qualifier = " (vacuous: > 1)" if alpha > 1 else ""
        print(f"achievable alpha with N={args.invert_for_n}: {alpha:.6g}{qualifier}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    fleet = cfg.fleet
    sigma2 = args.sigma2 if args.sigma2 is not None else fleet.sigma2
    N = args.n if args.n is not None else fleet.N
    M = args.m if args.m is not None else fleet.M
    wbar = args.wbar if args.wbar is not None else fleet.wbar
    out = args.out or Path("dataset.json")
    dist = default_benchmark_fleet(sigma2, truncation=fleet.truncation)
    rollout_cfg = replace(fleet, wbar=wbar).make_rollout_config(M=M)
    trajectories = generate_dataset(dist, N, rollout_cfg, cfg.master_seed)
    save_dataset(out, trajectories)
    print(json.dumps({
        "dataset": str(out), "n_trajectories": N, "M": M,
        "sigma2": sigma2, "wbar": wbar, "master_seed": cfg.master_seed,
        "sha256": file_sha256(out),
    }))
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    cfg = _load_cfg(args)
    trajectories, nx, nu, M = load_dataset(args.data)
    qmi = noise_model_from_bound(args.wbar, M, nx)
    dms, kept_seeds, n_flagged = [], [], 0
    for traj in trajectories:
        dm = build_data_matrices(traj)
        report = check_generalized_slater(dm, qmi)
        if not report.satisfied:
            n_flagged += 1
            if args.slater == "fail":
                print(
                    f"error: trajectory {traj.system_id!r} fails the regularity "
                    f"precheck (min eigenvalue {report.min_eigenvalue:.3e})",
                    file=sys.stderr,
                )
                return EXIT_VALIDATION
            if args.slater == "discard":
                continue
        dms.append(dm)
        kept_seeds.append(traj.seed)
    if n_flagged:
        print(
            f"warning: {n_flagged}/{len(trajectories)} trajectories failed the "
            f"regularity precheck (policy: {args.slater})",
            file=sys.stderr,
        )
    if not dms:
        print("error: no usable trajectories after the regularity precheck",
              file=sys.stderr)
        return EXIT_VALIDATION
    delta = args.delta if args.delta is not None else cfg.solver.delta
    objective = args.objective or cfg.solver.objective
    problem = assemble_scenario_lmi(dms, [qmi] * len(dms), delta=delta)
    outcome = solve_feasibility(
        problem, cfg.solver.backends, objective=objective,
        feasibility_tol=cfg.solver.feasibility_tol,
    )
    if isinstance(outcome, SynthesisCertificate):
        out = args.out or Path("controller.json")
        save_controller(
            out, outcome,
            dataset_hash=file_sha256(args.data),
            seeds=[s for s in kept_seeds if s is not None],
        )
        print(json.dumps({
            "status": "ok", "controller": str(out),
            "n_scenarios": problem.n_scenarios,
            "K": outcome.K.tolist(),
            "min_margin": min(outcome.per_scenario_margins),
            "backend": outcome.info.get("backend"),
        }))
        return EXIT_OK
    if isinstance(outcome, Infeasible):
        print(json.dumps({"status": "infeasible", "attempts": list(outcome.attempts)}))
        return EXIT_INFEASIBLE
    assert isinstance(outcome, NumericalFailure)
    print(json.dumps({
        "status": "solver-failure", "attempts": list(outcome.attempts),
        "message": outcome.message,
    }))
    return EXIT_SOLVER_FAILURE


def _cmd_validate(args) -> int:
    cfg = _load_cfg(args)
    doc = load_controller(args.controller)
    dist = default_benchmark_fleet(args.sigma2, truncation=cfg.fleet.truncation)
    if (dist.nx, dist.nu) != (doc["nx"], doc["nu"]):
        raise DataValidationError(
            f"controller is {doc['nu']}x{doc['nx']} but the benchmark fleet "
            f"needs {dist.nu}x{dist.nx}"
        )
    report = estimate_alpha(
        doc["K"], doc["P"], dist, args.n_test, cfg.master_seed
    )
    text = report_to_json(report)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    fallback = fig3_style_config() if args.kind == "heatmap-m-n" else default_config()
    cfg = _load_cfg(args, fallback=fallback)
    if args.no_figures:
        cfg = replace(cfg, output=replace(cfg.output, figures=False))
    if args.timings:
        cfg = replace(cfg, output=replace(cfg.output, timings=True))
    out_dir = args.out or Path(cfg.output.directory)
    threads = resolve_threads(args.threads)
    if args.kind == "heatmap-sigma-n":
        records = run_heatmap_sigma_N(cfg, out_dir, threads=threads)
    elif args.kind == "heatmap-m-n":
        records = run_heatmap_M_N(cfg, out_dir, threads=threads)
    else:
        run_uncertainty_sets_1d(cfg, out_dir)
        print(json.dumps({"status": "ok", "out": str(out_dir)}))
        return EXIT_OK
    n_fail = sum(1 for r in records if r.status == "solver-failure")
    print(json.dumps({
        "status": "ok", "out": str(out_dir), "cells": len(records),
        "feasible": sum(1 for r in records if r.feasible),
        "solver_failures": n_fail,
    }))
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    records = read_records_csv(args.raw)
    if not records:
        raise DataValidationError(f"{args.raw}: no records found")
    rows = aggregate_records(records)
    write_aggregate_csv(args.out, rows, "aggregate")
    print(json.dumps({"status": "ok", "cells": len(rows), "out": str(args.out)}))
    return EXIT_OK


def _cmd_init_config(args) -> int:
    write_default_config(args.out)
    print(json.dumps({"status": "ok", "config": str(args.out)}))
    return EXIT_OK


_COMMANDS = {
    "bound": _cmd_bound,
    "generate": _cmd_generate,
    "synthesize": _cmd_synthesize,
    "validate": _cmd_validate,
    "experiment": _cmd_experiment,
    "aggregate": _cmd_aggregate,
    "init-config": _cmd_init_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except DataValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    except ScenarioDdcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
