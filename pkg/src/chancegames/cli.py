"""Command-line front end: solve scenarios, run Monte Carlo suites, export.

Exit codes are a stable scripting contract: 0 success/converged, 2 usage
errors, 3 solver non-convergence, 4 internal numerical failure. The output
root defaults to ``$CHANCEGAMES_OUTPUT_ROOT`` (or ``./runs``); every run
writes a manifest sufficient to reproduce it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, artifacts, belief, plots
from .errors import ChanceGamesError, InvalidInputError, NumericalError, ScenarioError
from .montecarlo import run_trials
from .scenarios import BUILTIN_NAMES, builtin_scenario, load_scenario
from .solver import (
    MODE_AUGMENTED_LAGRANGIAN,
    MODE_FIXED_PENALTY,
    Solution,
    convergence_report,
    outer_solve,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERICAL = 4


def _resolve_scenario(ref: str):
    if ref in BUILTIN_NAMES:
        config = builtin_scenario(ref)
        return config.to_game_spec(), config.solver_config(), config
    if Path(ref).exists():
        return load_scenario(ref)
    raise ScenarioError(
        f"unknown scenario {ref!r}: not a builtin ({', '.join(BUILTIN_NAMES)}) "
        "and no such file"
    )


def _output_dir(args, default_name: str) -> Path:
    if args.out is not None:
        out = Path(args.out)
    else:
        root = Path(os.environ.get("CHANCEGAMES_OUTPUT_ROOT", "runs"))
        out = root / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_mode(solver_config, args):
    overrides = {}
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if getattr(args, "weight", None) is not None:
        overrides["fixed_penalty_weight"] = args.weight
    return (replace(solver_config, **overrides), overrides) if overrides else (solver_config, {})


def cmd_solve(args) -> int:
    start = time.perf_counter()
    spec, solver_config, scenario_config = _resolve_scenario(args.scenario)
    solver_config, overrides = _apply_mode(solver_config, args)
    out = _output_dir(args, f"{scenario_config.name}_solve")

    solution = outer_solve(spec, config=solver_config)

    traj_path = out / "trajectory.json"
    diag_path = out / "diagnostics.json"
    plot_path = out / "trajectory.svg"
    artifacts.save_trajectory(solution, traj_path)
    diag_path.write_text(json.dumps(convergence_report(solution), indent=1, sort_keys=True))
    plots.plot_trajectory(
        solution.trajectory.means, solution.trajectory.covs, scenario_config, plot_path
    )
    artifacts.write_manifest(
        out / "manifest.json",
        command=["solve", args.scenario],
        scenario=args.scenario,
        overrides=overrides,
        mode=solver_config.mode,
        seeds=None,
        version=__version__,
        wall_time_s=time.perf_counter() - start,
        outputs=[str(traj_path), str(diag_path), str(plot_path)],
    )
    status = "converged" if solution.converged else "NOT converged"
    print(
        f"{scenario_config.name}: {status}, max surrogate violation "
        f"{solution.final_violation:.3e} after {solution.diagnostics['outer_iterations']} "
        f"outer iteration(s); artifacts in {out}"
    )
    return EXIT_OK if solution.converged else EXIT_NOT_CONVERGED


def _solution_from_artifacts(path: Path, spec) -> Solution:
    doc = artifacts.load_trajectory(path)
    if doc["gains"] is None or doc["feedforwards"] is None:
        raise InvalidInputError(f"{path} carries no policies; re-run solve")
    from .lqgame import AffineFeedbackPolicy

    means = doc["means"]
    controls = doc["controls"]
    schedule = belief.precompute_covariances(np.asarray(means), np.asarray(controls), spec)
    trajectory = belief.BeliefTrajectory(
        means=np.asarray(means), covs=schedule.covs,
        controls=np.asarray(controls), schedule=schedule,
    )
    policies = tuple(
        AffineFeedbackPolicy(np.asarray(g), np.asarray(f))
        for g, f in zip(doc["gains"], doc["feedforwards"])
    )
    return Solution(
        trajectory=trajectory, policies=policies, multipliers=None,
        diagnostics=doc["diagnostics"] or {"converged": True, "final_violation": 0.0},
    )


def cmd_montecarlo(args) -> int:
    start = time.perf_counter()
    spec, solver_config, scenario_config = _resolve_scenario(args.scenario)
    solver_config, overrides = _apply_mode(solver_config, args)
    out = _output_dir(args, f"{scenario_config.name}_montecarlo")

    solved_here = args.solution is None
    if solved_here:
        solution = outer_solve(spec, config=solver_config)
    else:
        solution = _solution_from_artifacts(Path(args.solution), spec)

    report = run_trials(solution, spec, args.trials, base_seed=args.seed)
    report_path = out / "report.json"
    hist_path = out / "violations.svg"
    artifacts.save_report(report, report_path)
    plots.plot_violation_histogram(report, hist_path, title=scenario_config.name)
    artifacts.write_manifest(
        out / "manifest.json",
        command=["montecarlo", args.scenario],
        scenario=args.scenario,
        overrides={**overrides, "trials": args.trials},
        mode=solver_config.mode,
        seeds=[args.seed, args.seed + args.trials - 1],
        version=__version__,
        wall_time_s=time.perf_counter() - start,
        outputs=[str(report_path), str(hist_path)],
    )
    print(
        f"{scenario_config.name}: {args.trials} trials, satisfaction rate "
        f"{report.satisfaction_rate:.2%}; report in {out}"
    )
    if solved_here and not solution.converged:
        print("warning: underlying solve did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_export(args) -> int:
    src = Path(args.trajectory)
    if not src.exists():
        raise InvalidInputError(f"no such file: {src}")
    if args.format == "csv":
        doc = artifacts.load_trajectory(src)
        out = Path(args.out) if args.out else src.with_suffix(".csv")
        out.write_text(artifacts.trajectory_to_csv(doc))
    else:
        doc = artifacts.csv_to_trajectory(src.read_text())
        out = Path(args.out) if args.out else src.with_suffix(".json")
        out.write_text(json.dumps(doc, indent=1, sort_keys=True))
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chancegames",
        description="Solve and evaluate chance-constrained stochastic dynamic games.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a scenario and write artifacts")
    solve.add_argument("scenario", help=f"builtin name ({', '.join(BUILTIN_NAMES)}) or YAML path")
    solve.add_argument("--mode", choices=[MODE_AUGMENTED_LAGRANGIAN, MODE_FIXED_PENALTY])
    solve.add_argument("--weight", type=float, help="penalty weight for fixed-penalty mode")
    solve.add_argument("--out", help="output directory")
    solve.set_defaults(func=cmd_solve)

    mc = sub.add_parser("montecarlo", help="closed-loop Monte Carlo evaluation")
    mc.add_argument("scenario", help=f"builtin name ({', '.join(BUILTIN_NAMES)}) or YAML path")
    mc.add_argument("--trials", type=int, required=True, help="number of trials (>= 1)")
    mc.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    mc.add_argument("--mode", choices=[MODE_AUGMENTED_LAGRANGIAN, MODE_FIXED_PENALTY])
    mc.add_argument("--weight", type=float)
    mc.add_argument("--solution", help="reuse a prior trajectory.json instead of solving")
    mc.add_argument("--out", help="output directory")
    mc.set_defaults(func=cmd_montecarlo)

    export = sub.add_parser("export", help="convert trajectory artifacts between formats")
    export.add_argument("trajectory", help="input trajectory file")
    export.add_argument("--format", choices=["csv", "native"], required=True,
                        help="output format")
    export.add_argument("--out", help="output path")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ChanceGamesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
