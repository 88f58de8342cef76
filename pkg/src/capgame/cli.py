"""Command-line driver: generate instances, run allocators, verify profiles,
and sweep the serial-topology anarchy bounds.

Verbs: gen, run, verify, poa. Flag values override a JSON config file
(``--config``), which overrides built-in defaults. Set CAPGAME_LOG to a
logging level name for diagnostics. Exit codes: 0 ok, 1 check failure,
2 input error, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .allocators import SATURATION_RTOL, iterated_allocation, one_step_profile
from .equilibrium import (
    DEFAULT_NASH_RTOL,
    nash_check,
    pareto_dominance_sample,
    serial_poa,
    SerialPoAInputs,
)
from .instance_io import (
    FileFormatError,
    load_instance,
    load_profile,
    random_instance,
    save,
)
from .model import (
    FEASIBILITY_RTOL,
    InvalidInstanceError,
    InvalidProfileError,
    PayoffMode,
    feasibility_report,
    link_payoffs,
    rates_of,
    utility_values,
    welfare,
)
from .oracle import dual_solve
from .simnet import SimulationDidNotConverge, run_simulation, save_message_log

log = logging.getLogger("capgame")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NO_CONVERGENCE = 3


class InputError(Exception):
    pass


def _configure_logging() -> None:
    level = os.environ.get("CAPGAME_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _add_generator_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--links", type=int, default=5)
    parser.add_argument("--flows", type=int, default=8)
    parser.add_argument("--p-route", type=float, default=0.5)
    parser.add_argument("--cap-min", type=float, default=10.0)
    parser.add_argument("--cap-max", type=float, default=100.0)
    parser.add_argument("--gamma", type=float, default=0.5)
    parser.add_argument(
        "--payoff-mode",
        choices=[m.value for m in PayoffMode],
        default=PayoffMode.UNIFORM.value,
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--random-weights", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capgame",
        description="Capacity allocation game toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--config",
        help="JSON file of default flag values (flags given on the command "
        "line take precedence)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a random instance file")
    _add_generator_flags(gen)
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run an allocator and write iteration CSVs")
    run.add_argument("--instance", help="instance file (otherwise generated)")
    _add_generator_flags(run)
    run.add_argument(
        "--algorithm",
        choices=["one-step", "iterated", "simnet"],
        default="iterated",
    )
    run.add_argument("--batch-removal", action="store_true")
    run.add_argument("--out-dir", required=True)
    run.add_argument("--tol", type=float, default=1e-4, help="oracle gap tolerance")
    run.add_argument("--max-iter", type=int, default=200_000)
    run.add_argument("--no-oracle", action="store_true")

    verify = sub.add_parser("verify", help="check a profile against an instance")
    verify.add_argument("--instance", required=True)
    verify.add_argument("--profile", required=True)
    verify.add_argument(
        "--checks",
        default="nash,pareto,remark1,feasible",
        help="comma list from: nash, pareto, remark1, feasible",
    )
    verify.add_argument("--tol", type=float, default=DEFAULT_NASH_RTOL)
    verify.add_argument("--trials", type=int, default=2000)
    verify.add_argument("--seed", type=int, default=0)

    poa = sub.add_parser("poa", help="sweep serial-topology anarchy bounds")
    poa.add_argument("--links", type=int, default=5)
    poa.add_argument("--gamma", type=float, default=0.5)
    poa.add_argument(
        "--payoff-mode",
        choices=[m.value for m in PayoffMode],
        default=PayoffMode.UNIFORM.value,
    )
    poa.add_argument("--chi-min", type=float, default=1e-6)
    poa.add_argument("--chi-max", type=float, default=1e3)
    poa.add_argument("--chi-points", type=int, default=19)
    poa.add_argument("--out", required=True)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {known.config}: {exc}")
        if not isinstance(overrides, dict):
            raise InputError("config file must hold a JSON object")
        defaults = {key.replace("-", "_"): value for key, value in overrides.items()}
        parser.set_defaults(**defaults)
        for action in parser._subparsers._group_actions:  # noqa: SLF001
            for sub in action.choices.values():
                sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _instance_from_args(args) -> tuple:
    if getattr(args, "instance", None):
        return load_instance(args.instance), f"file:{args.instance}"
    inst = random_instance(
        num_links=args.links,
        num_flows=args.flows,
        p_route=args.p_route,
        cap_range=(args.cap_min, args.cap_max),
        gamma=args.gamma,
        payoff_mode=PayoffMode(args.payoff_mode),
        seed=args.seed,
        randomize_weights=args.random_weights,
    )
    return inst, f"generated:seed={args.seed}"


def _header_lines(source: str, args) -> list[str]:
    parts = [
        f"source={source}",
        f"algorithm={getattr(args, 'algorithm', 'n/a')}",
        f"seed={getattr(args, 'seed', 'n/a')}",
        f"saturation_rtol={SATURATION_RTOL}",
        f"feasibility_rtol={FEASIBILITY_RTOL}",
        f"oracle_tol={getattr(args, 'tol', 'n/a')}",
        f"version={__version__}",
    ]
    return ["# capgame run " + " ".join(parts)]


def _write_csv(path: str, header: list[str], columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def cmd_gen(args) -> int:
    inst, _ = _instance_from_args(args)
    save(args.out, inst)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    inst, source = _instance_from_args(args)
    os.makedirs(args.out_dir, exist_ok=True)

    if args.algorithm == "one-step":
        profiles = [one_step_profile(inst)]
    elif args.algorithm == "iterated":
        final, trace = iterated_allocation(inst, batch_removal=args.batch_removal)
        profiles = [it.profile for it in trace.iterations]
        save(os.path.join(args.out_dir, "trace.txt"), trace)
    else:
        result = run_simulation(inst)
        profiles = list(result.round_profiles)
        final = result.profile
        save_message_log(os.path.join(args.out_dir, "messages.log"), result.log)

    final_profile = profiles[-1] if args.algorithm == "one-step" else final
    save(os.path.join(args.out_dir, "profile.txt"), final_profile)

    oracle_value = ""
    exit_code = EXIT_OK
    if not args.no_oracle:
        result = dual_solve(inst, tol=args.tol, max_iter=args.max_iter)
        oracle_value = repr(result.objective)
        if not result.converged:
            log.warning("oracle did not converge (gap %.3g)", result.duality_gap)
            exit_code = EXIT_NO_CONVERGENCE

    header = _header_lines(source, args)
    payoff_rows, utility_rows, welfare_rows = [], [], []
    for n, profile in enumerate(profiles, start=1):
        x = rates_of(inst, profile).rates
        payoffs = link_payoffs(inst, profile)
        utilities = utility_values(x, inst.flow_weights, inst.gamma)
        payoff_rows.append([n] + [repr(float(q)) for q in payoffs])
        utility_rows.append([n] + [repr(float(u)) for u in utilities])
        welfare_rows.append([n, repr(welfare(inst, profile).value), oracle_value])

    _write_csv(
        os.path.join(args.out_dir, "payoffs.csv"),
        header,
        ["iteration"] + [f"player_{l}" for l in range(inst.num_links)],
        payoff_rows,
    )
    _write_csv(
        os.path.join(args.out_dir, "utilities.csv"),
        header,
        ["iteration"] + [f"flow_{r}" for r in range(inst.num_flows)],
        utility_rows,
    )
    _write_csv(
        os.path.join(args.out_dir, "welfare.csv"),
        header,
        ["iteration", "total_utility", "oracle_optimum"],
        welfare_rows,
    )
    print(f"wrote CSVs to {args.out_dir}")
    return exit_code


def cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    profile = load_profile(args.profile)
    requested = [c.strip() for c in args.checks.split(",") if c.strip()]
    known = {"nash", "pareto", "remark1", "feasible"}
    unknown = set(requested) - known
    if unknown:
        raise InputError(f"unknown checks: {', '.join(sorted(unknown))}")

    report: dict[str, dict] = {}
    feasible_ok, detail = feasibility_report(inst, profile)
    if "feasible" in requested:
        report["feasible"] = {"ok": feasible_ok, "detail": detail}
    if not feasible_ok:
        # The remaining checks assume a feasible profile.
        for check in requested:
            if check != "feasible":
                report[check] = {"ok": False, "detail": "skipped: profile infeasible"}
        print(json.dumps({"ok": False, "checks": report}, indent=2))
        return EXIT_CHECK_FAILED

    if "nash" in requested:
        eq = nash_check(inst, profile, rel_tol=args.tol)
        worst = max(range(inst.num_links), key=lambda l: eq.per_link[l].relative_gap)
        report["nash"] = {
            "ok": eq.is_nash,
            "max_gap": eq.max_gap,
            "worst_link": worst,
        }
    if "pareto" in requested:
        sample = pareto_dominance_sample(inst, profile, trials=args.trials, seed=args.seed)
        report["pareto"] = {
            "ok": not sample.dominating_found,
            "trials": sample.trials_run,
        }
    if "remark1" in requested:
        x = rates_of(inst, profile).rates
        gaps = np.abs(profile.alloc - x[None, :])[inst.routing == 1]
        worst_gap = float(gaps.max()) if gaps.size else 0.0
        scale = max(1.0, float(np.abs(profile.alloc).max()))
        report["remark1"] = {
            "ok": worst_gap <= 1e-9 * scale,
            "worst_gap": worst_gap,
        }

    ok = all(entry["ok"] for entry in report.values())
    print(json.dumps({"ok": ok, "checks": report}, indent=2))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_poa(args) -> int:
    if not 0.0 < args.gamma < 1.0:
        raise InputError("poa sweep needs gamma strictly in (0, 1)")
    long_b = 1.0 if PayoffMode(args.payoff_mode) is PayoffMode.UNIFORM else 1.0 / args.links
    grid = np.geomspace(args.chi_min, args.chi_max, args.chi_points)
    grid = np.unique(np.append(grid, 1.0))
    rows = []
    for chi in grid:
        inputs = SerialPoAInputs(
            num_links=args.links,
            gamma=args.gamma,
            local_weights=(1.0,) * args.links,
            long_weight=float(chi) * args.links,
            long_b=long_b,
        )
        result = serial_poa(inputs)
        rows.append([repr(float(chi)), repr(result.poa1), repr(result.poa2), repr(result.poa)])
    uniform_bound = 2.0 ** (1.0 - args.gamma)
    header = [
        "# capgame poa sweep "
        f"links={args.links} gamma={args.gamma} payoff_mode={args.payoff_mode} "
        f"long_b={long_b!r} version={__version__}",
        f"# uniform-payoff chi=1 bound: (1 + b^(1/gamma))^(1-gamma) / b^(1/gamma) = {uniform_bound!r} with b=1",
    ]
    _write_csv(args.out, header, ["chi", "poa1", "poa2", "poa"], rows)
    print(f"wrote {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "verify": cmd_verify,
    "poa": cmd_poa,
}


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
        return _COMMANDS[args.command](args)
    except (
        InputError,
        FileFormatError,
        InvalidInstanceError,
        InvalidProfileError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except SimulationDidNotConverge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
