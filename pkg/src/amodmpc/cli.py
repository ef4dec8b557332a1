"""Command-line front end: experiments, LP export/import, data ingestion.

Exit codes: 0 success, 1 run-time failure (non-convergence, solver failure),
2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from fractions import Fraction
from pathlib import Path

import yaml

from .config import (ConfigError, RunConfig, build_controller,
                     load_run_config, make_external_solver)
from .lp_io import read_solution, write_lp
from .model import (SystemState, cost_jx, Hold, Pickup, Rebalance)
from .mpc import build_mpc_problem, extract_first_control
from .sim import (Scenario, compute_metrics, ingest_trip_records,
                  metrics_to_json, requests_to_csv, run_simulation,
                  trace_to_csv)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out) if args.out else (cfg.out_dir or Path("out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeds(cfg: RunConfig, args) -> list[int]:
    return [args.seed] if args.seed is not None else cfg.seeds


def _solver_for(cfg: RunConfig, args):
    choice = args.solver or cfg.solver
    if choice == "external":
        command = cfg.external_command
        if not command:
            raise ConfigError("solver external requires external_command "
                              "in the run config")
        return make_external_solver(command)
    return None


def _single_controller(cfg: RunConfig, scenario, seed, solver):
    if not cfg.controller_specs:
        raise ConfigError("this subcommand expects a controller")
    if len(cfg.controller_specs) > 1:
        print("note: multiple controllers configured; using the first",
              file=sys.stderr)
    return build_controller(cfg.controller_specs[0], scenario, seed, solver)


def _is_mpc_spec(spec) -> bool:
    kind = (spec if isinstance(spec, str) else spec.get("type", "")).lower()
    return kind in ("mpcs", "mpcf")


def _fmt_action(act) -> str:
    if isinstance(act, Pickup):
        return f"pickup {act.origin}->{act.dest}"
    if isinstance(act, Rebalance):
        return f"rebalance {act.origin}->{act.dest}"
    return "hold"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_regulate(args) -> int:
    cfg = load_run_config(Path(args.config))
    scenario = cfg.scenario
    if any(x != 0 for _, mat in scenario.schedule.pieces
           for row in mat for x in row):
        raise ConfigError("regulate requires a zero-rate scenario "
                          "(initial demand only)")
    if not cfg.controller_specs or not _is_mpc_spec(cfg.controller_specs[0]):
        raise ConfigError("regulate requires an MPC controller (mpcs/mpcf)")
    out = _out_dir(cfg, args)
    solver = _solver_for(cfg, args)
    seed = _seeds(cfg, args)[0]
    budget = cfg.step_budget or scenario.duration
    scenario = Scenario(net=scenario.net,
                        initial_state=scenario.initial_state,
                        schedule=scenario.schedule, duration=budget,
                        seed=seed, cp=scenario.cp,
                        future_window=scenario.future_window)
    controller = _single_controller(cfg, scenario, seed, solver)
    trace = run_simulation(scenario, controller)

    n = scenario.net.n_stations
    with (out / "waiting_counts.csv").open("w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step"] + [f"station_{i}" for i in range(n)] +
                        ["total"])
        for t, state in enumerate(trace.states):
            per = [sum(state.demand[i]) for i in range(n)]
            writer.writerow([t] + per + [sum(per)])
    if trace.states[0].charges is not None:
        m = trace.states[0].fleet_size
        with (out / "charges.csv").open("w") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step"] + [f"vehicle_{k}" for k in range(m)])
            for t, state in enumerate(trace.states):
                writer.writerow([t] + [str(q) for q in state.charges])

    final_jx = cost_jx(trace.states[-1])
    print(f"regulate: {budget} steps, final total waiting = {final_jx}")
    if final_jx != 0:
        print("regulate: fleet did not empty the demand within the step "
              "budget", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_run_config(Path(args.config))
    out = _out_dir(cfg, args)
    solver = _solver_for(cfg, args)
    seed = _seeds(cfg, args)[0]
    scenario = cfg.scenario
    scenario = Scenario(net=scenario.net,
                        initial_state=scenario.initial_state,
                        schedule=scenario.schedule,
                        duration=scenario.duration, seed=seed,
                        cp=scenario.cp, future_window=scenario.future_window)
    controller = _single_controller(cfg, scenario, seed, solver)
    trace = run_simulation(scenario, controller)
    metrics = compute_metrics(trace)
    with (out / "trace.csv").open("w") as fh:
        trace_to_csv(trace, fh)
    with (out / "requests.csv").open("w") as fh:
        requests_to_csv(trace, fh)
    with (out / "metrics.json").open("w") as fh:
        metrics_to_json(metrics, fh)
    print(f"simulate: served {metrics.served}/{metrics.generated}, "
          f"peak wait {metrics.peak_wait:.3f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_run_config(Path(args.config))
    if len(cfg.controller_specs) < 2:
        raise ConfigError("compare requires at least two controllers")
    seeds = _seeds(cfg, args)
    if not seeds:
        raise ConfigError("compare requires at least one seed")
    out = _out_dir(cfg, args)
    solver = _solver_for(cfg, args)

    names = []
    for idx, spec in enumerate(cfg.controller_specs):
        kind = (spec if isinstance(spec, str) else spec["type"]).lower()
        name = kind
        if name in names:
            name = f"{kind}_{idx}"
        names.append(name)

    results: dict[tuple[str, int], object] = {}
    for name, spec in zip(names, cfg.controller_specs):
        for seed in seeds:
            base = cfg.scenario
            scenario = Scenario(net=base.net, initial_state=base.initial_state,
                                schedule=base.schedule, duration=base.duration,
                                seed=seed, cp=base.cp,
                                future_window=base.future_window)
            controller = build_controller(spec, scenario, seed, solver)
            trace = run_simulation(scenario, controller)
            results[(name, seed)] = (compute_metrics(trace), trace)
            with (out / f"wait_series_{name}_seed{seed}.csv").open("w") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["step", "mean_wait_pending"])
                for t, w in enumerate(trace.wait_series):
                    writer.writerow([t, f"{w:.6f}"])

    for metric, fname in (("peak_wait", "peak_wait.csv"),
                          ("half_peak_fraction", "half_peak_fraction.csv")):
        with (out / fname).open("w") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["controller"] + [f"seed_{s}" for s in seeds])
            for name in names:
                row = [name]
                for seed in seeds:
                    metrics, _ = results[(name, seed)]
                    row.append(f"{getattr(metrics, metric):.6f}")
                writer.writerow(row)

    for name in names:
        peaks = [results[(name, s)][0].peak_wait for s in seeds]
        print(f"compare: {name:8s} mean peak wait "
              f"{sum(peaks) / len(peaks):.3f}")
    return EXIT_OK


def cmd_export_lp(args) -> int:
    cfg = load_run_config(Path(args.config))
    scenario = cfg.scenario
    if not cfg.controller_specs or not _is_mpc_spec(cfg.controller_specs[0]):
        raise ConfigError("export-lp requires an MPC controller (mpcs/mpcf)")
    state = scenario.initial_state
    if state.charges is not None and scenario.cp is None:
        raise ConfigError("state carries charges but the scenario has no "
                          "charging parameters")
    seed = _seeds(cfg, args)[0]
    controller = build_controller(cfg.controller_specs[0], scenario, seed)
    from .mpc import ArrivalForecast
    forecast = ArrivalForecast.zero(scenario.net, state.time,
                                    controller.cfg.t_hor)
    prob, _ = build_mpc_problem(state, forecast, scenario.net,
                                controller.cfg, scenario.cp)
    dest = Path(args.out) if args.out else Path("problem.lp")
    with dest.open("w") as fh:
        write_lp(prob, fh)
    print(f"export-lp: wrote {prob.n_variables} variables, "
          f"{len(prob.constraints)} rows to {dest}")
    return EXIT_OK


def cmd_import_sol(args) -> int:
    cfg = load_run_config(Path(args.config))
    scenario = cfg.scenario
    if not cfg.controller_specs or not _is_mpc_spec(cfg.controller_specs[0]):
        raise ConfigError("import-sol requires an MPC controller (mpcs/mpcf)")
    state = scenario.initial_state
    seed = _seeds(cfg, args)[0]
    controller = build_controller(cfg.controller_specs[0], scenario, seed)
    from .mpc import ArrivalForecast
    forecast = ArrivalForecast.zero(scenario.net, state.time,
                                    controller.cfg.t_hor)
    prob, idx = build_mpc_problem(state, forecast, scenario.net,
                                  controller.cfg, scenario.cp)
    with open(args.solution) as fh:
        sol = read_solution(fh, prob)
    ctrl = extract_first_control(sol, idx, state.fleet_size)
    print(f"objective {sol.objective}")
    for k, act in enumerate(ctrl.actions):
        print(f"vehicle {k}: {_fmt_action(act)}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    try:
        with open(args.records) as fh:
            schedule = ingest_trip_records(fh, args.stations, args.bin_width)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.records}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{args.records}: {exc}") from None
    doc = {"rates": [{"start": start, "matrix": [list(row) for row in mat]}
                     for start, mat in schedule.pieces]}
    text = yaml.safe_dump(doc, sort_keys=False)
    if args.out:
        Path(args.out).write_text(text)
        print(f"ingest: wrote {len(schedule.pieces)} rate piece(s) to "
              f"{args.out}")
    else:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amodmpc",
        description="Fleet-dispatch experiments: MPC and baseline "
                    "controllers over a station-discrete mobility model.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("config", help="run config YAML file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed list with one seed")
        p.add_argument("--out", default=None, help="output directory or file")
        p.add_argument("--solver", choices=["builtin", "external"],
                       default=None, help="override solver selection")

    p = sub.add_parser("regulate",
                       help="drain initial demand with an MPC controller")
    add_common(p)
    p.set_defaults(func=cmd_regulate)

    p = sub.add_parser("simulate", help="run one controller on one scenario")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare",
                       help="run multiple controllers on shared arrivals")
    add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-lp",
                       help="write one MPC step as an LP file")
    add_common(p)
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("import-sol",
                       help="decode an external solution file into a control")
    add_common(p)
    p.add_argument("solution", help="solution file with `name value` lines")
    p.set_defaults(func=cmd_import_sol)

    p = sub.add_parser("ingest",
                       help="estimate rate schedule from trip records CSV")
    p.add_argument("records", help="CSV of pickup_step,origin,dest rows")
    p.add_argument("--stations", type=int, required=True)
    p.add_argument("--bin-width", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
