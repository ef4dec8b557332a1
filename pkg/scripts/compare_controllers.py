#!/usr/bin/env python3
"""Benchmark every built-in controller on a surge-demand scenario.

Runs the greedy, batching, redistribution, rebalancing, and optimizing
controllers on the same Poisson arrival streams (common random numbers per
seed) and prints peak wait, half-peak fraction, mean wait, and served counts.
Optionally writes per-run wait series CSVs to --out.

Usage:
    python scripts/compare_controllers.py [--seeds 11 12 13] [--duration 40]
                                          [--horizon 4] [--out results/]
"""

import argparse
import csv
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from amodmpc.baselines import (CollaborativeDispatchController,
                               MarkovRedistributionController,
                               NearestNeighborController,
                               RealTimeRebalancingController)
from amodmpc.controllers import MpcForecastController, MpcOracleController
from amodmpc.model import Network, SystemState, Waiting
from amodmpc.mpc import MpcConfig
from amodmpc.sim import (RateSchedule, Scenario, compute_metrics,
                         run_simulation)


def surge_scenario(seed, duration):
    net = Network(5, tuple(tuple(0 if i == j else 2 for j in range(5))
                           for i in range(5)))
    calm = tuple(tuple(0.0 if i == j else 0.015 for j in range(5))
                 for i in range(5))
    busy = tuple(tuple(0.0 if i == j else 0.05 for j in range(5))
                 for i in range(5))
    schedule = RateSchedule(((0, calm), (5, busy), (25, calm)))
    zero = tuple((0,) * 5 for _ in range(5))
    state = SystemState(0, zero, tuple(Waiting(k % 5) for k in range(8)))
    return Scenario(net=net, initial_state=state, schedule=schedule,
                    duration=duration, seed=seed)


def build_controllers(seed, horizon, schedule):
    cfg = MpcConfig(t_hor=horizon, rho_u=Fraction(1, 1000))
    return {
        "nn": NearestNeighborController(np.random.default_rng([seed, 1])),
        "cd": CollaborativeDispatchController(threshold=4),
        "mr": MarkovRedistributionController(
            np.random.default_rng([seed, 1]), schedule.rate_at),
        "rr": RealTimeRebalancingController(epoch=2),
        "mpcs": MpcForecastController(cfg, schedule.rate_at,
                                      np.random.default_rng([seed, 2]),
                                      sampling_epoch=5),
        "mpcf": MpcOracleController(cfg),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[11, 14, 18])
    ap.add_argument("--duration", type=int, default=40)
    ap.add_argument("--horizon", type=int, default=4)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    header = f"{'controller':<6} {'seed':>5} {'peak':>6} {'half-peak':>9} " \
             f"{'mean wait':>9} {'served':>6}"
    print(header)
    print("-" * len(header))
    for seed in args.seeds:
        scenario = surge_scenario(seed, args.duration)
        for name, controller in build_controllers(
                seed, args.horizon, scenario.schedule).items():
            trace = run_simulation(scenario, controller)
            met = compute_metrics(trace)
            mean = ("-" if met.mean_wait_served is None
                    else f"{met.mean_wait_served:9.2f}")
            print(f"{name:<6} {seed:>5} {met.peak_wait:6.2f} "
                  f"{met.half_peak_fraction:9.2f} {mean:>9} "
                  f"{met.served:>6}")
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                path = args.out / f"wait_series_{name}_seed{seed}.csv"
                with path.open("w", newline="") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["step", "mean_pending_wait"])
                    for t, w in enumerate(trace.wait_series):
                        writer.writerow([t, w])


if __name__ == "__main__":
    main()
