#!/usr/bin/env python3
"""Sweep the charging rate and watch the fleet's battery trajectory.

Simulates one demand "shift" (quiet, busy, quiet) with battery-constrained
vehicles under the optimizing controller, for several charge-rate multiples
of the per-step drain rate. Prints the mean fleet charge over time and the
final value for each rate, showing how faster chargers keep the fleet viable.

Usage:
    python scripts/charge_rate_sweep.py [--multiples 1 2 4] [--duration 48]
                                        [--seed 606]
"""

import argparse
import sys
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from amodmpc.controllers import MpcOracleController
from amodmpc.model import ChargeParams, Network, SystemState, Waiting
from amodmpc.mpc import MpcConfig
from amodmpc.sim import (RateSchedule, Scenario, compute_metrics,
                         run_simulation)

ALPHA_D = Fraction(1, 10)


def shift_scenario(cp, duration, seed):
    net = Network(2, ((0, 1), (1, 0)))
    quiet = ((0.0, 0.1), (0.1, 0.0))
    busy = ((0.0, 0.5), (0.5, 0.0))
    schedule = RateSchedule(((0, quiet),
                             (duration // 6, busy),
                             (duration - duration // 6, quiet)))
    zero = ((0, 0), (0, 0))
    state = SystemState(0, zero, (Waiting(0), Waiting(1)),
                        charges=(Fraction(4, 5), Fraction(4, 5)))
    return Scenario(net=net, initial_state=state, schedule=schedule,
                    duration=duration, seed=seed, cp=cp)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--multiples", type=int, nargs="+", default=[1, 2, 4],
                    help="charge rate as multiple of the drain rate")
    ap.add_argument("--duration", type=int, default=48)
    ap.add_argument("--seed", type=int, default=606)
    args = ap.parse_args()

    print(f"drain rate {float(ALPHA_D)} per driving step, initial charge 0.8")
    for mult in args.multiples:
        cp = ChargeParams(ALPHA_D * mult, ALPHA_D)
        scenario = shift_scenario(cp, args.duration, args.seed)
        cfg = MpcConfig(t_hor=4, charging_enabled=True)
        trace = run_simulation(scenario, MpcOracleController(cfg, cp=cp))
        met = compute_metrics(trace)
        series = trace.mean_charge_series
        sketch = " ".join(f"{series[t]:.2f}"
                          for t in range(0, len(series),
                                         max(1, len(series) // 12)))
        print(f"\ncharge rate = {mult} x drain "
              f"(alpha_c = {float(cp.alpha_c):.1f}):")
        print(f"  mean charge over time: {sketch}")
        print(f"  final mean charge: {met.final_mean_charge:.3f}   "
              f"served: {met.served}   peak wait: {met.peak_wait:.1f}")


if __name__ == "__main__":
    main()
