#!/usr/bin/env python3
"""Drain a batch of initial demand with the receding-horizon controller.

Builds a random station network, loads it with waiting customers and no new
arrivals, and runs the optimizing controller closed-loop until every customer
has been picked up. Reports steps-to-empty for a sweep of horizons, with and
without battery constraints, so the effect of the horizon-length guarantee is
visible directly.

Usage:
    python scripts/regulation_experiment.py [--seed 7] [--stations 4]
                                            [--fleet 6] [--max-steps 80]
"""

import argparse
import random
import sys
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from amodmpc.model import (ArrivalBatch, ChargeParams, Network, SystemState,
                           Waiting, cost_jx, min_stabilizing_horizon, step)
from amodmpc.mpc import ArrivalForecast, MpcConfig, mpc_step


def random_network(rng, n, max_t=1):
    # battery-constrained solves grow steeply with the horizon the charge
    # guarantee demands, so default to unit travel times (guarantee 2 / 3)
    tt = [[0 if i == j else rng.randint(1, max_t) for j in range(n)]
          for i in range(n)]
    return Network(n, tuple(tuple(r) for r in tt))


def drain(net, state, cfg, cp, max_steps):
    for t in range(max_steps):
        if cost_jx(state) == 0:
            return t
        forecast = ArrivalForecast.zero(net, state.time, cfg.t_hor)
        ctrl, _ = mpc_step(state, forecast, net, cfg, cp)
        state = step(state, ctrl, ArrivalBatch.zero(net.n_stations), net, cp)
    return None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--stations", type=int, default=4)
    ap.add_argument("--fleet", type=int, default=6)
    ap.add_argument("--max-steps", type=int, default=80)
    ap.add_argument("--max-travel", type=int, default=1)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    net = random_network(rng, args.stations, max_t=args.max_travel)
    demand = tuple(tuple(0 if i == j else rng.choice([0, 1, 1, 2])
                         for j in range(args.stations))
                   for i in range(args.stations))
    vehicles = tuple(Waiting(rng.randrange(args.stations))
                     for _ in range(args.fleet))
    total = sum(sum(r) for r in demand)
    cp = ChargeParams(Fraction(1, 5), Fraction(1, 10))

    print(f"network: {args.stations} stations, max travel time "
          f"{net.max_travel_time}; {total} waiting customers, "
          f"{args.fleet} vehicles")
    guarantee = min_stabilizing_horizon(net)
    guarantee_c = min_stabilizing_horizon(net, cp)
    print(f"guaranteed-draining horizons: {guarantee} (uncharged), "
          f"{guarantee_c} (charged)\n")

    print("uncharged fleet:")
    for t_hor in range(1, guarantee + 1):
        state = SystemState(0, demand, vehicles)
        steps = drain(net, state, MpcConfig(t_hor=t_hor), None,
                      args.max_steps)
        note = " (at guarantee)" if t_hor == guarantee else ""
        print(f"  horizon {t_hor:2d}: "
              f"{'no drain within budget' if steps is None else f'{steps} steps'}"
              f"{note}")

    print("\ncharged fleet (q0 = 0.8, charge 0.2/step, drain 0.1/step):")
    for t_hor in (guarantee, guarantee_c):
        state = SystemState(0, demand, vehicles,
                            charges=(Fraction(4, 5),) * args.fleet)
        cfg = MpcConfig(t_hor=t_hor, charging_enabled=True)
        steps = drain(net, state, cfg, cp, args.max_steps)
        note = " (at charged guarantee)" if t_hor == guarantee_c else ""
        print(f"  horizon {t_hor:2d}: "
              f"{'no drain within budget' if steps is None else f'{steps} steps'}"
              f"{note}")


if __name__ == "__main__":
    main()
