"""Shared generators for randomized tests."""

from __future__ import annotations

import random
from fractions import Fraction

from amodmpc.model import (ArrivalBatch, Control, EnRoute, HOLD, Network,
                           Pickup, Rebalance, SystemState, Waiting,
                           validate_control)


def random_network(rng: random.Random, n: int, max_t: int = 3) -> Network:
    tt = [[0 if i == j else rng.randint(1, max_t) for j in range(n)]
          for i in range(n)]
    return Network(n, tuple(tuple(row) for row in tt))


def random_state(rng: random.Random, net: Network, m: int,
                 max_demand: int = 3, with_charges: bool = False,
                 time: int = 0) -> SystemState:
    n = net.n_stations
    demand = tuple(tuple(0 if i == j else rng.randint(0, max_demand)
                         for j in range(n)) for i in range(n))
    vehicles = []
    for _ in range(m):
        if n > 1 and rng.random() < 0.3:
            i = rng.randrange(n)
            j = rng.choice([s for s in range(n) if s != i])
            vehicles.append(EnRoute(j, rng.randint(0, net.travel_time[i][j] - 1)))
        else:
            vehicles.append(Waiting(rng.randrange(n)))
    charges = None
    if with_charges:
        charges = tuple(Fraction(rng.randint(5, 10), 10) for _ in range(m))
    return SystemState(time=time, demand=demand, vehicles=tuple(vehicles),
                       charges=charges)


def random_feasible_control(rng: random.Random, state: SystemState,
                            net: Network, cp=None) -> Control:
    """Sample a control that passes validate_control (rejection-free)."""
    n = net.n_stations
    remaining = [list(row) for row in state.demand]
    actions = []
    for k in range(state.fleet_size):
        if not state.vehicle_available(k):
            actions.append(HOLD)
            continue
        here = state.vehicle_station(k)
        q = state.charges[k] if state.charges is not None else None

        def can_drive(j):
            return cp is None or q is None or q >= cp.alpha_d * net.travel_time[here][j]

        choices = [HOLD]
        pick_dests = [j for j in range(n)
                      if j != here and remaining[here][j] > 0 and can_drive(j)]
        if pick_dests:
            choices.append("pick")
        reb_dests = [j for j in range(n) if j != here and can_drive(j)]
        if reb_dests:
            choices.append("reb")
        choice = rng.choice(choices)
        if choice == "pick":
            j = rng.choice(pick_dests)
            remaining[here][j] -= 1
            actions.append(Pickup(here, j))
        elif choice == "reb":
            actions.append(Rebalance(here, rng.choice(reb_dests)))
        else:
            actions.append(HOLD)
    ctrl = Control(time=state.time, actions=tuple(actions))
    assert not validate_control(state, ArrivalBatch.zero(n, state.time),
                                ctrl, net, cp)
    return ctrl
