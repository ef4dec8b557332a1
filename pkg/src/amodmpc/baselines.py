"""Dispatch controllers used for benchmarking.

All controllers implement the same interface: given the observed state (with
this step's arrivals already folded into the waiting-demand matrix), the
pending request queue, and the network, emit one feasible per-vehicle
control.  The four classical policies here are nearest-neighbor (NN),
threshold-batched collaborative dispatch (CD), randomized Markov
redistribution (MR), and epoch-based real-time rebalancing (RR); the MPC
controllers live in :mod:`amodmpc.controllers`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .milp import LinearExpr, Problem, Sense, Status, VarKind
from .model import (ArrivalBatch, Control, HOLD, Network, Pickup, Rebalance,
                    SystemState, VehicleAction, Waiting)
from .simplex import SolverParams, solve_lp


@dataclass
class Request:
    """One customer trip request, tracked from arrival to pickup."""

    id: int
    origin: int
    dest: int
    arrival_step: int
    assigned_vehicle: Optional[int] = None
    pickup_step: Optional[int] = None

    def __post_init__(self):
        if self.origin == self.dest:
            raise ValueError("request origin and destination must differ")


@dataclass
class StepContext:
    """Everything a controller may look at for one decision step."""

    state: SystemState
    queue: list[Request]          # pending requests, arrival order
    net: Network
    step: int
    future: Sequence[ArrivalBatch] = ()   # oracle arrivals after this step


class Controller:
    """Base dispatch policy; subclasses override :meth:`control`."""

    name = "base"

    def reset(self) -> None:
        """Clear episode state before a fresh simulation."""

    def control(self, ctx: StepContext) -> Control:
        raise NotImplementedError


def _travel(net: Network, a: int, b: int) -> int:
    return 0 if a == b else net.travel_time[a][b]


def _free_vehicles(state: SystemState) -> list[int]:
    return [k for k in range(state.fleet_size) if state.vehicle_available(k)]


def _fifo_local_pickups(ctx: StepContext, actions: list[VehicleAction],
                        taken: set[int]) -> None:
    """Assign co-located free vehicles to the oldest local requests."""
    for req in ctx.queue:
        candidates = [k for k in _free_vehicles(ctx.state)
                      if k not in taken
                      and ctx.state.vehicle_station(k) == req.origin]
        if not candidates:
            continue
        k = candidates[0]
        actions[k] = Pickup(req.origin, req.dest)
        taken.add(k)


class NearestNeighborController(Controller):
    """FIFO queue served by the nearest free vehicle; idle vehicles random-walk."""

    name = "NN"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._assigned: dict[int, int] = {}   # request id -> vehicle

    def reset(self) -> None:
        self._assigned = {}

    def control(self, ctx: StepContext) -> Control:
        state, net = ctx.state, ctx.net
        actions: list[VehicleAction] = [HOLD] * state.fleet_size
        pending_ids = {r.id for r in ctx.queue}
        self._assigned = {rid: k for rid, k in self._assigned.items()
                          if rid in pending_ids}
        busy = set(self._assigned.values())

        # move assigned vehicles along; pick up on arrival at the origin
        for req in ctx.queue:
            k = self._assigned.get(req.id)
            if k is None or not state.vehicle_available(k):
                continue
            here = state.vehicle_station(k)
            if here == req.origin:
                actions[k] = Pickup(req.origin, req.dest)
            else:
                actions[k] = Rebalance(here, req.origin)

        # newly arrived / still unassigned requests, FIFO
        for req in ctx.queue:
            if req.id in self._assigned:
                continue
            free = [k for k in _free_vehicles(state) if k not in busy]
            if not free:
                break
            k = min(free, key=lambda k: (_travel(net, state.vehicle_station(k),
                                                 req.origin), k))
            self._assigned[req.id] = k
            busy.add(k)
            here = state.vehicle_station(k)
            if here == req.origin:
                actions[k] = Pickup(req.origin, req.dest)
            else:
                actions[k] = Rebalance(here, req.origin)

        # unassigned free vehicles take one random-walk hop
        if net.n_stations > 1:
            for k in _free_vehicles(state):
                if k in busy:
                    continue
                here = state.vehicle_station(k)
                others = [s for s in range(net.n_stations) if s != here]
                dest = int(others[self.rng.integers(len(others))])
                actions[k] = Rebalance(here, dest)
        return Control(time=state.time, actions=tuple(actions))


def solve_assignment(costs: list[list[float]], k: int,
                     params: Optional[SolverParams] = None) -> list[tuple[int, int]]:
    """Min-cost matching of cardinality `k` via the LP relaxation.

    The assignment polytope has integral vertices, so the LP optimum decodes
    directly into a matching.
    """
    nv, nr = len(costs), len(costs[0]) if costs else 0
    if k == 0 or nv == 0 or nr == 0:
        return []
    prob = Problem("assignment")
    ids = {}
    for a in range(nv):
        for b in range(nr):
            ids[(a, b)] = prob.add_variable(f"x[{a}][{b}]", upper=1)
    for a in range(nv):
        prob.add_constraint(LinearExpr({ids[(a, b)]: 1 for b in range(nr)}),
                            Sense.LE, 1)
    for b in range(nr):
        prob.add_constraint(LinearExpr({ids[(a, b)]: 1 for a in range(nv)}),
                            Sense.LE, 1)
    prob.add_constraint(LinearExpr({vid: 1 for vid in ids.values()}),
                        Sense.EQ, k)
    prob.set_objective(LinearExpr({ids[(a, b)]: costs[a][b]
                                   for a in range(nv) for b in range(nr)}))
    sol = solve_lp(prob, params)
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"assignment LP unexpectedly {sol.status}")
    return sorted((a, b) for (a, b), vid in ids.items()
                  if sol.values[vid] > 0.5)


class CollaborativeDispatchController(Controller):
    """Hold until the queue reaches a threshold, then batch-dispatch vehicles
    matched to requests at minimum total empty travel."""

    name = "CD"

    def __init__(self, threshold: Callable[[int], int] | int = 4,
                 params: Optional[SolverParams] = None):
        self.threshold = threshold
        self.params = params
        self._assigned: dict[int, int] = {}

    def reset(self) -> None:
        self._assigned = {}

    def _x(self, step: int) -> int:
        return self.threshold(step) if callable(self.threshold) else self.threshold

    def control(self, ctx: StepContext) -> Control:
        state, net = ctx.state, ctx.net
        actions: list[VehicleAction] = [HOLD] * state.fleet_size
        pending_ids = {r.id for r in ctx.queue}
        self._assigned = {rid: k for rid, k in self._assigned.items()
                          if rid in pending_ids}
        busy = set(self._assigned.values())

        for req in ctx.queue:
            k = self._assigned.get(req.id)
            if k is None or not state.vehicle_available(k):
                continue
            here = state.vehicle_station(k)
            actions[k] = (Pickup(req.origin, req.dest) if here == req.origin
                          else Rebalance(here, req.origin))

        unassigned = [r for r in ctx.queue if r.id not in self._assigned]
        if len(unassigned) >= self._x(ctx.step):
            free = [k for k in _free_vehicles(state) if k not in busy]
            count = min(len(unassigned), len(free))
            if count:
                costs = [[float(_travel(net, state.vehicle_station(k), r.origin))
                          for r in unassigned] for k in free]
                for a, b in solve_assignment(costs, count, self.params):
                    k, req = free[a], unassigned[b]
                    self._assigned[req.id] = k
                    here = state.vehicle_station(k)
                    actions[k] = (Pickup(req.origin, req.dest)
                                  if here == req.origin
                                  else Rebalance(here, req.origin))
        return Control(time=state.time, actions=tuple(actions))


class MarkovRedistributionController(Controller):
    """Randomized rebalancing toward the (estimated demand + waiting) mix."""

    name = "MR"

    def __init__(self, rng: np.random.Generator,
                 demand_estimate: Callable[[int], Sequence[Sequence[float]]],
                 params: Optional[SolverParams] = None):
        self.rng = rng
        self.demand_estimate = demand_estimate
        self.params = params

    def control(self, ctx: StepContext) -> Control:
        state, net = ctx.state, ctx.net
        n = net.n_stations
        actions: list[VehicleAction] = [HOLD] * state.fleet_size
        taken: set[int] = set()
        _fifo_local_pickups(ctx, actions, taken)

        idle = [k for k in _free_vehicles(state) if k not in taken]
        if not idle or n < 2:
            return Control(time=state.time, actions=tuple(actions))

        est = self.demand_estimate(ctx.step)
        weight = [sum(est[i][j] for j in range(n) if j != i)
                  + sum(state.demand[i][j] for j in range(n))
                  for i in range(n)]
        total_w = sum(weight)
        target = ([w / total_w for w in weight] if total_w > 0
                  else [1.0 / n] * n)
        counts = [0] * n
        for k in idle:
            counts[state.vehicle_station(k)] += 1
        have = [c / len(idle) for c in counts]

        # minimum-travel-time mass transport from `have` to `target`
        prob = Problem("redistribute")
        ids = {}
        for i, j in net.pairs():
            ids[(i, j)] = prob.add_variable(f"f[{i}][{j}]")
        for i in range(n):
            terms = {}
            for j in range(n):
                if j == i:
                    continue
                terms[ids[(i, j)]] = terms.get(ids[(i, j)], 0) + 1
                terms[ids[(j, i)]] = terms.get(ids[(j, i)], 0) - 1
            prob.add_constraint(LinearExpr(terms), Sense.EQ,
                                float(have[i] - target[i]))
        prob.set_objective(LinearExpr(
            {vid: net.travel_time[i][j] for (i, j), vid in ids.items()}))
        sol = solve_lp(prob, self.params)
        if sol.status is not Status.OPTIMAL:
            raise RuntimeError(f"redistribution LP unexpectedly {sol.status}")

        for k in idle:
            here = state.vehicle_station(k)
            if have[here] <= 0:
                continue
            probs = []
            dests = []
            for j in range(n):
                if j == here:
                    continue
                f = sol.values[ids[(here, j)]]
                if f > 1e-12:
                    dests.append(j)
                    probs.append(f / have[here])
            stay = max(0.0, 1.0 - sum(probs))
            choices = dests + [here]
            pvec = np.array(probs + [stay])
            pvec = np.maximum(pvec, 0.0)
            pvec /= pvec.sum()
            dest = int(self.rng.choice(choices, p=pvec))
            if dest != here:
                actions[k] = Rebalance(here, dest)
        return Control(time=state.time, actions=tuple(actions))


class RealTimeRebalancingController(Controller):
    """Every epoch, even out the at-or-enroute vehicle counts with a
    min-cost transportation LP; off-epoch steps only serve local pickups."""

    name = "RR"

    def __init__(self, epoch: int = 20, params: Optional[SolverParams] = None):
        if epoch < 1:
            raise ValueError("epoch must be >= 1")
        self.epoch = epoch
        self.params = params

    def control(self, ctx: StepContext) -> Control:
        state, net = ctx.state, ctx.net
        n = net.n_stations
        actions: list[VehicleAction] = [HOLD] * state.fleet_size
        taken: set[int] = set()
        _fifo_local_pickups(ctx, actions, taken)
        if ctx.step % self.epoch != 0 or n < 2:
            return Control(time=state.time, actions=tuple(actions))

        counts = [0] * n
        for k in range(state.fleet_size):
            counts[state.vehicle_station(k)] += 1
        m = state.fleet_size
        share = m // n
        remainder = m - share * n
        desired = [share] * n
        waiting = [sum(state.demand[i]) for i in range(n)]
        for i in sorted(range(n), key=lambda i: (-waiting[i], i))[:remainder]:
            desired[i] += 1
        excess = [counts[i] - desired[i] for i in range(n)]
        surplus = {i: e for i, e in enumerate(excess) if e > 0}
        deficit = {i: -e for i, e in enumerate(excess) if e < 0}
        ship_total = min(sum(surplus.values()), sum(deficit.values()))
        if ship_total == 0:
            return Control(time=state.time, actions=tuple(actions))

        prob = Problem("rebalance")
        ids = {}
        for i in surplus:
            for j in deficit:
                ids[(i, j)] = prob.add_variable(f"x[{i}][{j}]")
        for i, cap in surplus.items():
            prob.add_constraint(LinearExpr({ids[(i, j)]: 1 for j in deficit}),
                                Sense.LE, cap)
        for j, need in deficit.items():
            prob.add_constraint(LinearExpr({ids[(i, j)]: 1 for i in surplus}),
                                Sense.LE, need)
        prob.add_constraint(LinearExpr({vid: 1 for vid in ids.values()}),
                            Sense.EQ, ship_total)
        prob.set_objective(LinearExpr({vid: net.travel_time[i][j]
                                       for (i, j), vid in ids.items()}))
        sol = solve_lp(prob, self.params)
        if sol.status is not Status.OPTIMAL:
            raise RuntimeError(f"rebalancing LP unexpectedly {sol.status}")

        for (i, j), vid in sorted(ids.items()):
            count = int(round(sol.values[vid]))
            movable = [k for k in _free_vehicles(state)
                       if k not in taken and state.vehicle_station(k) == i
                       and isinstance(state.vehicles[k], Waiting)]
            for k in movable[:count]:
                actions[k] = Rebalance(i, j)
                taken.add(k)
        return Control(time=state.time, actions=tuple(actions))
