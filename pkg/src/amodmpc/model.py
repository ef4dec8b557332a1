"""Discrete-time mobility-on-demand fleet model.

Stations are nodes of a travel-time graph; each vehicle is either waiting at
a station or en route with a known number of steps remaining (remaining = 0
means "arrived this step" and the vehicle may act immediately).  Waiting
demand is an integer origin-destination matrix.  State-of-charge values are
exact rationals so charge traces and trip-feasibility threshold comparisons
are reproducible bit for bit.

All types are immutable value types; every operation is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .milp import Number, to_frac

Matrix = tuple[tuple[int, ...], ...]


class StructuralError(ValueError):
    """Dimension mismatch between objects; distinct from invariant violations."""


def _as_matrix(rows: Sequence[Sequence[int]]) -> Matrix:
    return tuple(tuple(int(v) for v in row) for row in rows)


@dataclass(frozen=True)
class Network:
    """Station set with deterministic integer travel times."""

    n_stations: int
    travel_time: Matrix

    def __post_init__(self):
        n = self.n_stations
        if n < 1:
            raise StructuralError("need at least one station")
        tt = _as_matrix(self.travel_time)
        object.__setattr__(self, "travel_time", tt)
        if len(tt) != n or any(len(r) != n for r in tt):
            raise StructuralError("travel_time must be n_stations x n_stations")
        for i in range(n):
            for j in range(n):
                if i != j and tt[i][j] < 1:
                    raise StructuralError(
                        f"travel_time[{i}][{j}] must be >= 1 between distinct stations")

    def t_max(self, station: int) -> int:
        """Longest inbound travel time to `station`, minus one."""
        times = [self.travel_time[j][station]
                 for j in range(self.n_stations) if j != station]
        return max(times) - 1 if times else 0

    @property
    def t_max_per_station(self) -> tuple[int, ...]:
        return tuple(self.t_max(i) for i in range(self.n_stations))

    @property
    def max_travel_time(self) -> int:
        best = 0
        for i in range(self.n_stations):
            for j in range(self.n_stations):
                if i != j:
                    best = max(best, self.travel_time[i][j])
        return best

    def pairs(self):
        for i in range(self.n_stations):
            for j in range(self.n_stations):
                if i != j:
                    yield i, j


@dataclass(frozen=True)
class Waiting:
    station: int


@dataclass(frozen=True)
class EnRoute:
    dest: int
    remaining: int


VehicleStatus = Union[Waiting, EnRoute]


@dataclass(frozen=True)
class ChargeParams:
    """Per-step charge gain while waiting / loss while driving, in (0, 1]."""

    alpha_c: Fraction
    alpha_d: Fraction

    def __post_init__(self):
        object.__setattr__(self, "alpha_c", to_frac(self.alpha_c))
        object.__setattr__(self, "alpha_d", to_frac(self.alpha_d))
        if not (0 < self.alpha_c) or not (0 < self.alpha_d):
            raise ValueError("charge/discharge rates must be positive")


@dataclass(frozen=True)
class StationCapacity:
    """Per-station charger/parking slots; caps how many vehicles may wait."""

    h: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(int(v) for v in self.h))
        if any(v < 0 for v in self.h):
            raise ValueError("capacities must be nonnegative")


@dataclass(frozen=True)
class SystemState:
    time: int
    demand: Matrix
    vehicles: tuple[VehicleStatus, ...]
    charges: Optional[tuple[Fraction, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "demand", _as_matrix(self.demand))
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        if self.charges is not None:
            object.__setattr__(
                self, "charges", tuple(to_frac(q) for q in self.charges))

    @property
    def fleet_size(self) -> int:
        return len(self.vehicles)

    def vehicle_station(self, k: int) -> int:
        """Station the vehicle occupies or is heading to."""
        v = self.vehicles[k]
        return v.station if isinstance(v, Waiting) else v.dest

    def vehicle_available(self, k: int) -> bool:
        """True if the vehicle may start an action this step."""
        v = self.vehicles[k]
        return isinstance(v, Waiting) or v.remaining == 0


@dataclass(frozen=True)
class Hold:
    pass


@dataclass(frozen=True)
class Pickup:
    origin: int
    dest: int


@dataclass(frozen=True)
class Rebalance:
    origin: int
    dest: int


VehicleAction = Union[Hold, Pickup, Rebalance]

HOLD = Hold()


@dataclass(frozen=True)
class Control:
    time: int
    actions: tuple[VehicleAction, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))


@dataclass(frozen=True)
class ArrivalBatch:
    time: int
    c: Matrix

    def __post_init__(self):
        object.__setattr__(self, "c", _as_matrix(self.c))

    @classmethod
    def zero(cls, n_stations: int, time: int = 0) -> "ArrivalBatch":
        row = (0,) * n_stations
        return cls(time=time, c=(row,) * n_stations)

    @property
    def total(self) -> int:
        return sum(sum(r) for r in self.c)


def all_hold(state: SystemState) -> Control:
    return Control(time=state.time, actions=(HOLD,) * state.fleet_size)


# ---------------------------------------------------------------------------
# feasibility predicates
# ---------------------------------------------------------------------------

def validate_state(state: SystemState, net: Network) -> list[str]:
    """Every violated state invariant; empty list means feasible."""
    n = net.n_stations
    if len(state.demand) != n or any(len(r) != n for r in state.demand):
        raise StructuralError("demand matrix does not match network size")
    violations = []
    for i in range(n):
        for j in range(n):
            d = state.demand[i][j]
            if i == j and d != 0:
                violations.append(f"demand[{i}][{i}] = {d}, diagonal must be 0")
            elif d < 0:
                violations.append(f"demand[{i}][{j}] = {d} is negative")
    for k, v in enumerate(state.vehicles):
        if isinstance(v, Waiting):
            if not 0 <= v.station < n:
                raise StructuralError(f"vehicle {k} at unknown station {v.station}")
        else:
            if not 0 <= v.dest < n:
                raise StructuralError(f"vehicle {k} heading to unknown station {v.dest}")
            tmax = net.t_max(v.dest)
            if not 0 <= v.remaining <= tmax:
                violations.append(
                    f"vehicle {k}: remaining {v.remaining} outside [0, {tmax}] "
                    f"for station {v.dest}")
    if state.charges is not None:
        if len(state.charges) != state.fleet_size:
            raise StructuralError("charge vector does not match fleet size")
        for k, q in enumerate(state.charges):
            if not 0 <= q <= 1:
                violations.append(f"charge[{k}] = {q} outside [0, 1]")
    return violations


def validate_control(state: SystemState,
                     arrivals: ArrivalBatch,
                     ctrl: Control,
                     net: Network,
                     cp: Optional[ChargeParams] = None,
                     cap: Optional[StationCapacity] = None) -> list[str]:
    """Every violated control constraint against `state`; empty = feasible."""
    n = net.n_stations
    if len(ctrl.actions) != state.fleet_size:
        raise StructuralError("control length does not match fleet size")
    if len(arrivals.c) != n or any(len(r) != n for r in arrivals.c):
        raise StructuralError("arrival matrix does not match network size")
    if cap is not None and len(cap.h) != n:
        raise StructuralError("capacity vector does not match network size")
    violations = []
    pickups: dict[tuple[int, int], int] = {}
    for k, action in enumerate(ctrl.actions):
        if isinstance(action, Hold):
            continue
        if action.origin == action.dest:
            violations.append(f"vehicle {k}: trip {action.origin}->{action.dest} "
                              "must join distinct stations")
            continue
        if not (0 <= action.origin < n and 0 <= action.dest < n):
            raise StructuralError(f"vehicle {k}: trip references unknown station")
        if not state.vehicle_available(k):
            violations.append(f"vehicle {k} is en route and cannot act")
            continue
        here = state.vehicle_station(k)
        if action.origin != here:
            violations.append(
                f"vehicle {k} departs from {action.origin} but is at {here}")
            continue
        if isinstance(action, Pickup):
            key = (action.origin, action.dest)
            pickups[key] = pickups.get(key, 0) + 1
        if cp is not None:
            if state.charges is None:
                raise StructuralError("charge params given but state has no charges")
            need = cp.alpha_d * net.travel_time[action.origin][action.dest]
            if state.charges[k] < need:
                violations.append(
                    f"vehicle {k}: charge {state.charges[k]} < {need} required "
                    f"for trip {action.origin}->{action.dest}")
    for (i, j), count in sorted(pickups.items()):
        available = state.demand[i][j] + arrivals.c[i][j]
        if count > available:
            violations.append(
                f"{count} pickups on pair ({i},{j}) but only {available} customers")
    if cap is not None:
        waiting_next = _post_step_waiting_counts(state, ctrl, net)
        for i in range(n):
            if waiting_next[i] > cap.h[i]:
                violations.append(
                    f"{waiting_next[i]} vehicles would wait at station {i}, "
                    f"capacity {cap.h[i]}")
    return violations


def _next_status(status: VehicleStatus, action: VehicleAction,
                 net: Network) -> VehicleStatus:
    if isinstance(action, (Pickup, Rebalance)):
        return EnRoute(dest=action.dest,
                       remaining=net.travel_time[action.origin][action.dest] - 1)
    if isinstance(status, Waiting):
        return status
    if status.remaining == 0:
        return Waiting(station=status.dest)
    return EnRoute(dest=status.dest, remaining=status.remaining - 1)


def _post_step_waiting_counts(state: SystemState, ctrl: Control,
                              net: Network) -> list[int]:
    counts = [0] * net.n_stations
    for k, action in enumerate(ctrl.actions):
        nxt = _next_status(state.vehicles[k], action, net)
        if isinstance(nxt, Waiting):
            counts[nxt.station] += 1
    return counts


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

def step(state: SystemState,
         ctrl: Control,
         arrivals: ArrivalBatch,
         net: Network,
         cp: Optional[ChargeParams] = None) -> SystemState:
    """Advance one time step; inputs must already be feasible."""
    bad = validate_state(state, net)
    if bad:
        raise ValueError(f"infeasible state: {bad[0]}")
    bad = validate_control(state, arrivals, ctrl, net, cp)
    if bad:
        raise ValueError(f"infeasible control: {bad[0]}")

    n = net.n_stations
    demand = [list(row) for row in state.demand]
    for i in range(n):
        for j in range(n):
            if i != j:
                demand[i][j] += arrivals.c[i][j]
    next_vehicles = []
    for k, action in enumerate(ctrl.actions):
        if isinstance(action, Pickup):
            demand[action.origin][action.dest] -= 1
        next_vehicles.append(_next_status(state.vehicles[k], action, net))

    charges = None
    if state.charges is not None:
        if cp is None:
            raise ValueError("state carries charges but no charge params given")
        charges = []
        for k, nxt in enumerate(next_vehicles):
            q = state.charges[k]
            if isinstance(nxt, Waiting):
                q = min(q + cp.alpha_c, Fraction(1))
            else:
                q = q - cp.alpha_d
            charges.append(q)
        charges = tuple(charges)

    return SystemState(time=state.time + 1,
                       demand=_as_matrix(demand),
                       vehicles=tuple(next_vehicles),
                       charges=charges)


# ---------------------------------------------------------------------------
# objectives and horizon bound
# ---------------------------------------------------------------------------

def cost_jx(state: SystemState,
            priority: Optional[Sequence[Sequence[Number]]] = None) -> Fraction:
    """Waiting-customer cost: plain count, or weighted by a priority matrix."""
    total = Fraction(0)
    for i, row in enumerate(state.demand):
        for j, d in enumerate(row):
            if d:
                w = to_frac(priority[i][j]) if priority is not None else Fraction(1)
                total += w * d
    return total


def cost_ju(ctrl: Control, net: Network) -> int:
    """Total travel time of rebalance trips (pickups and holds are free)."""
    total = 0
    for action in ctrl.actions:
        if isinstance(action, Rebalance):
            total += net.travel_time[action.origin][action.dest]
    return total


def cost_jc(state: SystemState) -> Fraction:
    """Sum of vehicle charge levels."""
    if state.charges is None:
        raise ValueError("state carries no charge information")
    return sum(state.charges, Fraction(0))


def min_stabilizing_horizon(net: Network,
                            cp: Optional[ChargeParams] = None) -> int:
    """Shortest horizon with a closed-loop regulation guarantee.

    Twice the longest trip; with charging, stretched by the worst-case
    recharge ratio (a depleted vehicle needs alpha_d/alpha_c charging steps
    per driving step before it can depart again).
    """
    t = net.max_travel_time
    if cp is None:
        return math.ceil(2 * t)
    return math.ceil(2 * (1 + Fraction(cp.alpha_d, cp.alpha_c)) * t)
