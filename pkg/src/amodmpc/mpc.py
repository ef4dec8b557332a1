"""Receding-horizon dispatch: builds the per-step MILP over the horizon
(with or without charging constraints), solves it, and extracts the
first-step control.

State variables over the horizon are kept as auxiliary MILP variables linked
by equality rows rather than substituted away: the formulation stays
readable and the optimizer's internal trajectory can be checked against the
simulator rollout.  Waiting-demand variables are continuous (their
integrality follows from binary trip variables and integer data).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

from .branch_bound import solve_milp
from .milp import (LinearExpr, Problem, Sense, Solution, Status, VarKind,
                   to_frac)
from .model import (ArrivalBatch, ChargeParams, Control, EnRoute, HOLD,
                    Network, Pickup, Rebalance, StationCapacity, SystemState,
                    VehicleAction, Waiting, min_stabilizing_horizon)
from .simplex import SolverParams

PriorityInput = Union[Sequence[Sequence["Number"]], Sequence[Sequence[Sequence["Number"]]], None]


@dataclass(frozen=True)
class MpcConfig:
    t_hor: int
    rho1: Fraction = Fraction(1, 100)     # rebalance-distance weight
    rho2: Fraction = Fraction(1, 1000)    # per-step charge reward
    rho_c: Fraction = Fraction(0)         # terminal charge weight
    rho_u: Fraction = Fraction(0)         # terminal uniform-fleet weight
    charging_enabled: bool = False
    priority: PriorityInput = None        # static N x N weights, or one per step
    capacity: Optional[StationCapacity] = None
    # exact reduction: drop pickup/demand variables for OD pairs that cannot
    # possibly hold customers within the horizon
    prune_inactive_pairs: bool = True
    # emit the redundant one-place-per-vehicle rows for cross-checking
    debug_state_rows: bool = False

    def __post_init__(self):
        if self.t_hor < 1:
            raise ValueError("horizon must be at least 1 step")
        for name in ("rho1", "rho2", "rho_c", "rho_u"):
            object.__setattr__(self, name, to_frac(getattr(self, name)))
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class ArrivalForecast:
    """Predicted (or oracle) arrival batches for the horizon steps t..t+T-1."""

    batches: tuple[ArrivalBatch, ...]

    def __post_init__(self):
        object.__setattr__(self, "batches", tuple(self.batches))

    def __len__(self):
        return len(self.batches)

    def __getitem__(self, i):
        return self.batches[i]

    @classmethod
    def zero(cls, net: Network, start: int, t_hor: int) -> "ArrivalForecast":
        return cls(tuple(ArrivalBatch.zero(net.n_stations, start + k)
                         for k in range(t_hor)))


class VarIndex:
    """Bijection between structured variable keys and MILP variable ids.

    Keys use absolute time steps: controls v/w at steps t0..t0+T-1, states
    u/p/d/q at steps t0+1..t0+T.
    """

    def __init__(self, t0: int, t_hor: int):
        self.t0 = t0
        self.t_hor = t_hor
        self.v: dict[tuple[int, int, int, int], int] = {}   # (k, i, j, step)
        self.w: dict[tuple[int, int, int, int], int] = {}
        self.u: dict[tuple[int, int, int], int] = {}        # (k, i, step)
        self.p: dict[tuple[int, int, int, int], int] = {}   # (k, i, Ti, step)
        self.d: dict[tuple[int, int, int], int] = {}        # (i, j, step)
        self.q: dict[tuple[int, int], int] = {}             # (k, step)
        self.slack: dict[int, int] = {}                     # station -> id


def _priority_at(cfg: MpcConfig, n: int, offset: int) -> Optional[list[list[Fraction]]]:
    """Weight matrix applied to waiting demand at horizon offset (1-based)."""
    if cfg.priority is None:
        return None
    first = cfg.priority[0]
    if first and isinstance(first[0], (list, tuple)):
        sched = cfg.priority[min(offset - 1, len(cfg.priority) - 1)]
    else:
        sched = cfg.priority
    return [[to_frac(sched[i][j]) for j in range(n)] for i in range(n)]


def _initial_u_p(state: SystemState, net: Network):
    """Constant u/p occupancy terms at the start of the horizon."""
    u0: dict[tuple[int, int], int] = {}
    p0: dict[tuple[int, int, int], int] = {}
    for k, st in enumerate(state.vehicles):
        if isinstance(st, Waiting):
            u0[(k, st.station)] = 1
        else:
            p0[(k, st.dest, st.remaining)] = 1
    return u0, p0


def build_mpc_problem(state: SystemState,
                      forecast: Union[ArrivalForecast, Sequence[ArrivalBatch]],
                      net: Network,
                      cfg: MpcConfig,
                      cp: Optional[ChargeParams] = None) -> tuple[Problem, VarIndex]:
    """Shared builder behind :func:`build_alg1` and :func:`build_alg2`."""
    n, m, T = net.n_stations, state.fleet_size, cfg.t_hor
    batches = list(forecast.batches if isinstance(forecast, ArrivalForecast)
                   else forecast)
    if len(batches) != T:
        raise ValueError(f"forecast length {len(batches)} != horizon {T}")
    for b in batches:
        if len(b.c) != n:
            raise ValueError("forecast batch does not match network size")
    if cfg.charging_enabled:
        if cp is None:
            raise ValueError("charging enabled but no charge params given")
        if state.charges is None:
            raise ValueError("charging enabled but state has no charges")
        if cfg.rho2 == 0 and cfg.rho_c == 0:
            warnings.warn(
                "charging enabled with rho2 = rho_c = 0: the charge relaxation "
                "is not pushed tight and simulated charge may exceed the "
                "optimizer's charge trajectory", stacklevel=2)

    t0 = state.time
    prob = Problem(name=f"mpc_t{t0}")
    idx = VarIndex(t0, T)

    # active OD pairs per offset: demand can be positive at control step tau
    active: list[set[tuple[int, int]]] = []
    running: set[tuple[int, int]] = set()
    for i, j in net.pairs():
        if state.demand[i][j] > 0:
            running.add((i, j))
    for tau in range(T):
        for i, j in net.pairs():
            if batches[tau].c[i][j] > 0:
                running.add((i, j))
        active.append(set(running) if cfg.prune_inactive_pairs
                      else set(net.pairs()))

    # earliest offset at which each vehicle can start an action
    avail = [0 if state.vehicle_available(k)
             else state.vehicles[k].remaining for k in range(m)]

    # --- variables -----------------------------------------------------
    for tau in range(T):
        step_abs = t0 + tau
        for k in range(m):
            if tau < avail[k]:
                continue
            for i, j in net.pairs():
                trip_need = (cp.alpha_d * net.travel_time[i][j]
                             if cfg.charging_enabled else None)
                if (i, j) in active[tau]:
                    if not (cfg.charging_enabled and tau == 0
                            and state.charges[k] < trip_need):
                        idx.v[(k, i, j, step_abs)] = prob.add_variable(
                            f"v[{k}][{i}][{j}][{step_abs}]", VarKind.BINARY)
                if not (cfg.charging_enabled and tau == 0
                        and state.charges[k] < trip_need):
                    idx.w[(k, i, j, step_abs)] = prob.add_variable(
                        f"w[{k}][{i}][{j}][{step_abs}]", VarKind.BINARY)
    for tau in range(1, T + 1):
        step_abs = t0 + tau
        for k in range(m):
            for i in range(n):
                idx.u[(k, i, step_abs)] = prob.add_variable(
                    f"u[{k}][{i}][{step_abs}]", VarKind.BINARY)
                for ti in range(net.t_max(i) + 1):
                    idx.p[(k, i, ti, step_abs)] = prob.add_variable(
                        f"p[{k}][{i}][{ti}][{step_abs}]", VarKind.BINARY)
        for i, j in net.pairs():
            if (i, j) in active[tau - 1]:
                idx.d[(i, j, step_abs)] = prob.add_variable(
                    f"d[{i}][{j}][{step_abs}]", VarKind.CONTINUOUS, lower=0)
        if cfg.charging_enabled:
            for k in range(m):
                idx.q[(k, step_abs)] = prob.add_variable(
                    f"q[{k}][{step_abs}]", VarKind.CONTINUOUS, lower=0, upper=1)

    u0, p0 = _initial_u_p(state, net)

    def u_term(k, i, tau):
        """(expr terms contribution, constant) for u^k_i at offset tau."""
        if tau == 0:
            return None, u0.get((k, i), 0)
        return idx.u[(k, i, t0 + tau)], 0

    def p_term(k, i, ti, tau):
        if tau == 0:
            return None, p0.get((k, i, ti), 0)
        return idx.p.get((k, i, ti, t0 + tau)), 0

    def d_term(i, j, tau):
        if tau == 0:
            return None, state.demand[i][j]
        return idx.d.get((i, j, t0 + tau)), 0

    # --- dynamics rows -------------------------------------------------
    for tau in range(T):
        sa = t0 + tau       # control step
        sn = t0 + tau + 1   # successor state step
        # demand propagation + pickup capacity
        for i, j in net.pairs():
            if (i, j) not in active[tau]:
                continue
            terms: dict[int, Fraction] = {idx.d[(i, j, sn)]: Fraction(1)}
            dv, dc = d_term(i, j, tau)
            if dv is not None:
                terms[dv] = terms.get(dv, Fraction(0)) - 1
            rhs = Fraction(dc + batches[tau].c[i][j])
            cap_terms: dict[int, Fraction] = {}
            for k in range(m):
                vid = idx.v.get((k, i, j, sa))
                if vid is not None:
                    terms[vid] = terms.get(vid, Fraction(0)) + 1
                    cap_terms[vid] = Fraction(1)
            prob.add_constraint(LinearExpr(terms), Sense.EQ, rhs,
                                name=f"dem[{i}][{j}][{sn}]")
            if cap_terms:
                if dv is not None:
                    cap_terms[dv] = Fraction(-1)
                prob.add_constraint(LinearExpr(cap_terms), Sense.LE,
                                    Fraction(dc + batches[tau].c[i][j]),
                                    name=f"pick[{i}][{j}][{sa}]")
        # trip-progress propagation
        for k in range(m):
            for i in range(n):
                tmax = net.t_max(i)
                for ti in range(tmax + 1):
                    terms = {idx.p[(k, i, ti, sn)]: Fraction(1)}
                    rhs = Fraction(0)
                    if ti < tmax:
                        pv, pc = p_term(k, i, ti + 1, tau)
                        if pv is not None:
                            terms[pv] = terms.get(pv, Fraction(0)) - 1
                        rhs += pc
                    for j in range(n):
                        if j == i or net.travel_time[j][i] - 1 != ti:
                            continue
                        for sym in (idx.v, idx.w):
                            vid = sym.get((k, j, i, sa))
                            if vid is not None:
                                terms[vid] = terms.get(vid, Fraction(0)) - 1
                    prob.add_constraint(LinearExpr(terms), Sense.EQ, rhs,
                                        name=f"prog[{k}][{i}][{ti}][{sn}]")
            # waiting propagation
            for i in range(n):
                terms = {idx.u[(k, i, sn)]: Fraction(1)}
                uv, uc = u_term(k, i, tau)
                rhs = Fraction(uc)
                if uv is not None:
                    terms[uv] = terms.get(uv, Fraction(0)) - 1
                pv, pc = p_term(k, i, 0, tau)
                rhs += pc
                if pv is not None:
                    terms[pv] = terms.get(pv, Fraction(0)) - 1
                for j in range(n):
                    if j == i:
                        continue
                    for sym in (idx.v, idx.w):
                        vid = sym.get((k, i, j, sa))
                        if vid is not None:
                            terms[vid] = terms.get(vid, Fraction(0)) + 1
                prob.add_constraint(LinearExpr(terms), Sense.EQ, rhs,
                                    name=f"wait[{k}][{i}][{sn}]")
            # one task at a time
            terms = {}
            for i in range(n):
                terms[idx.u[(k, i, sn)]] = Fraction(1)
            for i, j in net.pairs():
                for sym in (idx.v, idx.w):
                    vid = sym.get((k, i, j, sa))
                    if vid is not None:
                        terms[vid] = terms.get(vid, Fraction(0)) + 1
            prob.add_constraint(LinearExpr(terms), Sense.LE, 1,
                                name=f"task[{k}][{sa}]")

        if cfg.capacity is not None:
            for i in range(n):
                terms = {idx.u[(k, i, sn)]: Fraction(1) for k in range(m)}
                prob.add_constraint(LinearExpr(terms), Sense.LE,
                                    cfg.capacity.h[i], name=f"cap[{i}][{sn}]")

        if cfg.debug_state_rows:
            for k in range(m):
                terms = {}
                for i in range(n):
                    terms[idx.u[(k, i, sn)]] = Fraction(1)
                    for ti in range(net.t_max(i) + 1):
                        terms[idx.p[(k, i, ti, sn)]] = Fraction(1)
                prob.add_constraint(LinearExpr(terms), Sense.EQ, 1,
                                    name=f"place[{k}][{sn}]")

    # --- charging rows -------------------------------------------------
    if cfg.charging_enabled:
        for tau in range(T):
            sn = t0 + tau + 1
            for k in range(m):
                # charge propagation upper envelope
                terms = {idx.q[(k, sn)]: Fraction(1)}
                rhs = Fraction(0)
                if tau == 0:
                    rhs += state.charges[k]
                else:
                    terms[idx.q[(k, t0 + tau)]] = Fraction(-1)
                for i in range(n):
                    terms[idx.u[(k, i, sn)]] = terms.get(
                        idx.u[(k, i, sn)], Fraction(0)) - cp.alpha_c
                    for ti in range(net.t_max(i) + 1):
                        terms[idx.p[(k, i, ti, sn)]] = terms.get(
                            idx.p[(k, i, ti, sn)], Fraction(0)) + cp.alpha_d
                prob.add_constraint(LinearExpr(terms), Sense.LE, rhs,
                                    name=f"chg[{k}][{sn}]")
                # full-battery envelope
                terms = {idx.q[(k, sn)]: Fraction(1)}
                for i in range(n):
                    for ti in range(net.t_max(i) + 1):
                        terms[idx.p[(k, i, ti, sn)]] = terms.get(
                            idx.p[(k, i, ti, sn)], Fraction(0)) + cp.alpha_d
                prob.add_constraint(LinearExpr(terms), Sense.LE, 1,
                                    name=f"full[{k}][{sn}]")
        # trip feasibility: enough charge to finish the trip at departure
        for (k, i, j, sa), vid in list(idx.v.items()) + list(idx.w.items()):
            tau = sa - t0
            if tau == 0:
                continue  # departure charge is a constant; handled at build
            need = cp.alpha_d * net.travel_time[i][j]
            sym = "v" if (k, i, j, sa) in idx.v and idx.v[(k, i, j, sa)] == vid else "w"
            prob.add_constraint(
                LinearExpr({vid: need, idx.q[(k, sa)]: Fraction(-1)}),
                Sense.LE, 0, name=f"rng_{sym}[{k}][{i}][{j}][{sa}]")

    # --- objective -----------------------------------------------------
    obj: dict[int, Fraction] = {}
    obj_const = Fraction(0)
    for tau in range(T):
        q_mat = _priority_at(cfg, n, tau + 1)
        for i, j in net.pairs():
            weight = q_mat[i][j] if q_mat is not None else Fraction(1)
            dv = idx.d.get((i, j, t0 + tau + 1))
            if dv is not None:
                obj[dv] = obj.get(dv, Fraction(0)) + weight
    for (k, i, j, sa), wid in idx.w.items():
        obj[wid] = obj.get(wid, Fraction(0)) + cfg.rho1 * net.travel_time[i][j]
    if cfg.charging_enabled:
        for (k, sa), qid in idx.q.items():
            obj[qid] = obj.get(qid, Fraction(0)) - cfg.rho2
            if sa == t0 + T:
                obj[qid] -= cfg.rho_c
    if cfg.rho_u > 0:
        target = math.ceil(m / n)
        for i in range(n):
            sid = prob.add_variable(f"s[{i}]", VarKind.CONTINUOUS, lower=0)
            idx.slack[i] = sid
            terms = {idx.u[(k, i, t0 + T)]: Fraction(1) for k in range(m)}
            terms[sid] = Fraction(-1)
            prob.add_constraint(LinearExpr(terms), Sense.LE, target,
                                name=f"uni_hi[{i}]")
            terms = {idx.u[(k, i, t0 + T)]: Fraction(-1) for k in range(m)}
            terms[sid] = Fraction(-1)
            prob.add_constraint(LinearExpr(terms), Sense.LE, -target,
                                name=f"uni_lo[{i}]")
            obj[sid] = obj.get(sid, Fraction(0)) + cfg.rho_u
    prob.set_objective(LinearExpr(obj, obj_const))
    return prob, idx


def build_alg1(state: SystemState,
               forecast: Union[ArrivalForecast, Sequence[ArrivalBatch]],
               net: Network,
               cfg: MpcConfig) -> tuple[Problem, VarIndex]:
    """Horizon MILP without charging constraints."""
    if cfg.charging_enabled:
        raise ValueError("config has charging enabled; use build_alg2")
    return build_mpc_problem(state, forecast, net, cfg, cp=None)


def build_alg2(state: SystemState,
               forecast: Union[ArrivalForecast, Sequence[ArrivalBatch]],
               net: Network,
               cfg: MpcConfig,
               cp: ChargeParams) -> tuple[Problem, VarIndex]:
    """Horizon MILP with battery charge dynamics and range limits."""
    if not cfg.charging_enabled:
        raise ValueError("config has charging disabled; use build_alg1")
    return build_mpc_problem(state, forecast, net, cfg, cp=cp)


class ExtractionError(RuntimeError):
    """Solver output cannot be decoded into a clean per-vehicle control."""


def extract_control_at(solution: Solution, index: VarIndex, t: int,
                       fleet_size: int, tol: float = 1e-6) -> Control:
    """Decode the per-vehicle actions chosen for absolute step `t`."""
    if not solution.has_values:
        raise ExtractionError(f"solution has no values ({solution.status})")
    actions: list[VehicleAction] = [HOLD] * fleet_size
    chosen = [False] * fleet_size
    for sym, maker in ((index.v, Pickup), (index.w, Rebalance)):
        for (k, i, j, sa), vid in sym.items():
            if sa != t:
                continue
            val = solution.values[vid]
            if abs(val - round(val)) > tol:
                raise ExtractionError(
                    f"fractional value {val} on binary variable id {vid}")
            if round(val) == 1:
                if chosen[k]:
                    raise ExtractionError(
                        f"vehicle {k} has two actions set at step {t}")
                actions[k] = maker(origin=i, dest=j)
                chosen[k] = True
    return Control(time=t, actions=tuple(actions))


def extract_first_control(solution: Solution, index: VarIndex,
                          fleet_size: int, tol: float = 1e-6) -> Control:
    return extract_control_at(solution, index, index.t0, fleet_size, tol)


@dataclass
class MpcDiagnostics:
    status: Status
    objective: Optional[float]
    bound: Optional[float]
    nodes: int
    wall_time: float
    n_variables: int
    n_constraints: int
    horizon_below_guarantee: bool


Solver = Callable[[Problem], Solution]


def mpc_step(state: SystemState,
             forecast: Union[ArrivalForecast, Sequence[ArrivalBatch]],
             net: Network,
             cfg: MpcConfig,
             cp: Optional[ChargeParams] = None,
             solver: Optional[Solver] = None,
             params: Optional[SolverParams] = None) -> tuple[Control, MpcDiagnostics]:
    """One receding-horizon iteration: build, solve, extract first control."""
    params = params or SolverParams()
    if solver is None:
        solver = lambda prob: solve_milp(prob, params)
    t_start = time.monotonic()
    prob, idx = build_mpc_problem(state, forecast, net, cfg, cp)
    sol = solver(prob)
    if sol.status is Status.INFEASIBLE:
        raise RuntimeError(
            "MPC problem reported infeasible; the all-hold control is always "
            "feasible, so this indicates a formulation or solver bug")
    if sol.status is Status.UNBOUNDED:
        raise RuntimeError("MPC problem reported unbounded")
    ctrl = extract_first_control(sol, idx, state.fleet_size,
                                 tol=max(params.integrality_tol, 1e-9))
    guarantee = min_stabilizing_horizon(net, cp if cfg.charging_enabled else None)
    diag = MpcDiagnostics(
        status=sol.status,
        objective=sol.objective,
        bound=sol.bound,
        nodes=sol.nodes,
        wall_time=time.monotonic() - t_start,
        n_variables=prob.n_variables,
        n_constraints=len(prob.constraints),
        horizon_below_guarantee=cfg.t_hor < guarantee,
    )
    return ctrl, diag


def decode_trajectory(solution: Solution, index: VarIndex, net: Network,
                      fleet_size: int):
    """The optimizer's internal state trajectory, for consistency checks.

    Returns a list (one entry per horizon step t0+1..t0+T) of dicts with
    keys 'd', 'u', 'p', 'q' mapping structured keys to values.
    """
    out = []
    for tau in range(1, index.t_hor + 1):
        sa = index.t0 + tau
        entry = {
            "d": {(i, j): solution.values[vid]
                  for (i, j, s), vid in index.d.items() if s == sa},
            "u": {(k, i): solution.values[vid]
                  for (k, i, s), vid in index.u.items() if s == sa},
            "p": {(k, i, ti): solution.values[vid]
                  for (k, i, ti, s), vid in index.p.items() if s == sa},
            "q": {k: solution.values[vid]
                  for (k, s), vid in index.q.items() if s == sa},
        }
        out.append(entry)
    return out
