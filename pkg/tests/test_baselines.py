"""Classical dispatch policies: assignment rules, gating, determinism."""

import itertools
import random
from fractions import Fraction

import numpy as np
import pytest

from amodmpc.baselines import (CollaborativeDispatchController,
                               MarkovRedistributionController,
                               NearestNeighborController,
                               RealTimeRebalancingController, Request,
                               StepContext, solve_assignment)
from amodmpc.model import (ArrivalBatch, EnRoute, HOLD, Network, Pickup,
                           Rebalance, SystemState, Waiting, validate_control)
from helpers import random_network, random_state

NET3 = Network(3, ((0, 2, 5), (2, 0, 3), (5, 3, 0)))


def zero(n):
    return tuple((0,) * n for _ in range(n))


def ctx_for(net, state, queue, step=0):
    return StepContext(state=state, queue=queue, net=net, step=step)


def demand_of(net, queue):
    n = net.n_stations
    d = [[0] * n for _ in range(n)]
    for r in queue:
        d[r.origin][r.dest] += 1
    return tuple(tuple(row) for row in d)


class TestNearestNeighbor:
    def test_nearest_free_vehicle_wins(self):
        # request at station 0; vehicles at 1 (t=2) and 2 (t=5)
        queue = [Request(0, origin=0, dest=1, arrival_step=0)]
        state = SystemState(0, demand_of(NET3, queue),
                            (Waiting(1), Waiting(2)))
        nn = NearestNeighborController(np.random.default_rng(0))
        ctrl = nn.control(ctx_for(NET3, state, queue))
        assert ctrl.actions[0] == Rebalance(1, 0)

    def test_equidistant_tie_goes_to_lower_index(self):
        net = Network(3, ((0, 2, 2), (2, 0, 2), (2, 2, 0)))
        queue = [Request(0, origin=0, dest=1, arrival_step=0)]
        state = SystemState(0, demand_of(net, queue),
                            (Waiting(1), Waiting(2)))
        nn = NearestNeighborController(np.random.default_rng(0))
        ctrl = nn.control(ctx_for(net, state, queue))
        assert ctrl.actions[0] == Rebalance(1, 0)
        assert isinstance(ctrl.actions[1], Rebalance)  # idle random walk

    def test_colocated_vehicle_picks_up(self):
        queue = [Request(0, origin=0, dest=2, arrival_step=0)]
        state = SystemState(0, demand_of(NET3, queue), (Waiting(0),))
        nn = NearestNeighborController(np.random.default_rng(0))
        assert nn.control(ctx_for(NET3, state, queue)).actions[0] == Pickup(0, 2)

    def test_fifo_among_same_origin(self):
        queue = [Request(0, origin=0, dest=1, arrival_step=0),
                 Request(1, origin=0, dest=2, arrival_step=1)]
        state = SystemState(0, demand_of(NET3, queue), (Waiting(0),))
        nn = NearestNeighborController(np.random.default_rng(0))
        ctrl = nn.control(ctx_for(NET3, state, queue))
        assert ctrl.actions[0] == Pickup(0, 1)  # oldest request first

    def test_same_seed_same_controls(self):
        state = SystemState(0, zero(3), (Waiting(0), Waiting(1), Waiting(2)))
        runs = []
        for _ in range(2):
            nn = NearestNeighborController(np.random.default_rng(42))
            runs.append([nn.control(ctx_for(NET3, state, [], step=t))
                         for t in range(5)])
        assert runs[0] == runs[1]


class TestAssignmentLP:
    def test_matches_brute_force_permutations(self):
        rng = random.Random(8)
        for _ in range(25):
            nv = rng.randint(1, 6)
            nr = rng.randint(1, 6)
            k = min(nv, nr)
            costs = [[float(rng.randint(0, 9)) for _ in range(nr)]
                     for _ in range(nv)]
            picked = solve_assignment(costs, k)
            got = sum(costs[a][b] for a, b in picked)
            best = min(
                sum(costs[v][r] for v, r in zip(vs, rs))
                for vs in itertools.permutations(range(nv), k)
                for rs in [range(nr)] for rs in itertools.permutations(range(nr), k))
            assert got == pytest.approx(best, abs=1e-9)
            assert len(picked) == k


class TestCollaborativeDispatch:
    def test_holds_below_threshold(self):
        queue = [Request(i, origin=0, dest=1, arrival_step=0)
                 for i in range(3)]
        state = SystemState(0, demand_of(NET3, queue),
                            (Waiting(0), Waiting(1)))
        cd = CollaborativeDispatchController(threshold=4)
        ctrl = cd.control(ctx_for(NET3, state, queue))
        assert all(a == HOLD for a in ctrl.actions)

    def test_batch_dispatch_at_threshold(self):
        queue = [Request(i, origin=0, dest=1, arrival_step=0)
                 for i in range(4)]
        state = SystemState(0, demand_of(NET3, queue),
                            (Waiting(0), Waiting(1)))
        cd = CollaborativeDispatchController(threshold=4)
        ctrl = cd.control(ctx_for(NET3, state, queue))
        assert ctrl.actions[0] == Pickup(0, 1)       # already on site
        assert ctrl.actions[1] == Rebalance(1, 0)    # moves to the queue

    def test_time_varying_threshold(self):
        queue = [Request(0, origin=0, dest=1, arrival_step=0)]
        state = SystemState(0, demand_of(NET3, queue), (Waiting(0),))
        cd = CollaborativeDispatchController(threshold=lambda t: 1 if t else 9)
        assert cd.control(ctx_for(NET3, state, queue, step=0)).actions[0] == HOLD
        cd.reset()
        assert cd.control(ctx_for(NET3, state, queue, step=5)).actions[0] == \
            Pickup(0, 1)


class TestMarkovRedistribution:
    @staticmethod
    def make(rng_seed=0, est=None):
        est = est or (lambda s: zero(3))
        return MarkovRedistributionController(
            np.random.default_rng(rng_seed), demand_estimate=est)

    def test_fixed_point_no_moves(self):
        # uniform target (zero estimate, zero waiting) and uniform free fleet
        state = SystemState(0, zero(3), (Waiting(0), Waiting(1), Waiting(2)))
        ctrl = self.make().control(ctx_for(NET3, state, []))
        assert all(a == HOLD for a in ctrl.actions)

    def test_mass_moves_toward_demand(self):
        net = Network(2, ((0, 2), (2, 0)))
        # both vehicles idle at 0; all expected demand at 1
        est = lambda s: ((0.0, 0.0), (3.0, 0.0))
        state = SystemState(0, zero(2), (Waiting(0), Waiting(0)))
        moved = 0
        for seed in range(10):
            ctrl = MarkovRedistributionController(
                np.random.default_rng(seed), est).control(
                    ctx_for(net, state, []))
            moved += sum(1 for a in ctrl.actions if a == Rebalance(0, 1))
        assert moved > 0

    def test_pickups_before_rebalancing(self):
        queue = [Request(0, origin=1, dest=2, arrival_step=0)]
        state = SystemState(0, demand_of(NET3, queue), (Waiting(1),))
        ctrl = self.make().control(ctx_for(NET3, state, queue))
        assert ctrl.actions[0] == Pickup(1, 2)

    def test_same_seed_same_controls(self):
        est = lambda s: ((0.0, 1.0, 0.0), (0.0, 0.0, 2.0), (1.0, 0.0, 0.0))
        state = SystemState(0, zero(3), (Waiting(0), Waiting(0), Waiting(1)))
        a = self.make(7, est).control(ctx_for(NET3, state, []))
        b = self.make(7, est).control(ctx_for(NET3, state, []))
        assert a == b


class TestRealTimeRebalancing:
    def test_ships_surplus_to_deficit(self):
        net = Network(2, ((0, 2), (2, 0)))
        # counts [3, 1], desired [2, 2] -> ship one 0 -> 1
        state = SystemState(0, zero(2),
                            (Waiting(0), Waiting(0), Waiting(0), Waiting(1)))
        rr = RealTimeRebalancingController(epoch=20)
        ctrl = rr.control(ctx_for(net, state, [], step=0))
        assert sum(1 for a in ctrl.actions if a == Rebalance(0, 1)) == 1

    def test_balanced_fleet_holds(self):
        net = Network(2, ((0, 2), (2, 0)))
        state = SystemState(0, zero(2), (Waiting(0), Waiting(1)))
        rr = RealTimeRebalancingController(epoch=20)
        ctrl = rr.control(ctx_for(net, state, [], step=0))
        assert all(a == HOLD for a in ctrl.actions)

    def test_off_epoch_pickups_only(self):
        net = Network(2, ((0, 2), (2, 0)))
        queue = [Request(0, origin=0, dest=1, arrival_step=0)]
        state = SystemState(0, demand_of(net, queue),
                            (Waiting(0), Waiting(0), Waiting(0), Waiting(1)))
        rr = RealTimeRebalancingController(epoch=20)
        ctrl = rr.control(ctx_for(net, state, queue, step=7))
        assert ctrl.actions[0] == Pickup(0, 1)
        assert all(a in (HOLD, Pickup(0, 1)) for a in ctrl.actions)

    def test_en_route_vehicles_counted_at_destination(self):
        net = Network(2, ((0, 2), (2, 0)))
        # one waiting at 0, one driving toward 0: counts [2, 0], desired [1,1]
        state = SystemState(0, zero(2), (Waiting(0), EnRoute(0, 1)))
        rr = RealTimeRebalancingController(epoch=20)
        ctrl = rr.control(ctx_for(net, state, [], step=0))
        assert ctrl.actions[0] == Rebalance(0, 1)  # only the free one can move
        assert ctrl.actions[1] == HOLD


class TestAllControlsFeasible:
    def test_random_rollouts_pass_validation(self):
        rng = random.Random(31)
        for trial in range(40):
            net = random_network(rng, rng.randint(2, 4))
            state = random_state(rng, net, rng.randint(1, 5), max_demand=1)
            queue = []
            rid = 0
            for i in range(net.n_stations):
                for j in range(net.n_stations):
                    for _ in range(state.demand[i][j]):
                        queue.append(Request(rid, origin=i, dest=j,
                                             arrival_step=0))
                        rid += 1
            controllers = [
                NearestNeighborController(np.random.default_rng(trial)),
                CollaborativeDispatchController(threshold=1),
                MarkovRedistributionController(
                    np.random.default_rng(trial),
                    demand_estimate=lambda s: zero(net.n_stations)),
                RealTimeRebalancingController(epoch=2),
            ]
            for controller in controllers:
                ctrl = controller.control(
                    ctx_for(net, state, list(queue), step=trial % 3))
                bad = validate_control(
                    state, ArrivalBatch.zero(net.n_stations), ctrl, net)
                assert not bad, f"{controller.name} trial {trial}: {bad}"
