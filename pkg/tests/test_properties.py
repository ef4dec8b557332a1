"""Property-based invariants over randomized models and problems."""

import random
from fractions import Fraction

from hypothesis import given, settings, strategies as st

from amodmpc.lp_io import parse_lp, write_lp
from amodmpc.milp import LinearExpr, Problem, Sense, VarKind
from amodmpc.model import (ArrivalBatch, ChargeParams, Network, SystemState,
                           Waiting, cost_jx, step, validate_state)
from helpers import random_feasible_control, random_network, random_state

import io

import test_lp_io


@st.composite
def model_instances(draw):
    seed = draw(st.integers(0, 2**31))
    rng = random.Random(seed)
    net = random_network(rng, rng.randint(1, 5))
    charged = rng.random() < 0.5
    state = random_state(rng, net, rng.randint(1, 6), with_charges=charged)
    cp = ChargeParams(Fraction(1, 5), Fraction(1, 10)) if charged else None
    return rng, net, state, cp


class TestModelProperties:
    @given(model_instances())
    @settings(max_examples=150, deadline=None)
    def test_step_stays_feasible(self, inst):
        rng, net, state, cp = inst
        ctrl = random_feasible_control(rng, state, net, cp)
        nxt = step(state, ctrl, ArrivalBatch.zero(net.n_stations), net, cp)
        assert validate_state(nxt, net) == []

    @given(model_instances())
    @settings(max_examples=150, deadline=None)
    def test_customer_conservation(self, inst):
        rng, net, state, cp = inst
        ctrl = random_feasible_control(rng, state, net, cp)
        n = net.n_stations
        arrivals = ArrivalBatch(
            state.time, tuple(tuple(0 if i == j else rng.randint(0, 2)
                                    for j in range(n)) for i in range(n)))
        nxt = step(state, ctrl, arrivals, net, cp)
        picked = sum(1 for a in ctrl.actions
                     if a.__class__.__name__ == "Pickup")
        assert cost_jx(nxt) == cost_jx(state) + arrivals.total - picked

    @given(model_instances())
    @settings(max_examples=150, deadline=None)
    def test_charges_stay_in_unit_interval(self, inst):
        rng, net, state, cp = inst
        if cp is None:
            return
        for _ in range(5):
            ctrl = random_feasible_control(rng, state, net, cp)
            state = step(state, ctrl, ArrivalBatch.zero(net.n_stations),
                         net, cp)
            assert all(0 <= q <= 1 for q in state.charges)


@st.composite
def lp_problems(draw):
    seed = draw(st.integers(0, 2**31))
    rng = random.Random(seed)
    prob = Problem("h")
    ids = []
    for i in range(rng.randint(1, 6)):
        kind = rng.choice(list(VarKind))
        if kind is VarKind.BINARY:
            ids.append(prob.add_variable(f"x{i}", kind=kind))
        else:
            ids.append(prob.add_variable(
                f"x{i}", kind=kind,
                lower=rng.choice([0, -2, None]),
                upper=rng.choice([None, 5])))
    for _ in range(rng.randint(0, 4)):
        terms = {v: Fraction(rng.randint(-5, 5), rng.choice([1, 2, 5]))
                 for v in ids if rng.random() < 0.7}
        if terms:
            prob.add_constraint(LinearExpr(terms),
                                rng.choice(list(Sense)),
                                Fraction(rng.randint(-9, 9),
                                         rng.choice([1, 4])))
    prob.set_objective(LinearExpr({v: rng.randint(-3, 3) for v in ids}),
                       maximize=rng.random() < 0.5)
    return prob


class TestLpFormatProperties:
    @given(lp_problems())
    @settings(max_examples=150, deadline=None)
    def test_write_parse_round_trip(self, prob):
        buf = io.StringIO()
        write_lp(prob, buf)
        assert test_lp_io.problems_equal(prob, parse_lp(buf.getvalue()))
