"""Problem container: variables, expressions, rows, objective sense."""

from fractions import Fraction

import pytest

from amodmpc.milp import (LinearExpr, Problem, ProblemError, Sense, VarKind,
                          to_frac)


class TestToFrac:
    def test_decimal_float_is_exact(self):
        assert to_frac(0.1) == Fraction(1, 10)
        assert to_frac(0.2) == Fraction(1, 5)

    def test_string_fraction(self):
        assert to_frac("3/7") == Fraction(3, 7)

    def test_int_passthrough(self):
        assert to_frac(5) == Fraction(5)


class TestVariables:
    def test_dense_ids(self):
        prob = Problem("p")
        a = prob.add_variable("a")
        b = prob.add_variable("b", kind=VarKind.BINARY)
        assert (a, b) == (0, 1)

    def test_binary_forces_unit_box(self):
        prob = Problem("p")
        vid = prob.add_variable("b", kind=VarKind.BINARY)
        var = prob.variables[vid]
        assert (var.lower, var.upper) == (0, 1)

    def test_duplicate_name_rejected(self):
        prob = Problem("p")
        prob.add_variable("x")
        with pytest.raises(ProblemError):
            prob.add_variable("x")

    def test_whitespace_name_rejected(self):
        prob = Problem("p")
        with pytest.raises(ProblemError):
            prob.add_variable("bad name")

    def test_integer_ids(self):
        prob = Problem("p")
        prob.add_variable("x")
        b = prob.add_variable("b", kind=VarKind.BINARY)
        g = prob.add_variable("g", kind=VarKind.INTEGER, upper=4)
        assert prob.integer_ids() == [b, g]


class TestExpressions:
    def test_addition_merges_terms(self):
        e = LinearExpr({0: 1, 1: 2}) + LinearExpr({1: 3, 2: -1}, constant=4)
        assert e.terms == ((0, Fraction(1)), (1, Fraction(5)),
                           (2, Fraction(-1)))
        assert e.constant == 4

    def test_scaled_and_negated(self):
        e = LinearExpr({0: 2}, constant=1).scaled(Fraction(1, 2))
        assert e.terms == ((0, Fraction(1)),)
        assert e.constant == Fraction(1, 2)
        assert e.negated().constant == Fraction(-1, 2)

    def test_value_evaluation(self):
        e = LinearExpr({0: 2, 1: -1}, constant=3)
        assert e.value((4, 5)) == 2 * 4 - 5 + 3


class TestObjectiveAndRows:
    def test_constant_folds_into_rhs(self):
        prob = Problem("p")
        x = prob.add_variable("x")
        prob.add_constraint(LinearExpr({x: 1}, constant=2), Sense.LE, 5)
        row = prob.constraints[0]
        assert row.rhs == 3
        assert row.expr.constant == 0

    def test_maximize_negates_internally(self):
        prob = Problem("p")
        x = prob.add_variable("x", upper=10)
        prob.set_objective(LinearExpr({x: 3}), maximize=True)
        assert prob.maximize
        assert prob.objective.terms == ((x, Fraction(-3)),)
        # internal (minimization) values map back to the user's sense
        assert prob.user_objective(-30.0) == 30.0
