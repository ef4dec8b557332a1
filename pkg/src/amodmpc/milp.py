"""Generic mixed-integer linear program container.

Coefficients, bounds, and right-hand sides are exact rationals
(:class:`fractions.Fraction`); conversion to floating point happens only
inside the solver.  Problems are built incrementally (single writer) and
treated as immutable once handed to a solver.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

Number = Union[int, float, str, Fraction]


def to_frac(x: Number) -> Fraction:
    """Convert to an exact rational; floats go through their decimal repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


class VarKind(enum.Enum):
    BINARY = "binary"
    INTEGER = "integer"
    CONTINUOUS = "continuous"


class Sense(enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT_REACHED = "limit_reached"


class ProblemError(ValueError):
    """Malformed problem construction (duplicate names, unknown ids, ...)."""


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    kind: VarKind
    lower: Optional[Fraction]  # None encodes -inf
    upper: Optional[Fraction]  # None encodes +inf

    def __post_init__(self):
        if self.kind is VarKind.BINARY:
            if self.lower != 0 or self.upper != 1:
                raise ProblemError(
                    f"binary variable {self.name!r} must have bounds [0, 1]")
        if self.lower is not None and self.upper is not None:
            if self.lower > self.upper:
                raise ProblemError(
                    f"variable {self.name!r}: lower {self.lower} > upper {self.upper}")


class LinearExpr:
    """Sparse linear expression: sorted (var id, coefficient) terms + constant."""

    __slots__ = ("terms", "constant")

    def __init__(self,
                 terms: Union[Mapping[int, Number], Iterable[tuple[int, Number]], None] = None,
                 constant: Number = 0):
        coeffs: dict[int, Fraction] = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, Mapping) else terms
            for vid, c in items:
                c = to_frac(c)
                coeffs[vid] = coeffs.get(vid, Fraction(0)) + c
        self.terms: tuple[tuple[int, Fraction], ...] = tuple(
            (vid, c) for vid, c in sorted(coeffs.items()) if c != 0)
        self.constant: Fraction = to_frac(constant)

    def __add__(self, other: "LinearExpr") -> "LinearExpr":
        merged = dict(self.terms)
        for vid, c in other.terms:
            merged[vid] = merged.get(vid, Fraction(0)) + c
        return LinearExpr(merged, self.constant + other.constant)

    def scaled(self, factor: Number) -> "LinearExpr":
        f = to_frac(factor)
        return LinearExpr({vid: c * f for vid, c in self.terms}, self.constant * f)

    def negated(self) -> "LinearExpr":
        return self.scaled(-1)

    def value(self, values: Sequence[Fraction]) -> Fraction:
        return sum((c * values[vid] for vid, c in self.terms), self.constant)

    def __eq__(self, other) -> bool:
        return (isinstance(other, LinearExpr)
                and self.terms == other.terms
                and self.constant == other.constant)

    def __hash__(self):
        return hash((self.terms, self.constant))

    def __repr__(self):
        return f"LinearExpr({list(self.terms)!r}, constant={self.constant!r})"


@dataclass(frozen=True)
class ConstraintRow:
    expr: LinearExpr
    sense: Sense
    rhs: Fraction
    name: str


@dataclass
class Solution:
    status: Status
    values: Optional[tuple[float, ...]] = None  # one per variable
    objective: Optional[float] = None
    bound: Optional[float] = None
    nodes: int = 0

    @property
    def has_values(self) -> bool:
        return self.values is not None


class Problem:
    """A MILP under construction: variables, constraint rows, objective.

    The objective is stored internally in minimization form; a maximization
    input is negated and remembered via :attr:`maximize` so writers and
    solvers can report in the caller's sense.
    """

    def __init__(self, name: str = "problem"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[ConstraintRow] = []
        self.objective: LinearExpr = LinearExpr()
        self.maximize: bool = False
        self._name_to_id: dict[str, int] = {}
        self._row_names: set[str] = set()

    # -- variables -----------------------------------------------------
    def add_variable(self,
                     name: str,
                     kind: VarKind = VarKind.CONTINUOUS,
                     lower: Optional[Number] = 0,
                     upper: Optional[Number] = None) -> int:
        if not name or any(ch.isspace() for ch in name):
            raise ProblemError(f"invalid variable name {name!r}")
        if name in self._name_to_id:
            raise ProblemError(f"duplicate variable name {name!r}")
        if kind is VarKind.BINARY:
            lower, upper = 0, 1
        var = Variable(
            id=len(self.variables),
            name=name,
            kind=kind,
            lower=None if lower is None else to_frac(lower),
            upper=None if upper is None else to_frac(upper),
        )
        self.variables.append(var)
        self._name_to_id[name] = var.id
        return var.id

    def variable_id(self, name: str) -> int:
        return self._name_to_id[name]

    def _check_ids(self, expr: LinearExpr, where: str) -> None:
        n = len(self.variables)
        for vid, _ in expr.terms:
            if not 0 <= vid < n:
                raise ProblemError(f"{where} references unknown variable id {vid}")

    # -- constraints ---------------------------------------------------
    def add_constraint(self,
                       expr: LinearExpr,
                       sense: Sense,
                       rhs: Number,
                       name: Optional[str] = None) -> int:
        self._check_ids(expr, "constraint")
        if name is None:
            name = f"c{len(self.constraints)}"
        if name in self._row_names:
            raise ProblemError(f"duplicate constraint name {name!r}")
        # fold the expression constant into the rhs
        folded_rhs = to_frac(rhs) - expr.constant
        row = ConstraintRow(LinearExpr(dict(expr.terms)), sense, folded_rhs, name)
        self.constraints.append(row)
        self._row_names.add(name)
        return len(self.constraints) - 1

    # -- objective -----------------------------------------------------
    def set_objective(self, expr: LinearExpr, maximize: bool = False) -> None:
        self._check_ids(expr, "objective")
        self.objective = expr.negated() if maximize else expr
        self.maximize = maximize

    # -- views ---------------------------------------------------------
    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def integer_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.kind is not VarKind.CONTINUOUS]

    def user_objective(self, internal_value: float) -> float:
        return -internal_value if self.maximize else internal_value
