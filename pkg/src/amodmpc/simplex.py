"""Primal simplex for LP relaxations.

Revised simplex with explicit basis inverse and bounded variables, so
binary/unit bounds never become extra rows.  Two phases (artificials for
feasibility), Dantzig pricing by default, permanent switch to Bland's rule
after a run of degenerate pivots so termination is guaranteed.  All model
data arrives as exact rationals and is converted to floats here; tolerances
are owned by this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .milp import Problem, Solution, Status, VarKind


class NumericalError(RuntimeError):
    """The simplex could not certify its answer numerically."""


@dataclass
class SolverParams:
    integrality_tol: float = 1e-6
    lp_feasibility_tol: float = 1e-9
    max_nodes: int = 1_000_000
    time_limit_seconds: Optional[float] = None
    deterministic: bool = True
    # simplex internals
    ratio_tol: float = 1e-9
    pivot_tol: float = 1e-7
    refactor_every: int = 150

    def __post_init__(self):
        if self.integrality_tol <= 0 or self.lp_feasibility_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")


BoundMap = dict[int, tuple[Optional[Fraction], Optional[Fraction]]]


class _Standardized:
    """Internal LP in the form  A x = b,  0 <= x <= U  (U may be +inf).

    Keeps the mapping needed to recover original variable values:
    each original variable is expressed as  offset + sum(sign_t * x_t).
    """

    def __init__(self, problem: Problem, bounds: Optional[BoundMap]):
        n_orig = problem.n_variables
        lowers: list[Optional[Fraction]] = []
        uppers: list[Optional[Fraction]] = []
        for var in problem.variables:
            lo, hi = var.lower, var.upper
            if bounds and var.id in bounds:
                blo, bhi = bounds[var.id]
                if blo is not None:
                    lo = blo if lo is None else max(lo, blo)
                if bhi is not None:
                    hi = bhi if hi is None else min(hi, bhi)
            lowers.append(lo)
            uppers.append(hi)
        self.conflicting = any(
            lo is not None and hi is not None and lo > hi
            for lo, hi in zip(lowers, uppers))

        # per original var: list of (internal col, sign), plus offset
        self.recover: list[tuple[list[tuple[int, float]], float]] = []
        cols: list[dict[int, float]] = []   # internal col -> {row: coef} later
        ubs: list[float] = []
        obj = np.zeros(0)

        col_expr: list[list[tuple[int, float]]] = []  # per internal col: [(orig, coef)]

        def new_col(entries: list[tuple[int, float]], ub: float) -> int:
            col_expr.append(entries)
            ubs.append(ub)
            return len(col_expr) - 1

        for vid in range(n_orig):
            lo, hi = lowers[vid], uppers[vid]
            if lo is not None:
                ub = math.inf if hi is None else float(hi - lo)
                c = new_col([(vid, 1.0)], ub)
                self.recover.append(([(c, 1.0)], float(lo)))
            elif hi is not None:
                # x = hi - y, y >= 0
                c = new_col([(vid, -1.0)], math.inf)
                self.recover.append(([(c, -1.0)], float(hi)))
            else:
                cp = new_col([(vid, 1.0)], math.inf)
                cm = new_col([(vid, -1.0)], math.inf)
                self.recover.append(([(cp, 1.0), (cm, -1.0)], 0.0))

        self.offsets = np.zeros(n_orig)
        for vid in range(n_orig):
            self.offsets[vid] = self.recover[vid][1]

        m = len(problem.constraints)
        n_struct = len(col_expr)
        A = np.zeros((m, n_struct))
        b = np.zeros(m)
        # orig coefficient matrix row-wise, then map through col_expr
        orig_coef_of_col = [dict(entries) for entries in col_expr]
        cols_of_orig: list[list[int]] = [[] for _ in range(n_orig)]
        for c, entries in enumerate(col_expr):
            for vid, _ in entries:
                cols_of_orig[vid].append(c)

        senses = []
        for r, row in enumerate(problem.constraints):
            rhs = float(row.rhs)
            for vid, coef in row.expr.terms:
                fc = float(coef)
                for c in cols_of_orig[vid]:
                    A[r, c] += fc * orig_coef_of_col[c][vid]
                rhs -= fc * self.offsets[vid]
            b[r] = rhs
            senses.append(row.sense.value)

        # slack / surplus columns
        slack_cols = []
        for r, s in enumerate(senses):
            if s == "<=":
                c = new_col([], math.inf)
                slack_cols.append((r, c, 1.0))
            elif s == ">=":
                c = new_col([], math.inf)
                slack_cols.append((r, c, -1.0))
        n_total = len(col_expr)
        if n_total > n_struct:
            A = np.hstack([A, np.zeros((m, n_total - n_struct))])
        for r, c, coef in slack_cols:
            A[r, c] = coef

        self.A = A
        self.b = b
        self.U = np.array(ubs, dtype=float)
        self.n_struct = n_struct
        self.n_total = n_total
        self.m = m

        # internal objective (minimization form of the Problem)
        cvec = np.zeros(n_total)
        self.obj_const = float(problem.objective.constant)
        for vid, coef in problem.objective.terms:
            fc = float(coef)
            self.obj_const += fc * self.offsets[vid]
            for c in cols_of_orig[vid]:
                cvec[c] += fc * orig_coef_of_col[c][vid]
        self.c = cvec

    def recover_values(self, x: np.ndarray) -> np.ndarray:
        vals = self.offsets.copy()
        for vid, (entries, _off) in enumerate(self.recover):
            for c, sign in entries:
                vals[vid] += sign * x[c]
        return vals


class _Simplex:
    def __init__(self, A: np.ndarray, b: np.ndarray, U: np.ndarray,
                 params: SolverParams):
        self.A = A
        self.b = b
        self.U = U
        self.params = params
        self.m, self.n = A.shape

    def _setup_phase1(self):
        m, n = self.m, self.n
        A = self.A.copy()
        b = self.b.copy()
        flip = b < 0
        A[flip] *= -1.0
        b[flip] *= -1.0
        # artificial columns are an implicit identity appended at indices n..n+m-1
        self.Aext = np.hstack([A, np.eye(m)])
        self.bext = b
        self.Uext = np.concatenate([self.U, np.full(m, math.inf)])
        self.basis = np.arange(n, n + m)
        self.at_upper = np.zeros(n + m, dtype=bool)
        self.Binv = np.eye(m)
        self.xB = b.copy()

    def _refactor(self):
        if self.m == 0:
            return
        B = self.Aext[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular basis during refactorization") from exc
        x_nb = np.where(self.at_upper, np.where(np.isinf(self.Uext), 0.0, self.Uext), 0.0)
        x_nb[self.basis] = 0.0
        self.xB = self.Binv @ (self.bext - self.Aext @ x_nb)

    def _run(self, c: np.ndarray, bland_from_start: bool = False) -> str:
        """Minimize c over the current (Aext, basis) state.

        Returns 'optimal' or 'unbounded'.
        """
        p = self.params
        m = self.m
        ntot = self.Aext.shape[1]
        bland = bland_from_start
        degen_run = 0
        bland_trigger = 10 * max(m, 1)
        max_iters = 400 * (m + ntot) + 2000
        is_basic = np.zeros(ntot, dtype=bool)
        is_basic[self.basis] = True
        iters_since_refactor = 0

        for _ in range(max_iters):
            y = c[self.basis] @ self.Binv if m else np.zeros(0)
            red = c - (y @ self.Aext if m else 0.0)
            viol = np.where(self.at_upper, red, -red)
            viol[is_basic] = -np.inf
            # entering candidates: nonbasic with positive violation
            cand = viol > p.pivot_tol
            if not cand.any():
                return "optimal"
            if bland:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, viol, -np.inf)))
            sigma = -1.0 if self.at_upper[j] else 1.0
            w = self.Binv @ self.Aext[:, j] if m else np.zeros(0)
            delta = -sigma * w  # change of xB per unit move of x_j

            t_bound = self.Uext[j]
            leave = -1        # index into basis
            leave_to_upper = False
            if m:
                dn = delta < -p.ratio_tol
                up = delta > p.ratio_tol
                limits = np.full(m, math.inf)
                if dn.any():
                    limits[dn] = np.maximum(self.xB[dn], 0.0) / -delta[dn]
                if up.any():
                    head = np.maximum(self.Uext[self.basis[up]] - self.xB[up], 0.0)
                    limits[up] = head / delta[up]
                t_row = limits.min() if m else math.inf
                if t_row < t_bound:
                    ties = np.flatnonzero(limits <= t_row + p.ratio_tol)
                    if bland:
                        r = int(ties[np.argmin(self.basis[ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(delta[ties]))])
                    leave = r
                    leave_to_upper = bool(delta[r] > 0)
                    t_best = limits[r]
                else:
                    t_best = t_bound
            else:
                t_best = t_bound

            if math.isinf(t_best):
                return "unbounded"

            if t_best <= p.ratio_tol:
                degen_run += 1
                if degen_run > bland_trigger:
                    bland = True
            else:
                degen_run = 0

            if m and t_best > 0:
                self.xB = self.xB - sigma * t_best * w
            if leave < 0:
                # bound flip: j moves to its opposite bound, basis unchanged
                self.at_upper[j] = not self.at_upper[j]
                continue

            # pivot: j enters, basis[leave] exits
            lv = self.basis[leave]
            is_basic[lv] = False
            self.at_upper[lv] = leave_to_upper
            entering_value = (self.Uext[j] - t_best) if self.at_upper[j] else t_best
            self.basis[leave] = j
            is_basic[j] = True
            self.at_upper[j] = False
            self.xB[leave] = entering_value
            # eta update of Binv
            piv = w[leave]
            if abs(piv) < p.pivot_tol:
                self._refactor()
                iters_since_refactor = 0
                continue
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[leave] = row
            # xB positions other than `leave` already updated above; fix leave slot
            self.xB[leave] = entering_value

            iters_since_refactor += 1
            if iters_since_refactor >= p.refactor_every:
                self._refactor()
                iters_since_refactor = 0

        raise NumericalError("simplex iteration limit exceeded")

    def solve(self, c_struct: np.ndarray, bland_from_start: bool = False) -> str:
        self._setup_phase1()
        m, n = self.m, self.n
        if m:
            c1 = np.concatenate([np.zeros(n), np.ones(m)])
            status = self._run(c1, bland_from_start)
            if status != "optimal":
                raise NumericalError("phase-1 objective reported unbounded")
            phase1_obj = float(c1[self.basis] @ self.xB)
            if phase1_obj > max(1e-7, 1e-9 * (1 + abs(self.bext).max())):
                return "infeasible"
            # pin artificials to zero for phase 2
            self.Uext[n:] = 0.0
            self.xB = np.where(np.abs(self.xB) < 1e-11, 0.0, self.xB)
        c2 = np.concatenate([c_struct, np.zeros(m)])
        return self._run(c2, bland_from_start)

    def structural_values(self) -> np.ndarray:
        x = np.where(self.at_upper, np.where(np.isinf(self.Uext), 0.0, self.Uext), 0.0)
        x[self.basis] = self.xB
        return x[: self.n]


def _verify(problem: Problem, std: _Standardized, vals: np.ndarray,
            tol: float) -> float:
    """Max violation of original rows and bounds at `vals`."""
    worst = 0.0
    for var in problem.variables:
        v = vals[var.id]
        if var.lower is not None:
            worst = max(worst, float(var.lower) - v)
        if var.upper is not None:
            worst = max(worst, v - float(var.upper))
    for row in problem.constraints:
        lhs = sum(float(c) * vals[vid] for vid, c in row.expr.terms)
        rhs = float(row.rhs)
        if row.sense.value == "<=":
            worst = max(worst, lhs - rhs)
        elif row.sense.value == ">=":
            worst = max(worst, rhs - lhs)
        else:
            worst = max(worst, abs(lhs - rhs))
    return worst


def solve_lp(problem: Problem,
             params: Optional[SolverParams] = None,
             bounds: Optional[BoundMap] = None) -> Solution:
    """Solve the LP relaxation of `problem` (integrality ignored).

    `bounds` optionally tightens variable bounds (used by branch and bound).
    """
    params = params or SolverParams()
    std = _Standardized(problem, bounds)
    if std.conflicting:
        return Solution(Status.INFEASIBLE)
    if std.n_total == 0:
        # no variables at all: rows are pure constants (already folded)
        for row in problem.constraints:
            r = float(row.rhs)
            ok = {"<=": 0.0 <= r, ">=": 0.0 >= r, "=": abs(r) <= params.lp_feasibility_tol}
            if not ok[row.sense.value]:
                return Solution(Status.INFEASIBLE)
        obj = std.obj_const
        return Solution(Status.OPTIMAL, values=(),
                        objective=problem.user_objective(obj),
                        bound=problem.user_objective(obj))

    for attempt, bland in enumerate((False, True)):
        sx = _Simplex(std.A, std.b, std.U, params)
        status = sx.solve(std.c, bland_from_start=bland)
        if status == "infeasible":
            return Solution(Status.INFEASIBLE)
        if status == "unbounded":
            return Solution(Status.UNBOUNDED)
        vals = std.recover_values(sx.structural_values())
        scale = 1.0 + max((abs(float(r.rhs)) for r in problem.constraints), default=0.0)
        if _verify(problem, std, vals, params.lp_feasibility_tol) <= max(
                params.lp_feasibility_tol * scale, 1e-7):
            obj = float(std.c @ sx.structural_values()) + std.obj_const
            return Solution(Status.OPTIMAL,
                            values=tuple(float(v) for v in vals),
                            objective=problem.user_objective(obj),
                            bound=problem.user_objective(obj))
    raise NumericalError("simplex solution failed feasibility verification")
