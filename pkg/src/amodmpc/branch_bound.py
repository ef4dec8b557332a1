"""Exact MILP solving: best-first branch and bound over the simplex core,
plus an exhaustive-enumeration oracle for tests."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from fractions import Fraction
from typing import Optional

from .milp import Problem, Solution, Status, VarKind
from .simplex import BoundMap, SolverParams, solve_lp


class OracleSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


def _fractional(value: float, tol: float) -> float:
    return abs(value - round(value))


def _most_fractional(values, integer_ids, tol: float) -> Optional[int]:
    """Id of the integer variable farthest from integrality, ties by id."""
    best_id, best_frac = None, tol
    for vid in integer_ids:
        f = _fractional(values[vid], tol)
        if f > best_frac + 1e-15:
            best_id, best_frac = vid, f
    return best_id


def _lex_less(a, b, tol: float = 1e-9) -> bool:
    for x, y in zip(a, b):
        if x < y - tol:
            return True
        if x > y + tol:
            return False
    return False


def solve_milp(problem: Problem, params: Optional[SolverParams] = None) -> Solution:
    """Provably optimal integral solution, or Infeasible/Unbounded.

    Node selection is best-bound (ties by creation order); branching picks
    the most fractional integer variable (ties by lowest id).  Under node or
    time limits the best incumbent plus the global bound is returned as
    LimitReached.  With ``deterministic=True`` the result is reproducible and
    lexicographically smallest among discovered equal-objective optima.
    """
    params = params or SolverParams()
    integer_ids = problem.integer_ids()
    for vid in integer_ids:
        var = problem.variables[vid]
        if var.lower is None or var.upper is None:
            raise ValueError(f"integer variable {var.name!r} must be bounded")

    start = time.monotonic()
    sign = -1.0 if problem.maximize else 1.0  # user objective -> minimization

    root = solve_lp(problem, params, bounds=None)
    if root.status is Status.INFEASIBLE:
        return Solution(Status.INFEASIBLE)
    if root.status is Status.UNBOUNDED:
        return Solution(Status.UNBOUNDED)

    incumbent: Optional[Solution] = None
    incumbent_obj = math.inf  # in minimization sense
    counter = itertools.count()
    # heap entries: (min-sense bound, creation order, bounds map, lp solution)
    heap = [(sign * root.objective, next(counter), {}, root)]
    nodes = 0
    limit_hit = False

    while heap:
        bound, _, node_bounds, lp = heapq.heappop(heap)
        if bound >= incumbent_obj - 1e-9:
            continue
        nodes += 1
        frac_id = _most_fractional(lp.values, integer_ids, params.integrality_tol)
        if frac_id is None:
            rounded = _round_integers(lp.values, integer_ids)
            obj = sign * lp.objective
            if obj < incumbent_obj - 1e-12:
                incumbent_obj = obj
                incumbent = Solution(Status.OPTIMAL, values=rounded,
                                     objective=lp.objective, bound=lp.objective)
            elif incumbent is not None and obj <= incumbent_obj + 1e-9:
                if params.deterministic and _lex_less(rounded, incumbent.values):
                    incumbent = Solution(Status.OPTIMAL, values=rounded,
                                         objective=incumbent.objective,
                                         bound=incumbent.bound)
            continue

        if nodes >= params.max_nodes or (
                params.time_limit_seconds is not None
                and time.monotonic() - start > params.time_limit_seconds):
            limit_hit = True
            break

        val = lp.values[frac_id]
        for child_bounds in (_with_bound(node_bounds, frac_id, hi=math.floor(val)),
                             _with_bound(node_bounds, frac_id, lo=math.ceil(val))):
            child = solve_lp(problem, params, bounds=child_bounds)
            if child.status is Status.INFEASIBLE:
                continue
            if child.status is Status.UNBOUNDED:
                return Solution(Status.UNBOUNDED)
            cb = sign * child.objective
            if cb >= incumbent_obj - 1e-9:
                continue
            heapq.heappush(heap, (cb, next(counter), child_bounds, child))

    if incumbent is None:
        if limit_hit:
            best_open = min((h[0] for h in heap), default=math.inf)
            return Solution(Status.LIMIT_REACHED, bound=sign * best_open
                            if not math.isinf(best_open) else None)
        return Solution(Status.INFEASIBLE)

    if limit_hit and heap:
        best_open = min(h[0] for h in heap)
        if best_open < incumbent_obj - params.integrality_tol:
            return Solution(Status.LIMIT_REACHED, values=incumbent.values,
                            objective=incumbent.objective,
                            bound=sign * best_open, nodes=nodes)
    incumbent.nodes = nodes
    return incumbent


def _with_bound(bounds: BoundMap, vid: int,
                lo: Optional[int] = None, hi: Optional[int] = None) -> BoundMap:
    new = dict(bounds)
    old_lo, old_hi = new.get(vid, (None, None))
    if lo is not None:
        old_lo = Fraction(lo) if old_lo is None else max(old_lo, Fraction(lo))
    if hi is not None:
        old_hi = Fraction(hi) if old_hi is None else min(old_hi, Fraction(hi))
    new[vid] = (old_lo, old_hi)
    return new


def _round_integers(values, integer_ids) -> tuple[float, ...]:
    out = list(values)
    for vid in integer_ids:
        out[vid] = float(round(out[vid]))
    return tuple(out)


def brute_force_milp(problem: Problem,
                     params: Optional[SolverParams] = None,
                     max_assignments: int = 1 << 24) -> Solution:
    """Exhaustive enumeration over integer assignments; LP on the rest.

    Refuses instances whose integer grid exceeds ``max_assignments``
    (default 2**24, i.e. 24 binaries).
    """
    params = params or SolverParams()
    integer_ids = problem.integer_ids()
    ranges: list[range] = []
    for vid in integer_ids:
        var = problem.variables[vid]
        if var.lower is None or var.upper is None:
            raise OracleSizeError(
                f"integer variable {var.name!r} is unbounded; cannot enumerate")
        lo, hi = math.ceil(var.lower), math.floor(var.upper)
        ranges.append(range(lo, hi + 1))
    total = 1
    for r in ranges:
        total *= max(len(r), 1)
        if total > max_assignments:
            raise OracleSizeError(
                f"integer grid larger than {max_assignments} assignments")

    sign = -1.0 if problem.maximize else 1.0
    best: Optional[Solution] = None
    best_obj = math.inf
    for assignment in itertools.product(*ranges):
        bounds: BoundMap = {
            vid: (Fraction(v), Fraction(v))
            for vid, v in zip(integer_ids, assignment)
        }
        lp = solve_lp(problem, params, bounds=bounds)
        if lp.status is Status.UNBOUNDED:
            return Solution(Status.UNBOUNDED)
        if lp.status is not Status.OPTIMAL:
            continue
        obj = sign * lp.objective
        vals = _round_integers(lp.values, integer_ids)
        if obj < best_obj - 1e-12:
            best_obj = obj
            best = Solution(Status.OPTIMAL, values=vals,
                            objective=lp.objective, bound=lp.objective)
        elif best is not None and obj <= best_obj + 1e-9 and _lex_less(vals, best.values):
            best = Solution(Status.OPTIMAL, values=vals,
                            objective=best.objective, bound=best.bound)
    if best is None:
        return Solution(Status.INFEASIBLE)
    return best
