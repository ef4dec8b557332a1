"""CPLEX-LP dialect writer and parser, plus a plain `name value` solution
reader, used to hand formulations to an external solver and bring results
back.  Round trip through write + parse reproduces a structurally identical
Problem (variables, bounds, kinds, rows; row order preserved by the writer).
"""

from __future__ import annotations

import io
import re
from fractions import Fraction
from typing import Optional, TextIO, Union

from .milp import (LinearExpr, Problem, ProblemError, Sense, Solution, Status,
                   VarKind, to_frac)

_SENSE_BY_TOKEN = {"<=": Sense.LE, "<": Sense.LE, "=<": Sense.LE,
                   ">=": Sense.GE, ">": Sense.GE, "=>": Sense.GE,
                   "=": Sense.EQ}


def frac_str(x: Fraction) -> str:
    """Exact decimal string when the denominator is 2^a 5^b, else float repr."""
    x = to_frac(x)
    if x.denominator == 1:
        return str(x.numerator)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den == 1:
        digits = max(twos, fives)
        scaled = x.numerator * 10 ** digits // x.denominator
        s = str(abs(scaled)).rjust(digits + 1, "0")
        sign = "-" if scaled < 0 else ""
        return f"{sign}{s[:-digits]}.{s[-digits:]}"
    return repr(float(x))


def _write_expr(out: TextIO, expr: LinearExpr, names: list[str],
                include_constant: bool) -> None:
    pieces: list[str] = []
    for vid, coef in expr.terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = names[vid] if mag == 1 else f"{frac_str(mag)} {names[vid]}"
        pieces.append((sign, body))
    if include_constant and expr.constant != 0:
        pieces.append(("-" if expr.constant < 0 else "+",
                       frac_str(abs(expr.constant))))
    if not pieces:
        out.write("0")
        return
    first_sign, first_body = pieces[0]
    out.write(f"-{first_body}" if first_sign == "-" else first_body)
    for sign, body in pieces[1:]:
        out.write(f" {sign} {body}")


def write_lp(problem: Problem, destination: Union[str, TextIO]) -> None:
    """Emit `problem` in LP text format."""
    close = False
    if isinstance(destination, str):
        out = open(destination, "w")
        close = True
    else:
        out = destination
    try:
        names = [v.name for v in problem.variables]
        obj = problem.objective.negated() if problem.maximize else problem.objective
        out.write("Maximize\n" if problem.maximize else "Minimize\n")
        out.write(" obj: ")
        _write_expr(out, obj, names, include_constant=True)
        out.write("\nSubject To\n")
        for row in problem.constraints:
            out.write(f" {row.name}: ")
            _write_expr(out, row.expr, names, include_constant=False)
            out.write(f" {row.sense.value} {frac_str(row.rhs)}\n")
        # variables absent from every other section still need a Bounds
        # line, or the parser could not recover them
        referenced = {vid for vid, _ in problem.objective.terms}
        for row in problem.constraints:
            referenced.update(vid for vid, _ in row.expr.terms)
        out.write("Bounds\n")
        for var in problem.variables:
            if var.kind is VarKind.BINARY:
                continue
            lo, hi = var.lower, var.upper
            recoverable = (var.id in referenced
                           or var.kind is VarKind.INTEGER)
            if lo == 0 and hi is None and recoverable:
                continue
            if lo is None and hi is None:
                out.write(f" {var.name} free\n")
            elif lo is None:
                out.write(f" -inf <= {var.name} <= {frac_str(hi)}\n")
            elif hi is None:
                out.write(f" {var.name} >= {frac_str(lo)}\n")
            else:
                out.write(f" {frac_str(lo)} <= {var.name} <= {frac_str(hi)}\n")
        binaries = [v.name for v in problem.variables if v.kind is VarKind.BINARY]
        generals = [v.name for v in problem.variables if v.kind is VarKind.INTEGER]
        if binaries:
            out.write("Binary\n")
            for name in binaries:
                out.write(f" {name}\n")
        if generals:
            out.write("General\n")
            for name in generals:
                out.write(f" {name}\n")
        out.write("End\n")
    finally:
        if close:
            out.close()


class LpParseError(ValueError):
    pass


_TOKEN_RE = re.compile(r"""
    (?P<num>[0-9]+(?:\.[0-9]*)?(?:[eE][+-]?[0-9]+)?|\.[0-9]+(?:[eE][+-]?[0-9]+)?)
  | (?P<name>[A-Za-z_!#$%&/,;?@'`{}|~.][A-Za-z0-9_!#$%&/,;?@'`{}|~.\[\]()]*)
  | (?P<sense><=|>=|=<|=>|<|>|=)
  | (?P<op>[+\-:])
""", re.VERBOSE)

_SECTIONS = {
    "minimize": "objective", "minimise": "objective", "min": "objective",
    "maximize": "objective", "maximise": "objective", "max": "objective",
    "subject": None, "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "bound": "bounds",
    "binary": "binary", "binaries": "binary", "bin": "binary",
    "general": "general", "generals": "general", "gen": "general",
    "end": "end",
}


def _tokenize(text: str):
    for line in text.splitlines():
        body = line.split("\\", 1)[0]
        pos = 0
        while pos < len(body):
            if body[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(body, pos)
            if not m:
                raise LpParseError(f"cannot tokenize near {body[pos:pos+20]!r}")
            yield m.lastgroup, m.group(0)
            pos = m.end()


def parse_lp(source: Union[str, TextIO]) -> Problem:
    """Parse LP text (path, text, or file object) into a Problem."""
    if isinstance(source, str):
        text = source if "\n" in source else open(source).read()
    else:
        text = source.read()

    tokens = list(_tokenize(text))
    # split into sections
    sections: list[tuple[str, str, list]] = []  # (kind, header token, tokens)
    current: Optional[list] = None
    i = 0
    while i < len(tokens):
        kind, tok = tokens[i]
        low = tok.lower()
        if kind == "name" and low in _SECTIONS:
            if low == "subject":
                # expect "to"
                if i + 1 < len(tokens) and tokens[i + 1][1].lower() == "to":
                    i += 1
                sections.append(("rows", tok, []))
            elif _SECTIONS[low] == "end":
                break
            else:
                sections.append((_SECTIONS[low], tok, []))
            current = sections[-1][2]
            i += 1
            continue
        if current is None:
            raise LpParseError(f"token {tok!r} before any section header")
        current.append((kind, tok))
        i += 1

    problem = Problem()
    maximize = False
    obj_tokens: list = []
    row_tokens: list = []
    bound_tokens: list = []
    binary_names: list[str] = []
    general_names: list[str] = []
    for kind, header, toks in sections:
        if kind == "objective":
            maximize = header.lower().startswith("max")
            obj_tokens = toks
        elif kind == "rows":
            row_tokens = toks
        elif kind == "bounds":
            bound_tokens = toks
        elif kind == "binary":
            binary_names += [t for k, t in toks if k == "name"]
        elif kind == "general":
            general_names += [t for k, t in toks if k == "name"]

    # first pass: collect every variable name in order of appearance,
    # skipping row/objective labels (a name directly followed by ':')
    seen: dict[str, None] = {}
    for toks in (obj_tokens, row_tokens):
        for idx, (k, t) in enumerate(toks):
            if k != "name" or t.lower() in ("free", "inf", "infinity"):
                continue
            if idx + 1 < len(toks) and toks[idx + 1][1] == ":":
                continue
            seen.setdefault(t)
    for name in binary_names + general_names:
        seen.setdefault(name)
    for k, t in bound_tokens:
        if k == "name" and t.lower() not in ("free", "inf", "infinity"):
            seen.setdefault(t)

    binaries = set(binary_names)
    generals = set(general_names)
    bounds: dict[str, list] = {}  # name -> [lower, upper]

    def parse_bounds():
        i = 0
        toks = bound_tokens
        while i < len(toks):
            # forms: name free | name >= num | name <= num |
            #        num <= name <= num | -inf <= name <= num | name = num
            neg = False
            if toks[i][1] == "-":
                neg = True
                i += 1
            k, t = toks[i]
            if k == "num" or t.lower() in ("inf", "infinity"):
                lo = None if k == "name" else (-1 if neg else 1) * Fraction(t)
                if k == "name" and not neg:
                    raise LpParseError("unexpected bare 'inf' in bounds")
                i += 1
                if toks[i][1] not in ("<=", "<", "=<"):
                    raise LpParseError("expected <= in bounds line")
                i += 1
                name = toks[i][1]
                i += 1
                b = bounds.setdefault(name, [Fraction(0), None])
                b[0] = lo
                if i < len(toks) and toks[i][1] in ("<=", "<", "=<"):
                    i += 1
                    neg2 = toks[i][1] == "-"
                    if neg2:
                        i += 1
                    k2, t2 = toks[i]
                    b[1] = None if k2 == "name" else (-1 if neg2 else 1) * Fraction(t2)
                    i += 1
            else:
                name = t
                i += 1
                if i < len(toks) and toks[i][1].lower() == "free" :
                    bounds[name] = [None, None]
                    i += 1
                    continue
                sense = toks[i][1]
                i += 1
                neg2 = toks[i][1] == "-"
                if neg2:
                    i += 1
                k2, t2 = toks[i]
                val = None if k2 == "name" else (-1 if neg2 else 1) * Fraction(t2)
                i += 1
                b = bounds.setdefault(name, [Fraction(0), None])
                if sense in ("<=", "<", "=<"):
                    b[1] = val
                elif sense in (">=", ">", "=>"):
                    b[0] = val
                else:
                    b[0] = b[1] = val

    parse_bounds()

    for name in seen:
        if name in binaries:
            problem.add_variable(name, VarKind.BINARY)
            continue
        lo, hi = bounds.get(name, [Fraction(0), None])
        kind = VarKind.INTEGER if name in generals else VarKind.CONTINUOUS
        problem.add_variable(name, kind, lower=lo, upper=hi)

    def parse_expr(toks, start, stop_on_sense: bool):
        """Parse a linear expression; returns (LinearExpr terms dict, constant, next index)."""
        terms: dict[int, Fraction] = {}
        constant = Fraction(0)
        sign = Fraction(1)
        pending: Optional[Fraction] = None
        i = start
        while i < len(toks):
            k, t = toks[i]
            if k == "sense" and stop_on_sense:
                break
            if t == "+":
                if pending is not None:
                    constant += sign * pending
                    pending = None
                sign = Fraction(1)
            elif t == "-":
                if pending is not None:
                    constant += sign * pending
                    pending = None
                sign = Fraction(-1)
            elif k == "num":
                if pending is not None:
                    constant += sign * pending
                pending = Fraction(t)
            elif k == "name":
                coef = sign * (pending if pending is not None else Fraction(1))
                vid = problem.variable_id(t)
                terms[vid] = terms.get(vid, Fraction(0)) + coef
                pending = None
                sign = Fraction(1)
            else:
                raise LpParseError(f"unexpected token {t!r} in expression")
            i += 1
        if pending is not None:
            constant += sign * pending
        return terms, constant, i

    # objective (strip leading "obj:")
    toks = obj_tokens
    if len(toks) >= 2 and toks[0][0] == "name" and toks[1][1] == ":":
        toks = toks[2:]
    terms, constant, _ = parse_expr(toks, 0, stop_on_sense=False)
    problem.set_objective(LinearExpr(terms, constant), maximize=maximize)

    # rows
    i = 0
    toks = row_tokens
    while i < len(toks):
        name = None
        if (toks[i][0] == "name" and i + 1 < len(toks) and toks[i + 1][1] == ":"):
            name = toks[i][1]
            i += 2
        terms, constant, i = parse_expr(toks, i, stop_on_sense=True)
        if i >= len(toks):
            if not terms and constant == 0:
                break
            raise LpParseError("constraint missing relational operator")
        sense = _SENSE_BY_TOKEN[toks[i][1]]
        i += 1
        if toks[i][1] == "-":
            i += 1
            rhs = -Fraction(toks[i][1])
        else:
            rhs = Fraction(toks[i][1])
        i += 1
        problem.add_constraint(LinearExpr(terms, constant), sense, rhs, name=name)

    return problem


def read_solution(source: Union[str, TextIO], problem: Problem) -> Solution:
    """Read plain ``name value`` lines into a Solution over `problem`.

    Unlisted variables default to 0.  A leading ``objective <value>`` line is
    honored; otherwise the objective is recomputed from the values.
    """
    if isinstance(source, str):
        text = open(source).read() if "\n" not in source else source
    else:
        text = source.read()
    values = [0.0] * problem.n_variables
    objective: Optional[float] = None
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 2:
            raise LpParseError(f"line {lineno}: expected 'name value'")
        name, raw = parts
        if name.lower() == "objective":
            objective = float(raw)
            continue
        try:
            vid = problem.variable_id(name)
        except KeyError:
            raise LpParseError(f"line {lineno}: unknown variable {name!r}")
        values[vid] = float(raw)
    if objective is None:
        internal = float(problem.objective.constant) + sum(
            float(c) * values[vid] for vid, c in problem.objective.terms)
        objective = problem.user_objective(internal)
    return Solution(Status.OPTIMAL, values=tuple(values),
                    objective=objective, bound=objective)
