"""Linear time expressions and constraints over exact rationals.

Atoms are normalized to `expr REL 0` with REL in {eq, le, lt}. Clock and
clock-reading variables carry an implicit nonnegative lower bound that is
materialized whenever satisfiability is decided; duration parameters range
over all reals and get their bounds from explicit side constraints.

The solver is Gauss elimination on equalities followed by Fourier-Motzkin
with strict/non-strict bookkeeping; exact projection doubles as the
quantifier elimination used by the timed-match check.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional

Rational = Fraction

_KIND_ORDER = {"cur": 0, "clock": 1, "local": 2, "param": 3}


@dataclass(frozen=True, slots=True)
class TimeVar:
    name: str
    serial: int
    kind: str

    def __repr__(self) -> str:
        if self.kind == "param":
            return self.name
        if self.kind == "cur":
            return "cur"
        return f"{self.name}{self.serial}"


CUR = TimeVar("cur", 0, "cur")


def clock_var(serial: int) -> TimeVar:
    return TimeVar("tG", serial, "clock")


def local_var(name: str, serial: int) -> TimeVar:
    return TimeVar(name, serial, "local")


def param_var(name: str) -> TimeVar:
    return TimeVar(name, 0, "param")


def var_key(v: TimeVar):
    return (_KIND_ORDER[v.kind], v.name, v.serial)


@dataclass(frozen=True, slots=True)
class TimeExpr:
    const: Fraction
    coeffs: tuple[tuple[TimeVar, Fraction], ...]

    def __add__(self, other: "TimeExpr") -> "TimeExpr":
        d = dict(self.coeffs)
        for v, c in other.coeffs:
            d[v] = d.get(v, Fraction(0)) + c
        return mk_expr(self.const + other.const, d)

    def __sub__(self, other: "TimeExpr") -> "TimeExpr":
        return self + other.scale(Fraction(-1))

    def scale(self, r: Fraction) -> "TimeExpr":
        return mk_expr(self.const * r, {v: c * r for v, c in self.coeffs})

    def vars(self) -> frozenset[TimeVar]:
        return frozenset(v for v, _ in self.coeffs)

    def __repr__(self) -> str:
        parts = []
        for v, c in self.coeffs:
            if c == 1:
                parts.append(f"{v!r}")
            else:
                parts.append(f"{c}*{v!r}")
        if self.const or not parts:
            parts.append(str(self.const))
        return " + ".join(parts)


def mk_expr(const, coeffs: dict[TimeVar, Fraction] | None = None) -> TimeExpr:
    cs = {v: Fraction(c) for v, c in (coeffs or {}).items() if c != 0}
    return TimeExpr(
        Fraction(const), tuple(sorted(cs.items(), key=lambda kv: var_key(kv[0])))
    )


ZERO = mk_expr(0)


def expr_of(v: TimeVar) -> TimeExpr:
    return mk_expr(0, {v: Fraction(1)})


def expr_const(c) -> TimeExpr:
    return mk_expr(c)


def expr_mul(a: TimeExpr, b: TimeExpr) -> TimeExpr:
    if a.coeffs and b.coeffs:
        raise ValueError("nonlinear unsupported by internal solver")
    if a.coeffs:
        return a.scale(b.const)
    return b.scale(a.const)


def expr_div(a: TimeExpr, b: TimeExpr) -> TimeExpr:
    if b.coeffs:
        raise ValueError("nonlinear unsupported by internal solver")
    if b.const == 0:
        raise ZeroDivisionError("division by zero time expression")
    return a.scale(Fraction(1) / b.const)


def subst_expr(e: TimeExpr, v: TimeVar, rep: TimeExpr) -> TimeExpr:
    d = dict(e.coeffs)
    c = d.pop(v, None)
    out = mk_expr(e.const, d)
    if c is not None:
        out = out + rep.scale(c)
    return out


def rename_expr(e: TimeExpr, ren: dict[TimeVar, TimeVar]) -> TimeExpr:
    d: dict[TimeVar, Fraction] = {}
    for v, c in e.coeffs:
        w = ren.get(v, v)
        d[w] = d.get(w, Fraction(0)) + c
    return mk_expr(e.const, d)


def eval_expr(e: TimeExpr, model: dict[TimeVar, Fraction]) -> Fraction:
    total = e.const
    for v, c in e.coeffs:
        total += c * model.get(v, Fraction(0))
    return total


# ---------------------------------------------------------------------------
# atoms

REL_EQ, REL_LE, REL_LT = "eq", "le", "lt"


@dataclass(frozen=True, slots=True)
class Atom:
    expr: TimeExpr
    rel: str

    def __repr__(self) -> str:
        op = {"eq": "=", "le": "<=", "lt": "<"}[self.rel]
        return f"{self.expr!r} {op} 0"


def mk_atom(expr: TimeExpr, rel: str) -> Atom:
    # scale so the leading coefficient is +-1 (sign-preserving for
    # inequalities, sign-canonical for equalities)
    if expr.coeffs:
        lead = expr.coeffs[0][1]
        if rel == REL_EQ:
            expr = expr.scale(Fraction(1) / lead)
        elif lead != 0:
            expr = expr.scale(Fraction(1) / abs(lead))
    return Atom(expr, rel)


def atom_cmp(lhs: TimeExpr, op: str, rhs: TimeExpr) -> Atom:
    if op == "=":
        return mk_atom(lhs - rhs, REL_EQ)
    if op == "<=":
        return mk_atom(lhs - rhs, REL_LE)
    if op == "<":
        return mk_atom(lhs - rhs, REL_LT)
    if op == ">=":
        return mk_atom(rhs - lhs, REL_LE)
    if op == ">":
        return mk_atom(rhs - lhs, REL_LT)
    raise ValueError(f"unknown relation {op!r}")


def negate_atom(a: Atom) -> list[Atom]:
    """Negation as a disjunction of atoms."""
    if a.rel == REL_EQ:
        return [mk_atom(a.expr, REL_LT), mk_atom(a.expr.scale(Fraction(-1)), REL_LT)]
    if a.rel == REL_LE:
        return [mk_atom(a.expr.scale(Fraction(-1)), REL_LT)]
    return [mk_atom(a.expr.scale(Fraction(-1)), REL_LE)]


def rename_atom(a: Atom, ren: dict[TimeVar, TimeVar]) -> Atom:
    return mk_atom(rename_expr(a.expr, ren), a.rel)


def atoms_vars(atoms: Iterable[Atom]) -> frozenset[TimeVar]:
    out: set[TimeVar] = set()
    for a in atoms:
        out |= a.expr.vars()
    return frozenset(out)


def eval_atom(a: Atom, model: dict[TimeVar, Fraction]) -> bool:
    v = eval_expr(a.expr, model)
    if a.rel == REL_EQ:
        return v == 0
    if a.rel == REL_LE:
        return v <= 0
    return v < 0


def _expr_key(e: TimeExpr):
    return (
        tuple((var_key(v), c.numerator, c.denominator) for v, c in e.coeffs),
        e.const.numerator,
        e.const.denominator,
    )


def atom_key(a: Atom):
    return (a.rel, _expr_key(a.expr))


def with_implicit_bounds(atoms: frozenset[Atom]) -> frozenset[Atom]:
    """Add `v >= 0` for every clock or clock-reading variable mentioned."""
    extra = {
        mk_atom(expr_of(v).scale(Fraction(-1)), REL_LE)
        for v in atoms_vars(atoms)
        if v.kind in ("clock", "local")
    }
    return frozenset(atoms) | extra


# ---------------------------------------------------------------------------
# solving

# A derived inequality remembers which original atoms it came from. After k
# eliminations any combination touching more than k+1 originals is implied by
# shorter derivations (Imbert's bound), so it can be dropped without changing
# the projection; unpruned Fourier-Motzkin is doubly exponential on dense
# systems.
Triple = tuple[dict[TimeVar, Fraction], Fraction, str, frozenset[int]]


def _to_triples(atoms: Iterable[Atom]) -> list[Triple]:
    # sorted entry makes pivot choice independent of set iteration order
    ordered = sorted(atoms, key=atom_key)
    return [
        (dict(a.expr.coeffs), a.expr.const, a.rel, frozenset([i]))
        for i, a in enumerate(ordered)
    ]


def _triple_atom(t: Triple) -> Atom:
    coeffs, const, rel, _ = t
    return mk_atom(mk_expr(const, coeffs), rel)


def _gauss_sub(
    triples: list[Triple], v: TimeVar, ecoeffs, econst, ehist
) -> list[Triple]:
    """Replace v by the expression ecoeffs*vars + econst in every triple."""
    out = []
    for coeffs, const, rel, hist in triples:
        d = coeffs.get(v)
        if d is None or d == 0:
            out.append((dict(coeffs), const, rel, hist))
            continue
        nc = {u: c for u, c in coeffs.items() if u != v}
        for u, c in ecoeffs.items():
            nc[u] = nc.get(u, Fraction(0)) + d * c
        out.append(
            (
                {u: c for u, c in nc.items() if c != 0},
                const + d * econst,
                rel,
                hist | ehist,
            )
        )
    return out


def _pivot_of(coeffs: dict, const: Fraction, v: TimeVar):
    """Solve coeffs*vars + const = 0 for v; returns (ecoeffs, econst)."""
    c = coeffs[v]
    ecoeffs = {u: -cc / c for u, cc in coeffs.items() if u != v}
    econst = -const / c
    return ecoeffs, econst


def _fm_bounds(triples: list[Triple], v: TimeVar):
    """Split inequality triples on v into lower bounds, upper bounds, rest.

    A bound is (ecoeffs, econst, rel, hist): v >= expr (lower) or v <= expr
    (upper), strict when rel is lt."""
    lowers, uppers, rest = [], [], []
    for coeffs, const, rel, hist in triples:
        c = coeffs.get(v, Fraction(0))
        if c == 0:
            rest.append((coeffs, const, rel, hist))
            continue
        ecoeffs = {u: -cc / c for u, cc in coeffs.items() if u != v}
        econst = -const / c
        if c > 0:
            uppers.append((ecoeffs, econst, rel, hist))
        else:
            lowers.append((ecoeffs, econst, rel, hist))
    return lowers, uppers, rest


def _combine(lo, hi) -> Triple:
    lc, lk, lr, lh = lo
    uc, uk, ur, uh = hi
    coeffs = dict(lc)
    for u, c in uc.items():
        coeffs[u] = coeffs.get(u, Fraction(0)) - c
    coeffs = {u: c for u, c in coeffs.items() if c != 0}
    rel = REL_LT if REL_LT in (lr, ur) else REL_LE
    return (coeffs, lk - uk, rel, lh | uh)


def _dominates(a: Triple, b: Triple) -> bool:
    # same slope assumed: a implies b when a is at least as tight and was
    # derived from a subset of b's originals (the subset condition keeps
    # every short derivation available for later Imbert cuts)
    _, ac, ar, ah = a
    _, bc, br, bh = b
    if not ah <= bh:
        return False
    if ac != bc:
        return ac > bc
    return ar == br or ar == REL_LT


def _dominance_prune(triples: list[Triple]) -> list[Triple]:
    """Drop inequalities implied by a same-slope sibling; slopes are
    normalized by the leading coefficient so scaled copies land together."""
    groups: dict = {}
    for t in triples:
        coeffs, const, rel, hist = t
        if coeffs:
            lead = abs(coeffs[max(coeffs, key=var_key)])
            if lead != 1:
                coeffs = {u: c / lead for u, c in coeffs.items()}
                t = (coeffs, const / lead, rel, hist)
        groups.setdefault(frozenset(t[0].items()), []).append(t)
    out = []
    for group in groups.values():
        kept: list[Triple] = []
        for cand in group:
            if any(_dominates(k, cand) for k in kept):
                continue
            kept = [k for k in kept if not _dominates(cand, k)]
            kept.append(cand)
        out.extend(kept)
    return out


def _fm_round(triples: list[Triple], v: TimeVar, depth: int):
    """Project v out of the inequality triples; depth counts variables
    eliminated before this round. Returns the new triples and the bound
    lists used for model rebuilding."""
    lowers, uppers, rest = _fm_bounds(triples, v)
    combos = []
    for lo in lowers:
        for hi in uppers:
            t = _combine(lo, hi)
            if len(t[3]) <= depth + 2:
                combos.append(t)
    return _dominance_prune(rest + combos), lowers, uppers


def _solve(atoms: frozenset[Atom]) -> Optional[dict[TimeVar, Fraction]]:
    triples = _to_triples(atoms)
    all_vars = sorted(atoms_vars(atoms), key=var_key)
    gauss: list[tuple[TimeVar, dict, Fraction]] = []
    depth = 0

    # equalities first
    while True:
        pick = None
        for i, (coeffs, const, rel, _) in enumerate(triples):
            if rel == REL_EQ and coeffs:
                pick = i
                break
        if pick is None:
            break
        coeffs, const, _, ehist = triples.pop(pick)
        v = max(coeffs, key=var_key)
        ecoeffs, econst = _pivot_of(coeffs, const, v)
        gauss.append((v, ecoeffs, econst))
        triples = _gauss_sub(triples, v, ecoeffs, econst, ehist)
        depth += 1
    for coeffs, const, rel, _ in triples:
        if rel == REL_EQ and const != 0:
            return None
    triples = [t for t in triples if t[2] != REL_EQ]

    # Fourier-Motzkin on the remaining inequalities
    fm: list[tuple[TimeVar, list, list]] = []
    while True:
        mentioned = sorted({u for c, _, _, _ in triples for u in c}, key=var_key)
        if not mentioned:
            break
        v = mentioned[-1]
        triples, lowers, uppers = _fm_round(triples, v, depth)
        fm.append((v, lowers, uppers))
        depth += 1

    for coeffs, const, rel, _ in triples:
        if rel == REL_LE and const > 0:
            return None
        if rel == REL_LT and const >= 0:
            return None

    # rebuild a model: innermost eliminated variable first
    model: dict[TimeVar, Fraction] = {}
    for v, lowers, uppers in reversed(fm):
        lo, lo_strict = None, False
        for ecoeffs, econst, rel, _ in lowers:
            val = econst + sum(model.get(u, Fraction(0)) * c for u, c in ecoeffs.items())
            if lo is None or val > lo or (val == lo and rel == REL_LT):
                lo, lo_strict = val, rel == REL_LT
        hi, hi_strict = None, False
        for ecoeffs, econst, rel, _ in uppers:
            val = econst + sum(model.get(u, Fraction(0)) * c for u, c in ecoeffs.items())
            if hi is None or val < hi or (val == hi and rel == REL_LT):
                hi, hi_strict = val, rel == REL_LT
        if lo is None and hi is None:
            model[v] = Fraction(0)
        elif hi is None:
            model[v] = lo + 1 if lo_strict else lo
        elif lo is None:
            model[v] = hi - 1 if hi_strict else hi
        else:
            model[v] = (lo + hi) / 2 if (lo_strict or hi_strict) else hi
    for v, ecoeffs, econst in reversed(gauss):
        model[v] = econst + sum(
            model.get(u, Fraction(0)) * c for u, c in ecoeffs.items()
        )
    for v in all_vars:
        model.setdefault(v, Fraction(0))
    return model


@dataclass
class SatResult:
    sat: bool
    model: Optional[dict[TimeVar, Fraction]] = None

    def __bool__(self) -> bool:
        return self.sat


@lru_cache(maxsize=200_000)
def _solve_cached(atoms: frozenset[Atom]):
    return _solve(atoms)


def is_satisfiable(atoms: Iterable[Atom]) -> SatResult:
    """Satisfiability with implicit clock bounds; Sat carries a witness."""
    model = _solve_cached(with_implicit_bounds(frozenset(atoms)))
    if model is None:
        return SatResult(False)
    return SatResult(True, model)


def eliminate_forall(
    atoms: Iterable[Atom], eliminate: Iterable[TimeVar]
) -> list[frozenset[Atom]]:
    """Exact existential projection of a conjunction onto the other variables.

    Returns [] when the body is unsatisfiable, else a single-element
    disjunction. (The name reflects its role: projecting the inner block of
    the timed-match tautology.)"""
    triples = _to_triples(atoms)
    targets = sorted(set(eliminate), key=var_key)
    depth = 0
    for v in targets:
        pivot = None
        for i, (coeffs, const, rel, _) in enumerate(triples):
            if rel == REL_EQ and coeffs.get(v):
                pivot = i
                break
        if pivot is not None:
            coeffs, const, _, ehist = triples.pop(pivot)
            ecoeffs, econst = _pivot_of(coeffs, const, v)
            triples = _gauss_sub(triples, v, ecoeffs, econst, ehist)
            depth += 1
            continue
        # equalities not mentioning v are untouched; split would be needed
        # only if an equality mentioned v, which the pivot caught
        eqs = [t for t in triples if t[2] == REL_EQ]
        ineqs, _, _ = _fm_round(
            [t for t in triples if t[2] != REL_EQ], v, depth
        )
        triples = eqs + ineqs
        depth += 1
    out: set[Atom] = set()
    for t in triples:
        coeffs, const, rel, _ = t
        if not coeffs:
            if rel == REL_EQ and const != 0:
                return []
            if rel == REL_LE and const > 0:
                return []
            if rel == REL_LT and const >= 0:
                return []
            continue
        out.add(_triple_atom(t))
    return [frozenset(out)]


def prune_implied(atoms: frozenset[Atom]) -> frozenset[Atom]:
    """Drop atoms entailed by the rest; deterministic greedy order."""
    kept = sorted(atoms, key=atom_key)
    i = 0
    while i < len(kept):
        a = kept[i]
        rest = frozenset(kept[:i] + kept[i + 1 :])
        implied = all(
            not is_satisfiable(rest | {d}).sat for d in negate_atom(a)
        )
        if implied:
            kept.pop(i)
        else:
            i += 1
    return frozenset(kept)


def check_timed_match(
    tcl: frozenset[Atom],
    tcr: frozenset[Atom],
    pairs: Iterable[tuple[TimeVar, TimeVar]],
) -> bool:
    """Does every time assignment allowed on the left have a matching one on
    the right that equates the paired variables?

    Decided by projecting the right side plus the pairing equalities onto
    the left variables and parameters, then refuting each projected atom's
    negation against the left side."""
    pairs = list(pairs)
    eqs = {atom_cmp(expr_of(l), "=", expr_of(r)) for l, r in pairs}
    right = with_implicit_bounds(frozenset(tcr))
    left = frozenset(tcl)
    right_vars = {
        v
        for v in atoms_vars(right) | {r for _, r in pairs}
        if v.kind != "param"
    }
    proj = eliminate_forall(right | eqs, right_vars)
    if not proj:
        return not is_satisfiable(left).sat
    for a in proj[0]:
        for d in negate_atom(a):
            if is_satisfiable(left | {d}).sat:
                return False
    return True
