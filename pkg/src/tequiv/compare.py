"""Equality and inequality constraints over symbolic terms.

Constraint sets are conjunctions of Eq/Neq atoms. eq_check decides whether
some instantiation of the mentioned symbols satisfies all of them at once,
honoring the derivability constraints, and hands back the witnessing
substitution when one exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .intruder import check_subst
from .terms import (
    Counter,
    Enc,
    Symbol,
    Term,
    Tup,
    apply_sym_subst,
    is_guessable,
    match,
    unify,
    vars_of,
)


@dataclass(frozen=True, slots=True)
class Eq:
    lhs: Term
    rhs: Term

    def __repr__(self) -> str:
        return f"Eq({self.lhs!r},{self.rhs!r})"


@dataclass(frozen=True, slots=True)
class Neq:
    lhs: Term
    rhs: Term

    def __repr__(self) -> str:
        return f"Neq({self.lhs!r},{self.rhs!r})"


Comp = Eq | Neq
CompSet = frozenset


@dataclass
class EqResult:
    sat: bool
    witness: Optional[dict] = None
    dc: Optional[dict] = None

    def __bool__(self) -> bool:
        return self.sat


UNSAT = EqResult(False)


def eq_check(eq, dc, counter: Optional[Counter] = None) -> EqResult:
    """Satisfiability of a constraint set under derivability constraints.

    Unifies all Eq pairs (symbols unifiable, occur check), rejects if the
    unifier collapses any Neq pair, then validates the unifier against dc;
    each refinement is re-screened against the Neq pairs since validation
    can resolve further symbols.
    """
    counter = counter or Counter()
    eqs = []
    neqs = []
    for c in eq:
        if vars_of(c.lhs) or vars_of(c.rhs):
            raise ValueError("variables are not allowed in comparison constraints")
        if isinstance(c, Eq):
            eqs.append((c.lhs, c.rhs))
        else:
            neqs.append((c.lhs, c.rhs))
    delta = unify(eqs)
    if delta is None:
        return UNSAT
    for lhs, rhs in neqs:
        if apply_sym_subst(delta, lhs) == apply_sym_subst(delta, rhs):
            return UNSAT
    if delta:
        sols = check_subst(delta, {}, dc, counter)
    else:
        sols = [({}, dict(dc))]
    for ssb, dc1 in sols:
        if all(
            apply_sym_subst(ssb, lhs) != apply_sym_subst(ssb, rhs)
            for lhs, rhs in neqs
        ):
            return EqResult(True, ssb, dc1)
    return UNSAT


# ---------------------------------------------------------------------------
# membership of a ground term in a (restricted) denotation


def ground_in_denotation(g: Term, t: Term, dc, _seen=frozenset()) -> bool:
    """Is ground g one of the terms t can stand for under dc?

    An unconstrained symbol stands for anything; a constrained one for
    whatever its generator set derives."""
    if isinstance(t, Symbol):
        gens = dc.get(t)
        if gens is None:
            return True
        if t in _seen:
            return False
        return _ground_derivable_from(g, gens, dc, _seen | {t})
    th = match(t, g)
    if th is None:
        return False
    return all(ground_in_denotation(gi, si, dc, _seen) for si, gi in th.items())


def _ground_derivable_from(g: Term, gens, dc, _seen) -> bool:
    if is_guessable(g):
        return True
    for u in gens:
        th = match(u, g)
        if th is not None and all(
            ground_in_denotation(gi, si, dc, _seen) for si, gi in th.items()
        ):
            return True
    if isinstance(g, Tup):
        return all(_ground_derivable_from(i, gens, dc, _seen) for i in g.items)
    if isinstance(g, Enc):
        return _ground_derivable_from(g.payload, gens, dc, _seen) and (
            _ground_derivable_from(g.key, gens, dc, _seen)
        )
    return False


def in_restricted_denotation(dc, eq, t: Term, m: Term) -> bool:
    """Membership of ground m in t's denotation, narrowed by eq.

    The matching substitution sending t to m must keep every Eq pair
    syntactically equal and every Neq pair distinct."""
    th = match(t, m)
    if th is None:
        return False
    if not all(ground_in_denotation(gi, si, dc) for si, gi in th.items()):
        return False
    for c in eq:
        lhs = apply_sym_subst(th, c.lhs)
        rhs = apply_sym_subst(th, c.rhs)
        if isinstance(c, Eq) and lhs != rhs:
            return False
        if isinstance(c, Neq) and lhs == rhs:
            return False
    return True
