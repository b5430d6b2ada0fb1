"""Symbolic message generation: what the network attacker can produce.

s_gen answers, in one pass, every way the attacker can build a message
matching a pattern from its current knowledge. Pattern variables become
fresh symbols; each returned solution pairs a symbol substitution (symbols
that got resolved) with a refined constraint map for those still open.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .knowledge import derivable_in
from .terms import (
    Counter,
    Enc,
    PubKey,
    SecKey,
    Symbol,
    Term,
    Tup,
    Var,
    apply_sym_subst,
    apply_var_subst,
    compose_sym,
    is_ground,
    is_guessable,
    order_key,
    sorted_terms,
    unify,
    vars_in_order,
)

Solution = tuple[dict[Symbol, Term], dict[Symbol, frozenset[Term]]]


@dataclass
class GenSolution:
    ssb: dict[Symbol, Term]
    dc: dict[Symbol, frozenset[Term]]


@dataclass
class GenResult:
    sb: dict[Var, Symbol]
    solutions: list[GenSolution] = field(default_factory=list)

    @property
    def derivable(self) -> bool:
        return bool(self.solutions)


def _dc_bind(dc, sym: Symbol, m: Term) -> dict[Symbol, frozenset[Term]]:
    """Drop sym's entry and push the binding through the generator sets."""
    one = {sym: m}
    return {
        s: frozenset(apply_sym_subst(one, g) for g in gens)
        for s, gens in dc.items()
        if s != sym
    }


def check_bnd(sym: Symbol, m: Term, ssb, dc, counter: Counter) -> list[Solution]:
    """Resolve one binding sym -> m against the constraint map.

    Unconstrained symbols bind freely. A constrained symbol binding to a
    non-symbol turns into a generation obligation from its own generator
    set. Two constrained symbols merge onto the representative, keeping the
    earlier symbol's set: knowledge only grows, so the earlier set is the
    tighter one.
    """
    if m == sym:
        return [(ssb, dict(dc))]
    ssb1 = compose_sym(ssb, sym, m)
    if sym not in dc:
        return [(ssb1, _dc_bind(dc, sym, m))]
    gens = dc[sym]
    dc1 = _dc_bind(dc, sym, m)
    if not isinstance(m, Symbol):
        return _gen(m, gens, ssb1, dc1, counter)
    if m in dc:
        if sym.serial < m.serial:
            dc1[m] = frozenset(apply_sym_subst({sym: m}, g) for g in gens)
        return [(ssb1, dc1)]
    dc1[m] = gens
    return [(ssb1, dc1)]


def check_subst(candidate, ambient, dc, counter: Counter) -> list[Solution]:
    """Validate a unifier's bindings one by one, threading every surviving
    (ssb, dc) refinement into the next binding."""
    sols: list[Solution] = [(dict(ambient), dict(dc))]
    for sym in sorted(candidate, key=lambda s: s.serial):
        nxt: list[Solution] = []
        for ssb_i, dc_i in sols:
            m_i = apply_sym_subst(ssb_i, candidate[sym])
            if sym in ssb_i:
                # an earlier obligation already resolved this symbol
                mg = unify([(apply_sym_subst(ssb_i, sym), m_i)])
                if mg is None:
                    continue
                if not mg:
                    nxt.append((ssb_i, dc_i))
                else:
                    nxt.extend(check_subst(mg, ssb_i, dc_i, counter))
                continue
            nxt.extend(check_bnd(sym, m_i, ssb_i, dc_i, counter))
        sols = nxt
        if not sols:
            break
    return sols


def _member_unify(t: Term, ik, ssb, dc, counter: Counter) -> list[Solution]:
    out: list[Solution] = []
    for member in sorted_terms(ik):
        mem = apply_sym_subst(ssb, member)
        if type(mem) is not type(t):
            continue
        cand = unify([(t, mem)])
        if cand is None:
            continue
        if not cand:
            out.append((ssb, dict(dc)))
        else:
            out.extend(check_subst(cand, ssb, dc, counter))
    return out


def _gen(target: Term, ik, ssb, dc, counter: Counter) -> list[Solution]:
    t = apply_sym_subst(ssb, target)
    if isinstance(t, Var):
        raise ValueError("unresolved variable in generation target")
    if isinstance(t, Symbol):
        dc1 = dict(dc)
        if t in dc:
            # the symbol's value must also come from ik; snapshots of one
            # run are comparable, so members ik cannot derive are gone
            dc1[t] = frozenset(
                g for g in dc[t] if derivable_in(g, ik, dc)
            )
            return [(ssb, dc1)]
        # constrain lazily: the symbol may instead be resolved by matching
        dc1[t] = frozenset(ik)
        return [(ssb, dc1)]
    if is_guessable(t):
        return [(ssb, dict(dc))]
    if isinstance(t, Tup):
        sols: list[Solution] = [(ssb, dict(dc))]
        for item in t.items:
            sols = [
                s2
                for ssb_i, dc_i in sols
                for s2 in _gen(item, ik, ssb_i, dc_i, counter)
            ]
            if not sols:
                break
        return sols
    if isinstance(t, Enc):
        out = _gen(Tup((t.payload, t.key)), ik, ssb, dc, counter)
        out.extend(_member_unify(t, ik, ssb, dc, counter))
        return out
    # remaining atoms: nonces, private texts, keys
    if any(apply_sym_subst(ssb, u) == t for u in ik):
        return [(ssb, dict(dc))]
    if isinstance(t, (PubKey, SecKey)) and not is_ground(t):
        return _member_unify(t, ik, ssb, dc, counter)
    return []


def _sol_key(sol: Solution):
    ssb, dc = sol
    return (
        tuple(
            (s.serial, order_key(m))
            for s, m in sorted(ssb.items(), key=lambda kv: kv[0].serial)
        ),
        tuple(
            (s.serial, tuple(order_key(g) for g in sorted_terms(gens)))
            for s, gens in sorted(dc.items(), key=lambda kv: kv[0].serial)
        ),
    )


def _finish(sb, sols) -> GenResult:
    seen = set()
    out = []
    for sol in sorted(sols, key=_sol_key):
        k = _sol_key(sol)
        if k not in seen:
            seen.add(k)
            out.append(GenSolution(ssb=sol[0], dc=sol[1]))
    return GenResult(sb=sb, solutions=out)


def s_gen(target: Term, ik, dc, counter: Counter) -> GenResult:
    """All ways the attacker derives an instance of target from ik under dc."""
    sb = {v: counter.fresh_symbol() for v in vars_in_order(target)}
    t0 = apply_var_subst(sb, target)
    return _finish(sb, _gen(t0, ik, {}, dc, counter))


def s_gen_match(lhs: Term, rhs: Term, ik, dc, counter: Counter) -> GenResult:
    """Solve the matching check lhs := rhs under dc.

    Variables on either side become fresh symbols, the two sides are
    unified, and the unifier is validated binding by binding. ik is part of
    the call shape for the step rules; the constraint sets consulted here
    all live in dc already.
    """
    del ik
    sb = {v: counter.fresh_symbol() for v in vars_in_order(Tup((lhs, rhs)))}
    l2 = apply_var_subst(sb, lhs)
    r2 = apply_var_subst(sb, rhs)
    cand = unify([(l2, r2)])
    if cand is None:
        return GenResult(sb=sb, solutions=[])
    if not cand:
        return _finish(sb, [({}, dict(dc))])
    return _finish(sb, check_subst(cand, {}, dc, counter))
