"""Ground-truth reference engines.

Everything here answers by exhaustive enumeration over ground terms. The
point is independence: these functions share no logic with the symbolic
solvers they cross-check, so they are deliberately naive and only usable at
small scale. The bounded-denotation discipline is the one documented in
knowledge.py and must stay in lockstep with it, term for term.
"""

from __future__ import annotations

from itertools import product
from typing import Iterator, Optional

from .terms import (
    Enc,
    Name,
    PubKey,
    SecKey,
    Symbol,
    SymKey,
    Term,
    Text,
    Tup,
    Var,
    order_key,
)

CANDIDATE_CAP = 60
INSTANCE_CAP = 400


def _guessable(t: Term) -> bool:
    if isinstance(t, Name):
        return True
    if isinstance(t, PubKey) and isinstance(t.of, Name):
        return True
    return isinstance(t, Text) and t.public


def _inverse(k: Term) -> Optional[Term]:
    if isinstance(k, SymKey):
        return k
    if isinstance(k, PubKey):
        return SecKey(k.of)
    if isinstance(k, SecKey):
        return PubKey(k.of)
    return None


def _walk(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, Enc):
        yield from _walk(t.payload)
        yield from _walk(t.key)
    elif isinstance(t, Tup):
        for i in t.items:
            yield from _walk(i)
    elif isinstance(t, (PubKey, SecKey)):
        yield from _walk(t.of)


def _symbols(t: Term) -> set[Symbol]:
    return {s for s in _walk(t) if isinstance(s, Symbol)}


def _subst(t: Term, binding: dict[Symbol, Term]) -> Term:
    if isinstance(t, Symbol):
        return binding.get(t, t)
    if isinstance(t, Enc):
        return Enc(_subst(t.payload, binding), _subst(t.key, binding))
    if isinstance(t, Tup):
        return Tup(tuple(_subst(i, binding) for i in t.items))
    if isinstance(t, PubKey):
        return PubKey(_subst(t.of, binding))
    if isinstance(t, SecKey):
        return SecKey(_subst(t.of, binding))
    return t


def is_ground_term(t: Term) -> bool:
    return not any(isinstance(s, (Var, Symbol)) for s in _walk(t))


# ---------------------------------------------------------------------------
# derivability by saturation


def ground_derivable(m: Term, members) -> bool:
    """Classic two-phase closure: break everything open that can be opened,
    then check m can be put together from the pieces."""
    known: set[Term] = set(members)
    changed = True
    while changed:
        changed = False
        for t in list(known):
            if isinstance(t, Tup):
                for i in t.items:
                    if i not in known:
                        known.add(i)
                        changed = True
            elif isinstance(t, Enc):
                ki = _inverse(t.key)
                if (
                    ki is not None
                    and _compose(ki, known)
                    and t.payload not in known
                ):
                    known.add(t.payload)
                    changed = True
    return _compose(m, known)


def _compose(m: Term, known: set[Term]) -> bool:
    if m in known or _guessable(m):
        return True
    if isinstance(m, Tup):
        return all(_compose(i, known) for i in m.items)
    if isinstance(m, Enc):
        return _compose(m.payload, known) and _compose(m.key, known)
    return False


# ---------------------------------------------------------------------------
# bounded denotations, mirroring the documented sampling discipline


def _sorted(ts) -> list[Term]:
    return sorted(ts, key=order_key)


def ground_candidates(
    gens, pool, depth: int, width: int, cap: int = CANDIDATE_CAP
) -> list[Term]:
    out = _sorted(gens)
    seen = set(out)
    for g in pool:
        if g not in seen:
            out.append(g)
            seen.add(g)
    for _ in range(2, depth + 1):
        if len(out) >= cap:
            break
        snapshot = list(out)
        for a in snapshot:
            for b in snapshot:
                e = Enc(a, b)
                if e not in seen:
                    out.append(e)
                    seen.add(e)
                if len(out) >= cap:
                    return out
        for w in range(2, width + 1):
            for combo in product(snapshot, repeat=w):
                tup = Tup(combo)
                if tup not in seen:
                    out.append(tup)
                    seen.add(tup)
                if len(out) >= cap:
                    return out
    return out


def _topo(dc) -> list[Symbol]:
    syms = sorted(dc, key=lambda s: s.serial)
    edges = {s: set() for s in syms}
    indeg = {s: 0 for s in syms}
    for s in syms:
        for g in dc[s]:
            for o in _symbols(g):
                if o in edges and s not in edges[o]:
                    edges[o].add(s)
                    indeg[s] += 1
    ready = [s for s in syms if indeg[s] == 0]
    order: list[Symbol] = []
    while ready:
        s = ready.pop(0)
        order.append(s)
        for o in sorted(edges[s], key=lambda x: x.serial):
            indeg[o] -= 1
            if indeg[o] == 0:
                ready.append(o)
        ready.sort(key=lambda x: x.serial)
    if len(order) != len(syms):
        raise ValueError("cyclic constraints")
    return order


def ground_pool(dc, t: Term) -> list[Term]:
    pool: set[Term] = set()
    for gens in dc.values():
        for g in gens:
            pool.update(x for x in _walk(g) if _guessable(x))
    pool.update(x for x in _walk(t) if _guessable(x))
    return _sorted(pool)


def ground_denotation(
    dc,
    t: Term,
    depth: int,
    width: int = 3,
    cap: int = CANDIDATE_CAP,
    inst_cap: int = INSTANCE_CAP,
) -> list[Term]:
    order = _topo(dc)
    pool = ground_pool(dc, t)
    instances: list[Term] = [t]
    for sym in reversed(order):
        cands = ground_candidates(dc[sym], pool, depth, width, cap)
        nxt: list[Term] = []
        for inst in instances:
            if sym in _symbols(inst):
                for c in cands:
                    nxt.append(_subst(inst, {sym: c}))
                    if len(nxt) >= inst_cap:
                        break
            else:
                nxt.append(inst)
            if len(nxt) >= inst_cap:
                break
        instances = nxt
    out: list[Term] = []
    seen: set[Term] = set()
    for inst in instances:
        if is_ground_term(inst) and inst not in seen:
            out.append(inst)
            seen.add(inst)
    return out


# ---------------------------------------------------------------------------
# exhaustive assignments for the small property-test universes


def assignment_space(
    dc, syms, depth: int, width: int, seeds=(), cap: int = CANDIDATE_CAP
) -> Iterator[dict[Symbol, Term]]:
    """Every way of giving the listed symbols ground values from their
    candidate lists, oldest first. Symbols without constraints draw from the
    union of everyone's candidates. Guessables occurring in the seed terms
    join the pool, so constraints over public material stay reachable."""
    syms = sorted(set(syms), key=lambda s: s.serial)
    pool = ground_pool(dc, Tup(tuple(seeds) + (Text("x"), Text("x"))))
    columns: list[list[Term]] = []
    fallback: list[Term] = []
    seen: set[Term] = set()
    for s in syms:
        if s in dc:
            col = ground_candidates(dc[s], pool, depth, width, cap)
        else:
            col = []
        columns.append(col)
        for c in col:
            if c not in seen:
                fallback.append(c)
                seen.add(c)
    if not fallback:
        fallback = list(pool) or [Text("x")]
    columns = [col or fallback for col in columns]
    for combo in product(*columns):
        yield dict(zip(syms, combo))


def ground_match(
    pattern: Term, instance: Term, binding: dict[Symbol, Term]
) -> Optional[dict[Symbol, Term]]:
    """Structural match of a ground instance against pattern, extending
    binding; pattern symbols are holes, everything else must be equal."""
    if isinstance(pattern, Symbol):
        if pattern in binding:
            return binding if binding[pattern] == instance else None
        out = dict(binding)
        out[pattern] = instance
        return out
    if type(pattern) is not type(instance):
        return None
    if isinstance(pattern, Enc):
        mid = ground_match(pattern.payload, instance.payload, binding)
        if mid is None:
            return None
        return ground_match(pattern.key, instance.key, mid)
    if isinstance(pattern, Tup):
        if len(pattern.items) != len(instance.items):
            return None
        cur = binding
        for p, i in zip(pattern.items, instance.items):
            cur = ground_match(p, i, cur)
            if cur is None:
                return None
        return cur
    if isinstance(pattern, (PubKey, SecKey)):
        return ground_match(pattern.of, instance.of, binding)
    return binding if pattern == instance else None


def covered(instance: Term, ms: Term, dc) -> bool:
    """Does the symbolic message ms, under its derivability constraints,
    stand for the given ground instance?"""
    th = ground_match(ms, instance, {})
    if th is None:
        return False
    for sym, val in th.items():
        gens = dc.get(sym)
        if gens is None:
            continue
        if not ground_derivable(val, gens):
            return False
    return True


def eq_holds(eq, binding: dict[Symbol, Term]) -> bool:
    from .compare import Neq

    for c in eq:
        l = _subst(c.lhs, binding)
        r = _subst(c.rhs, binding)
        if isinstance(c, Neq):
            if l == r:
                return False
        elif l != r:
            return False
    return True
