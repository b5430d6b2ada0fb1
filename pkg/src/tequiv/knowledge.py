"""Minimal knowledge sets and derivability constraints.

A knowledge set is kept in a normal form where composition alone (pairing
and encrypting with derivable keys) reaches everything the owner can build:
tuples are flattened away, guessable terms are elided, every decryptable
payload is exposed, and a ciphertext is stored only while it cannot be
rebuilt from the other members.

A constraint map (DC) assigns some symbols a generator set; such a symbol
stands for any term derivable from its generators plus the guessables.
The operational rules only ever produce acyclic constraint maps.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Optional

from .terms import (
    Enc,
    Symbol,
    Term,
    Tup,
    apply_sym_subst,
    is_ground,
    is_guessable,
    safe_inverse,
    sorted_terms,
    subterms,
    symbols_of,
)

DC = Mapping[Symbol, frozenset[Term]]

EMPTY_DC: DC = {}


def derivable_in(
    m: Term,
    members: frozenset[Term],
    dc: DC,
    _seen: frozenset[Symbol] = frozenset(),
) -> bool:
    """Composition-only derivability of m from a normalized member set.

    Constrained symbols unfold into their generator sets; an unconstrained
    symbol can stand for anything, so it is never derivable. Sound only on
    decomposition-saturated member sets, which normalize_union guarantees.
    """
    if m in members:
        return True
    if is_guessable(m):
        return True
    if isinstance(m, Tup):
        return all(derivable_in(i, members, dc, _seen) for i in m.items)
    if isinstance(m, Enc):
        return derivable_in(m.payload, members, dc, _seen) and derivable_in(
            m.key, members, dc, _seen
        )
    if isinstance(m, Symbol):
        gens = dc.get(m)
        if gens is None or m in _seen:
            return False
        inner = _seen | {m}
        return all(derivable_in(g, members, dc, inner) for g in gens)
    return False


def derives(dc: DC, sym: Symbol, m: Term) -> bool:
    """Is m derivable from sym's generator set (guessables always are)?"""
    if is_guessable(m):
        return True
    gens = dc.get(sym)
    if gens is None:
        return False
    return derivable_in(m, gens, dc, frozenset({sym}))


def normalize_union(*sets: Iterable[Term], dc: Optional[DC] = None) -> frozenset[Term]:
    """Union of knowledge sets, saturated and minimized to normal form.

    Fixpoint of: flatten top-level tuples; elide guessables; expose the
    payload of any ciphertext whose key inverse is derivable (unless the
    payload already is); drop a ciphertext once both its payload and its
    key are derivable from the remaining members.
    """
    dc = dc if dc is not None else EMPTY_DC
    pool: set[Term] = set()
    for s in sets:
        pool.update(s)
    changed = True
    while changed:
        changed = False
        for t in list(pool):
            if isinstance(t, Tup):
                pool.discard(t)
                pool.update(t.items)
                changed = True
            elif is_guessable(t):
                pool.discard(t)
                changed = True
        frozen = frozenset(pool)
        for t in sorted_terms(pool):
            if not isinstance(t, Enc):
                continue
            inv = safe_inverse(t.key)
            if (
                inv is not None
                and derivable_in(inv, frozen, dc)
                and not derivable_in(t.payload, frozen, dc)
            ):
                pool.add(t.payload)
                changed = True
                frozen = frozenset(pool)
        for t in sorted_terms(pool):
            if not isinstance(t, Enc):
                continue
            rest = frozenset(pool - {t})
            if derivable_in(t.payload, rest, dc) and derivable_in(t.key, rest, dc):
                pool.discard(t)
                changed = True
    return frozenset(pool)


# ---------------------------------------------------------------------------
# constraint graph


def dependency_edges(dc: DC) -> dict[Symbol, frozenset[Symbol]]:
    """Edges s1 -> s2 whenever s2's generator set mentions s1."""
    dom = set(dc)
    out: dict[Symbol, set[Symbol]] = {s: set() for s in dom}
    for s2, gens in dc.items():
        for g in gens:
            for sub in subterms(g):
                if isinstance(sub, Symbol) and sub in dom and sub != s2:
                    out[sub].add(s2)
    return {s: frozenset(v) for s, v in out.items()}


def topo_symbols(dc: DC) -> list[Symbol]:
    """Topological sort of the constraint graph, oldest-serial-first among
    ready nodes. Raises ValueError on a cycle."""
    edges = dependency_edges(dc)
    indeg = {s: 0 for s in edges}
    for s, outs in edges.items():
        for o in outs:
            indeg[o] += 1
    ready = sorted((s for s, d in indeg.items() if d == 0), key=lambda s: s.serial)
    order: list[Symbol] = []
    while ready:
        s = ready.pop(0)
        order.append(s)
        for o in sorted(edges[s], key=lambda x: x.serial):
            indeg[o] -= 1
            if indeg[o] == 0:
                ready.append(o)
        ready.sort(key=lambda s: s.serial)
    if len(order) != len(edges):
        raise ValueError("cyclic derivability constraints")
    return order


def is_acyclic(dc: DC) -> bool:
    try:
        topo_symbols(dc)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# bounded denotation sampling
#
# The denotation of a constrained symbol is infinite, so sampling is bounded
# by a fixed discipline. The trace-level oracle re-implements the identical
# discipline, and the two must agree term for term:
#
#   * guessable pool: distinct guessables occurring as subterms anywhere in
#     the constraint map or the target term, in canonical order.
#   * candidates for a symbol: its generator set in canonical order, then
#     pool guessables not already present; then depth levels 2..depth, each
#     appending enc(a, b) for (a, b) over the current list in row-major
#     order, followed by tuples of width 2..width in row-major order,
#     skipping terms already present, stopping at CANDIDATE_CAP.
#   * instances: substitute symbols youngest-topological-first; each pass
#     maps the running instance list in order, expanding a term containing
#     the symbol by every candidate in order, stopping at INSTANCE_CAP.
#   * only ground results are kept, first occurrence wins.

CANDIDATE_CAP = 60
INSTANCE_CAP = 400


def guessable_pool(dc: DC, t: Term) -> list[Term]:
    pool: set[Term] = set()
    for gens in dc.values():
        for g in gens:
            pool.update(x for x in subterms(g) if is_guessable(x))
    pool.update(x for x in subterms(t) if is_guessable(x))
    return sorted_terms(pool)


def symbol_candidates(
    members: frozenset[Term], pool: list[Term], depth: int, width: int
) -> list[Term]:
    out = sorted_terms(members)
    seen = set(out)
    for g in pool:
        if g not in seen:
            out.append(g)
            seen.add(g)
    for _ in range(2, depth + 1):
        if len(out) >= CANDIDATE_CAP:
            break
        snapshot = list(out)
        for a in snapshot:
            for b in snapshot:
                e = Enc(a, b)
                if e not in seen:
                    out.append(e)
                    seen.add(e)
                if len(out) >= CANDIDATE_CAP:
                    return out
        for w in range(2, width + 1):
            for combo in _row_major(snapshot, w):
                tup = Tup(combo)
                if tup not in seen:
                    out.append(tup)
                    seen.add(tup)
                if len(out) >= CANDIDATE_CAP:
                    return out
    return out


def _row_major(items: list[Term], w: int):
    idx = [0] * w
    n = len(items)
    if n == 0:
        return
    while True:
        yield tuple(items[i] for i in idx)
        pos = w - 1
        while pos >= 0:
            idx[pos] += 1
            if idx[pos] < n:
                break
            idx[pos] = 0
            pos -= 1
        if pos < 0:
            return


def denotation_sample(dc: DC, t: Term, depth: int, width: int = 3) -> list[Term]:
    """Ground instances of t under dc, bounded by the documented discipline."""
    order = topo_symbols(dc)
    pool = guessable_pool(dc, t)
    instances: list[Term] = [t]
    for sym in reversed(order):
        cands = symbol_candidates(dc[sym], pool, depth, width)
        nxt: list[Term] = []
        for inst in instances:
            if sym in symbols_of(inst):
                for c in cands:
                    nxt.append(apply_sym_subst({sym: c}, inst))
                    if len(nxt) >= INSTANCE_CAP:
                        break
            else:
                nxt.append(inst)
            if len(nxt) >= INSTANCE_CAP:
                break
        instances = nxt
    out: list[Term] = []
    seen: set[Term] = set()
    for inst in instances:
        if is_ground(inst) and inst not in seen:
            out.append(inst)
            seen.add(inst)
    return out


def render_dc(dc: DC) -> str:
    parts = []
    for sym in sorted(dc, key=lambda s: s.serial):
        gens = ", ".join(repr(g) for g in sorted_terms(dc[sym]))
        parts.append(f"dc({sym!r}, {{ {gens} }})")
    return "; ".join(parts)
