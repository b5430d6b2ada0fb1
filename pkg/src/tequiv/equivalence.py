"""Observational equivalence of two configurations.

Two sides are equivalent when every observable of one has a counterpart on
the other that an intruder measuring messages and their timing cannot tell
apart. Message comparison is structural up to the material the intruder
cannot open: nonces and undecryptable ciphertexts are black boxes, a
bijection between the two sides' boxes is fixed first, and the remaining
structure is checked by one-sided matching validated against the symbols'
derivability constraints. Timing is checked by projecting each side's
constraints onto the label clocks and asking whether either side admits a
schedule the other excludes.

The two sides must be enumerated with disjoint serial ranges; see
disjoint_counter().
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .compare import Neq, eq_check
from .knowledge import DC, derivable_in
from .semantics import Observable
from .terms import (
    BRIDGE_OWNER,
    STAR,
    Counter,
    Enc,
    Nonce,
    Symbol,
    Term,
    Tup,
    apply_sym_subst,
    is_guessable,
    match,
    safe_inverse,
    symbols_of,
    unify,
)
from .timecon import Atom, TimeVar, check_timed_match

SERIAL_GAP = 10_000_000


def disjoint_counter() -> Counter:
    """A counter whose symbols, nonces, and clock variables can never collide
    with those of a side enumerated from a fresh counter."""
    return Counter.from_snapshot(
        (
            SERIAL_GAP,
            tuple((i, SERIAL_GAP) for i in range(64)),
            (("clock", SERIAL_GAP),),
        )
    )


# ---------------------------------------------------------------------------
# black boxes and the bijection between them


def black_box_set(ob: Observable) -> frozenset[Term]:
    """Label subterms the intruder cannot look inside: nonces, and
    encryptions whose inverse key it cannot derive."""
    out: set[Term] = set()

    def walk(t: Term) -> None:
        if isinstance(t, Nonce):
            out.add(t)
        elif isinstance(t, Enc):
            ki = safe_inverse(t.key)
            if ki is None or not derivable_in(ki, ob.ik, ob.dc):
                out.add(t)
            walk(t.payload)
            walk(t.key)
        elif isinstance(t, Tup):
            for i in t.items:
                walk(i)

    for _, m, _ in ob.labels:
        walk(m)
    return frozenset(out)


def _has_bb(t: Term, bb: frozenset[Term]) -> bool:
    if t in bb:
        return True
    if isinstance(t, Enc):
        return _has_bb(t.payload, bb) or _has_bb(t.key, bb)
    if isinstance(t, Tup):
        return any(_has_bb(i, bb) for i in t.items)
    return False


def restrict_to_bb(t: Term, bb: frozenset[Term]) -> Term:
    if t in bb:
        return t
    if not _has_bb(t, bb):
        return STAR
    if isinstance(t, Enc):
        return Enc(restrict_to_bb(t.payload, bb), restrict_to_bb(t.key, bb))
    return Tup(tuple(restrict_to_bb(i, bb) for i in t.items))


def find_bijection(
    labels_l, labels_r, bb_l: frozenset[Term], bb_r: frozenset[Term]
) -> Optional[dict[Term, Term]]:
    """Pair the black boxes occurring at mirrored label positions. Fails when
    a box faces plain structure or the pairing stops being one-to-one."""
    fwd: dict[Term, Term] = {}
    bwd: dict[Term, Term] = {}

    def walk(a: Term, b: Term) -> bool:
        abb, bbb = a in bb_l, b in bb_r
        if abb and bbb:
            if fwd.get(a, b) != b or bwd.get(b, a) != a:
                return False
            fwd[a] = b
            bwd[b] = a
            return True
        if abb or bbb:
            return False
        if not _has_bb(a, bb_l) and not _has_bb(b, bb_r):
            return True
        if isinstance(a, Enc) and isinstance(b, Enc):
            return walk(a.payload, b.payload) and walk(a.key, b.key)
        if isinstance(a, Tup) and isinstance(b, Tup) and len(a.items) == len(b.items):
            return all(walk(x, y) for x, y in zip(a.items, b.items))
        return False

    for (_, ma, _), (_, mb, _) in zip(labels_l, labels_r):
        if not walk(ma, mb):
            return None
    return fwd


# ---------------------------------------------------------------------------
# bridging: replace paired boxes by shared constants on both sides


@dataclass(frozen=True, eq=False)
class Bridged:
    labels: tuple[tuple[str, Term, TimeVar], ...]
    ik: frozenset[Term]
    dc: DC
    eq: frozenset


def _replace(t: Term, table: dict[Term, Term]) -> Term:
    if t in table:
        return table[t]
    if isinstance(t, Enc):
        return Enc(_replace(t.payload, table), _replace(t.key, table))
    if isinstance(t, Tup):
        return Tup(tuple(_replace(i, table) for i in t.items))
    return t


def _bridge_one(ob: Observable, table: dict[Term, Term]) -> Bridged:
    return Bridged(
        tuple((s, _replace(m, table), tv) for s, m, tv in ob.labels),
        frozenset(_replace(m, table) for m in ob.ik),
        {k: frozenset(_replace(g, table) for g in v) for k, v in ob.dc.items()},
        frozenset(
            type(c)(_replace(c.lhs, table), _replace(c.rhs, table)) for c in ob.eq
        ),
    )


def bridge(
    ob_l: Observable, ob_r: Observable, bij: dict[Term, Term]
) -> tuple[Bridged, Bridged]:
    left = {a: Nonce(BRIDGE_OWNER, i) for i, a in enumerate(bij)}
    right = {b: Nonce(BRIDGE_OWNER, i) for i, b in enumerate(bij.values())}
    return _bridge_one(ob_l, left), _bridge_one(ob_r, right)


# ---------------------------------------------------------------------------
# structural approximation of message equality


def sym_der(val: Term, gens: frozenset[Term], dc_v: DC, dc_g: DC) -> bool:
    """Could material bound to a hole have been built from the hole's
    generators? Symbols on the val side unfold through their own constraints
    (dc_v); membership is tried before decomposition so recorded blobs count."""
    if isinstance(val, Symbol):
        if val in gens:
            return True
        sub = dc_v.get(val)
        if sub is None:
            return False
        return all(sym_der(g, gens, dc_v, dc_g) for g in sub)
    if is_guessable(val):
        return True
    if isinstance(val, Enc):
        if val in gens:
            return True
        return sym_der(val.payload, gens, dc_v, dc_g) and sym_der(
            val.key, gens, dc_v, dc_g
        )
    if isinstance(val, Tup):
        return all(sym_der(i, gens, dc_v, dc_g) for i in val.items)
    return val in gens


def term_approx(
    m: Term, pat: Term, dc_m: DC, dc_pat: DC
) -> Optional[dict[Symbol, Term]]:
    """Match pat's symbols as holes against m and validate every binding
    against the hole's generator set."""
    th = match(pat, m)
    if th is None:
        return None
    for sym, val in th.items():
        gens = dc_pat.get(sym)
        if gens is not None and not sym_der(val, gens, dc_m, dc_pat):
            return None
    return th


def _buildable(val: Term, gens: frozenset[Term], dc: DC) -> bool:
    # compose-only: no matching of open terms against recorded blobs, so a
    # ciphertext under an underivable key can never be conjured whole
    if isinstance(val, Symbol) or is_guessable(val):
        return True
    if not symbols_of(val):
        return derivable_in(val, gens, dc)
    if isinstance(val, Enc):
        return _buildable(val.payload, gens, dc) and _buildable(val.key, gens, dc)
    if isinstance(val, Tup):
        return all(_buildable(i, gens, dc) for i in val.items)
    return True


def can_eq(m1: Term, m2: Term, dc: DC, neqs: Iterable) -> bool:
    """Could the two terms denote the same value under dc, without breaking
    any of the given disequalities? Errs on the side of yes."""
    sg = unify([(m1, m2)])
    if sg is None:
        return False
    for c in neqs:
        if apply_sym_subst(sg, c.lhs) == apply_sym_subst(sg, c.rhs):
            return False
    for sym, val in sg.items():
        gens = dc.get(sym)
        if gens is not None and not _buildable(val, gens, dc):
            return False
    return True


def term_eq_approx(ma: Term, mb: Term, a: Bridged, b: Bridged) -> bool:
    """One direction of label agreement: b's side can produce ma's structure,
    and none of b's disequalities could collapse on a's side."""
    ra = eq_check(a.eq, a.dc)
    if not ra:
        return True
    rb = eq_check(b.eq, b.dc)
    if not rb:
        return False
    sa = ra.witness or {}
    sb = rb.witness or {}
    ta = apply_sym_subst(sa, ma)
    tb = apply_sym_subst(sb, mb)
    # the constraint maps that come back with the witnesses carry any
    # narrowing the equations forced, so unfold through those
    rda = ra.dc if ra.dc is not None else a.dc
    rdb = rb.dc if rb.dc is not None else b.dc
    dca = {k: frozenset(apply_sym_subst(sa, g) for g in v) for k, v in rda.items()}
    dcb = {k: frozenset(apply_sym_subst(sb, g) for g in v) for k, v in rdb.items()}
    th = term_approx(ta, tb, dca, dcb)
    if th is None:
        return False
    neqs_a = tuple(
        Neq(apply_sym_subst(sa, c.lhs), apply_sym_subst(sa, c.rhs))
        for c in a.eq
        if isinstance(c, Neq)
    )
    for c in b.eq:
        if not isinstance(c, Neq):
            continue
        lhs = apply_sym_subst(th, apply_sym_subst(sb, c.lhs))
        rhs = apply_sym_subst(th, apply_sym_subst(sb, c.rhs))
        comb = dict(dca)
        for s in symbols_of(lhs) | symbols_of(rhs):
            if s not in comb and s in dcb:
                comb[s] = dcb[s]
        if can_eq(lhs, rhs, comb, neqs_a):
            return False
    return True


# ---------------------------------------------------------------------------
# observables and whole configurations

TimedMatch = Callable[[frozenset[Atom], frozenset[Atom], list], bool]


def covers(
    a: Observable, b: Observable, timed_match: TimedMatch = check_timed_match
) -> bool:
    """Every run a stands for is one b admits: same label signs, a box
    bijection, a's material instantiating b's patterns, b's disequalities
    impossible on a's side, and a's schedules inside b's projection. The
    relation is directional; equivalence asks for a cover both ways."""
    if len(a.labels) != len(b.labels):
        return False
    if any(sa != sb for (sa, _, _), (sb, _, _) in zip(a.labels, b.labels)):
        return False
    bij = find_bijection(a.labels, b.labels, black_box_set(a), black_box_set(b))
    if bij is None:
        return False
    ba, bb = bridge(a, b, bij)
    for (_, ma, _), (_, mb, _) in zip(ba.labels, bb.labels):
        if not term_eq_approx(ma, mb, ba, bb):
            return False
    pairs = [
        (ta, tb) for (_, _, ta), (_, _, tb) in zip(a.labels, b.labels)
    ] + [(a.end, b.end)]
    return timed_match(a.tc, b.tc, pairs)


@dataclass
class Verdict:
    equivalent: bool
    left_observables: int
    right_observables: int
    states: tuple[int, int]
    witness: Optional[dict]

    def to_json(self) -> dict:
        return {
            "equivalent": self.equivalent,
            "left_observables": self.left_observables,
            "right_observables": self.right_observables,
            "states_explored": list(self.states),
            "witness": self.witness,
        }


def _signature(ob: Observable) -> tuple[int, str]:
    return len(ob.labels), "".join(s for s, _, _ in ob.labels)


def _witness_of(ob: Observable, side: str) -> dict:
    return {
        "side": side,
        "labels": [f"{s}{m!r} @ {tv.name}{tv.serial}" for s, m, tv in ob.labels],
        "key": ob.key,
    }


def _match_all(
    mine: list[Observable],
    theirs: list[Observable],
    side: str,
    timed_match: TimedMatch,
    cache: dict,
) -> Optional[dict]:
    """First observable on this side not covered by any counterpart."""
    buckets: dict[tuple[int, str], list[Observable]] = {}
    for ob in theirs:
        buckets.setdefault(_signature(ob), []).append(ob)
    for ob in sorted(mine, key=lambda o: o.key):
        found = False
        for cand in sorted(buckets.get(_signature(ob), ()), key=lambda o: o.key):
            k = (ob.key, cand.key)
            if k not in cache:
                cache[k] = covers(ob, cand, timed_match)
            if cache[k]:
                found = True
                break
        if not found:
            return _witness_of(ob, side)
    return None


def _chunk_worker(args):
    mine, theirs, side = args
    return _match_all(mine, theirs, side, check_timed_match, {})


def config_equiv(
    obs_l: list[Observable],
    obs_r: list[Observable],
    states: tuple[int, int],
    timed_match: TimedMatch = check_timed_match,
    jobs: int = 1,
) -> Verdict:
    witness = None
    if jobs > 1 and timed_match is check_timed_match:
        from concurrent.futures import ProcessPoolExecutor

        def split(obs, n):
            srt = sorted(obs, key=lambda o: o.key)
            return [srt[i::n] for i in range(n) if srt[i::n]]

        tasks = [(c, obs_r, "left") for c in split(obs_l, jobs)] + [
            (c, obs_l, "right") for c in split(obs_r, jobs)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            hits = [w for w in ex.map(_chunk_worker, tasks) if w is not None]
        if hits:
            witness = min(hits, key=lambda w: (w["side"], w["key"]))
    else:
        cache: dict = {}
        witness = _match_all(obs_l, obs_r, "left", timed_match, cache)
        if witness is None:
            witness = _match_all(obs_r, obs_l, "right", timed_match, cache)
    return Verdict(
        witness is None, len(obs_l), len(obs_r), states, witness
    )
