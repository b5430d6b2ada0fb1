"""Black-box bijections, structural approximation, and the cover relation."""

from pathlib import Path

from tequiv.compare import Neq
from tequiv.equivalence import (
    Bridged,
    black_box_set,
    bridge,
    can_eq,
    config_equiv,
    covers,
    disjoint_counter,
    find_bijection,
    restrict_to_bb,
    sym_der,
    term_approx,
    term_eq_approx,
)
from tequiv.protocol import load_scenario_file
from tequiv.semantics import Observable, enumerate_traces, instantiate, observables_of
from tequiv.terms import (
    STAR,
    Enc,
    Name,
    Nonce,
    PubKey,
    Symbol,
    SymKey,
    Text,
    Tup,
)
from tequiv.timecon import clock_var

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

n1, n2 = Nonce(0, 0), Nonce(0, 1)
n1p, n2p = Nonce(7, 0), Nonce(7, 1)
t1, t2, t3 = Text("t1"), Text("t2"), Text("t3")
k1, k2 = SymKey("k1"), SymKey("k2")
k1p, k2p = SymKey("k1p"), SymKey("k2p")


def lab(*ms):
    return tuple(("+", m, clock_var(i)) for i, m in enumerate(ms))


def all_nonces(*ls):
    out = set()
    for _, m, _ in ls:
        out |= {s for s in _subterms(m) if isinstance(s, Nonce)}
    return frozenset(out)


def _subterms(t):
    from tequiv.terms import subterms

    return subterms(t)


# ---------------------------------------------------------------------------
# bijections between black boxes


def test_bijection_rejects_swapped_nonces():
    l1 = lab(n1, n2, Tup((n1, n2)))
    l2 = lab(n1p, n2p, Tup((n2p, n1p)))
    assert find_bijection(l1, l2, all_nonces(*l1), all_nonces(*l2)) is None


def test_bijection_pairs_aligned_nonces():
    l1 = lab(n1, n2, Tup((n1, n2)))
    l2 = lab(n1p, n2p, Tup((n1p, n2p)))
    bij = find_bijection(l1, l2, all_nonces(*l1), all_nonces(*l2))
    assert bij == {n1: n1p, n2: n2p}


def test_bijection_on_opaque_ciphertexts():
    e1, e2 = Enc(t1, k1), Enc(t2, k2)
    e1p, e2p = Enc(t1, k1p), Enc(t2, k2p)
    bb_l = frozenset({e1, e2})
    bb_r = frozenset({e1p, e2p})
    good = find_bijection(
        lab(e1, e2, Tup((e1, e2))), lab(e1p, e2p, Tup((e1p, e2p))), bb_l, bb_r
    )
    assert good == {e1: e1p, e2: e2p}
    swapped = find_bijection(
        lab(e1, e2, Tup((e1, e2))), lab(e1p, e2p, Tup((e2p, e1p))), bb_l, bb_r
    )
    assert swapped is None


def test_bijection_must_stay_injective():
    l1 = lab(n1, n2)
    l2 = lab(n1p, n1p)
    assert find_bijection(l1, l2, all_nonces(*l1), all_nonces(*l2)) is None


def test_bijection_ignores_plain_structure():
    # ground mismatches are left to the term approximation
    l1 = lab(Text("done"))
    l2 = lab(Text("error"))
    assert find_bijection(l1, l2, frozenset(), frozenset()) == {}


# ---------------------------------------------------------------------------
# restriction to black boxes


def test_restrict_keeps_boxes_and_stars_the_rest():
    inner = Enc(t3, k2)
    m = Tup((n1, t1, Enc(Tup((t2, inner)), k1)))
    bb = frozenset({n1, inner})
    # k1 is openable, k2 is not: the k1 layer is kept as structure around
    # the boxes, everything else collapses
    assert restrict_to_bb(m, bb) == Tup(
        (n1, STAR, Enc(Tup((STAR, inner)), STAR))
    )
    assert restrict_to_bb(t1, bb) == STAR


# ---------------------------------------------------------------------------
# structural approximation with derivability constraints


def test_term_approx_unfolds_symbols_through_their_generators():
    nv = Nonce(0, 5)
    t = Text("t", public=True)
    s1, s2 = Symbol(1), Symbol(2)
    sp = Symbol(11)
    m = Tup((nv, Enc(Tup((nv, t, s1, s2)), k1)))
    mp = Tup((nv, Enc(sp, k1)))
    dc = {s1: frozenset({t1, k1}), s2: frozenset({t1, t2, k1, k2})}
    dcp = {sp: frozenset({nv, t1, k1, t2, k2})}
    th = term_approx(m, mp, dc, dcp)
    assert th == {sp: Tup((nv, t, s1, s2))}
    # the other way there is no matching substitution at all
    assert term_approx(mp, m, dcp, dc) is None


def test_term_approx_rejects_underivable_binding():
    s = Symbol(21)
    secret = Text("secret")
    assert term_approx(secret, s, {}, {s: frozenset({t1})}) is None
    assert term_approx(t1, s, {}, {s: frozenset({t1})}) == {s: t1}


def test_sym_der_membership_beats_decomposition():
    blob = Enc(t1, k2)  # k2 itself is not in the generators
    assert sym_der(blob, frozenset({blob}), {}, {})
    assert not sym_der(blob, frozenset({t1}), {}, {})


def test_can_eq_wildcards_and_composition():
    s = Symbol(1)
    alice = Name("alice")
    m2 = Enc(Tup((n1, Text("t", public=True))), PubKey(alice))
    dc = {s: frozenset({n1, Enc(t1, k1)})}
    # n1 is known, the text and key are guessable: the intruder could have
    # sent exactly this, so equality is possible
    assert can_eq(s, m2, dc, ())
    # under a key it cannot derive, composition fails
    assert not can_eq(s, Enc(Tup((n1, Text("t", public=True))), k2), dc, ())


def test_can_eq_never_conjures_recorded_blobs():
    # the generators contain enc(t1,k1) but composing enc(X,k1) afresh
    # requires k1 itself; matching open terms against the blob is not allowed
    s, x = Symbol(1), Symbol(2)
    dc = {s: frozenset({Enc(t1, k1)}), x: frozenset({t1})}
    assert not can_eq(s, Enc(x, k1), dc, ())


def test_can_eq_respects_disequalities():
    s = Symbol(1)
    assert not can_eq(s, t1, {}, (Neq(s, t1),))
    assert can_eq(s, t1, {}, (Neq(s, t2),))


def test_term_eq_approx_catches_forgeable_disequality():
    # a run that rejected a well-formed response is only covered by one
    # whose rejection constraint the intruder could not have violated
    alice = Name("alice")
    eve = Name("eve")
    ik = frozenset({n1, PubKey(alice), PubKey(eve)})
    s = Symbol(1)
    sp = Symbol(11)
    sv = Symbol(12)
    left = Bridged(
        lab(s), ik, {s: frozenset(ik)}, frozenset()
    )
    right = Bridged(
        lab(sp),
        ik,
        {sp: frozenset(ik), sv: frozenset(ik)},
        frozenset({Neq(sp, Enc(Tup((n1, sv)), PubKey(alice)))}),
    )
    ml = left.labels[0][1]
    mr = right.labels[0][1]
    # plain matching succeeds, but the right side's disequality could be
    # broken by material the left intruder can build, so no cover
    assert term_approx(ml, mr, left.dc, right.dc) == {sp: s}
    assert not term_eq_approx(ml, mr, left, right)


def test_term_eq_approx_accepts_unbreakable_disequality():
    s = Symbol(1)
    sp = Symbol(11)
    ik = frozenset({n1})
    left = Bridged(lab(s), ik, {s: frozenset(ik)}, frozenset())
    right = Bridged(
        lab(sp),
        ik,
        {sp: frozenset(ik)},
        frozenset({Neq(sp, Enc(n1, k2))}),  # k2 underivable on the left
    )
    assert term_eq_approx(left.labels[0][1], right.labels[0][1], left, right)


# ---------------------------------------------------------------------------
# whole corpus verdicts at the observable level


def side(path, counter=None):
    scen, roles = load_scenario_file(CORPUS / path)
    res = enumerate_traces(instantiate(scen, roles, counter))
    return observables_of(res.traces), res.states


def verdict(a, b):
    ol, sl = side(a)
    orr, sr = side(b, disjoint_counter())
    return config_equiv(ol, orr, (sl, sr))


def test_scenario_covers_itself():
    ol, sl = side("anon_same.scn")
    orr, sr = side("anon_same.scn", disjoint_counter())
    assert covers(ol[0], orr[0])
    assert covers(orr[0], ol[0])


def test_anonymity_verdict_not_equivalent():
    v = verdict("anon_same.scn", "anon_diff.scn")
    assert not v.equivalent
    assert v.witness is not None
    assert v.to_json()["equivalent"] is False


def test_ns_self_equivalence():
    v = verdict("ns.scn", "ns.scn")
    assert v.equivalent
    assert v.witness is None


def test_timing_only_distinction_is_caught():
    # the anonymous pair agrees on every message; only the response time
    # separates the two sides
    ol, _ = side("anon_same.scn")
    orr, _ = side("anon_diff.scn", disjoint_counter())

    def ignore_time(tcl, tcr, pairs):
        return True

    assert covers(ol[0], orr[0], ignore_time)
    assert not covers(ol[0], orr[0])
