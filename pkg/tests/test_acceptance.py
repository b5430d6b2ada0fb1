"""Acceptance gate: every deliverable property, one verdict line per test.

The corpus enumerations are computed once per session and shared by the
verdict, count, finiteness, invariant, and regression checks. Count checks
are soft (an order-of-magnitude envelope around the reference experiment);
verdicts are hard. Differential checks compare the symbolic engines against
the ground reference engines on seeded random instances.
"""

from __future__ import annotations

import os
import random
import shutil
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import pytest

import protogen
from refcheck import (
    run_eq_check_diff,
    run_s_gen_diff,
    run_term_approx_diff,
    run_term_eq_approx_diff,
)
from tequiv.equivalence import config_equiv, disjoint_counter
from tequiv.knowledge import derivable_in, topo_symbols
from tequiv.protocol import load_scenario_file, parse_file
from tequiv.semantics import enumerate_traces, instantiate, observables_of
from tequiv.smtbridge import check_timed_match_external, is_satisfiable_external
from tequiv.terms import Counter, Name, Nonce, apply_sym_subst
from tequiv.timecon import (
    atom_cmp,
    check_timed_match,
    clock_var,
    eval_atom,
    expr_const,
    expr_of,
    is_satisfiable,
    local_var,
    param_var,
    with_implicit_bounds,
)

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

LEFT = ("ns", "redpill_vm", "passport_same", "passport_fixed_same", "anon_same")
RIGHT = ("ns", "redpill_real", "passport_diff", "passport_fixed_diff", "anon_diff")


@dataclass
class Run:
    res: object
    obs: list
    wall: float


def _run(name: str, counter: Counter) -> Run:
    scn, roles = load_scenario_file(CORPUS / f"{name}.scn")
    t0 = time.monotonic()
    res = enumerate_traces(instantiate(scn, roles, counter))
    obs = observables_of(res.traces)
    return Run(res, obs, time.monotonic() - t0)


@pytest.fixture(scope="session")
def corpus():
    left = {n: _run(n, Counter()) for n in LEFT}
    right = {n: _run(n, disjoint_counter()) for n in RIGHT}
    return left, right


def _verdict(corpus, l: str, r: str):
    left, right = corpus
    a, b = left[l], right[r]
    t0 = time.monotonic()
    v = config_equiv(a.obs, b.obs, (a.res.states, b.res.states))
    return v, a.wall + b.wall + (time.monotonic() - t0)


# ---------------------------------------------------------------------------
# hard verdicts, each full comparison under a minute


def test_verdict_redpill_not_equivalent(corpus):
    v, wall = _verdict(corpus, "redpill_vm", "redpill_real")
    assert not v.equivalent
    assert wall < 60, f"comparison took {wall:.1f}s"


def test_verdict_passport_not_equivalent(corpus):
    v, wall = _verdict(corpus, "passport_same", "passport_diff")
    assert not v.equivalent
    assert wall < 60, f"comparison took {wall:.1f}s"


def test_verdict_corrected_passport_equivalent(corpus):
    v, wall = _verdict(corpus, "passport_fixed_same", "passport_fixed_diff")
    assert v.equivalent, f"witness: {v.witness}"
    assert wall < 60, f"comparison took {wall:.1f}s"


def test_verdict_anonymity_not_equivalent(corpus):
    v, wall = _verdict(corpus, "anon_same", "anon_diff")
    assert not v.equivalent
    assert wall < 60, f"comparison took {wall:.1f}s"


# ---------------------------------------------------------------------------
# soft count envelopes: within 3x of the reference experiment's counts.
# Counts are scheduling-sensitive; the verdicts above are not.

REF_OBSERVABLES = {
    ("redpill_vm", "redpill_real"): (19, 19),
    ("passport_same", "passport_diff"): (36, 27),
    ("passport_fixed_same", "passport_fixed_diff"): (36, 27),
    ("anon_same", "anon_diff"): (2, 3),
}
REF_STATES = {
    ("redpill_vm", "redpill_real"): (74, 74),
    ("passport_same", "passport_diff"): (138, 112),
    ("passport_fixed_same", "passport_fixed_diff"): (138, 112),
    ("anon_same", "anon_diff"): (7, 9),
}


def _within_3x(mine: int, ref: int) -> bool:
    return Fraction(ref, 3) <= Fraction(mine) <= 3 * ref


def _count_check(corpus, pair, table, measure):
    left, right = corpus
    mine = (measure(left[pair[0]]), measure(right[pair[1]]))
    ref = table[pair]
    for m, r, side in zip(mine, ref, pair):
        assert _within_3x(m, r), (
            f"{side}: {m} vs reference {r} is {m / r:.1f}x, outside the 3x "
            f"envelope (toolchain scheduling explores interleavings "
            f"differently; see README)"
        )


def test_counts_redpill_observables(corpus):
    _count_check(
        corpus, ("redpill_vm", "redpill_real"), REF_OBSERVABLES,
        lambda s: len(s.obs),
    )


def test_counts_redpill_states(corpus):
    _count_check(
        corpus, ("redpill_vm", "redpill_real"), REF_STATES,
        lambda s: s.res.states,
    )


def test_counts_passport_observables(corpus):
    _count_check(
        corpus, ("passport_same", "passport_diff"), REF_OBSERVABLES,
        lambda s: len(s.obs),
    )


def test_counts_passport_states(corpus):
    _count_check(
        corpus, ("passport_same", "passport_diff"), REF_STATES,
        lambda s: s.res.states,
    )


def test_counts_corrected_passport_observables(corpus):
    _count_check(
        corpus, ("passport_fixed_same", "passport_fixed_diff"),
        REF_OBSERVABLES, lambda s: len(s.obs),
    )


def test_counts_corrected_passport_states(corpus):
    _count_check(
        corpus, ("passport_fixed_same", "passport_fixed_diff"), REF_STATES,
        lambda s: s.res.states,
    )


def test_counts_anonymity_observables(corpus):
    _count_check(
        corpus, ("anon_same", "anon_diff"), REF_OBSERVABLES,
        lambda s: len(s.obs),
    )


def test_counts_anonymity_states(corpus):
    _count_check(
        corpus, ("anon_same", "anon_diff"), REF_STATES,
        lambda s: s.res.states,
    )


# ---------------------------------------------------------------------------
# finiteness: enumeration terminates with no step cap


def test_corpus_enumeration_terminates_without_step_cap(corpus):
    left, right = corpus
    for side in (left, right):
        for name, run in side.items():
            assert run.res.traces, name
            assert run.res.states >= 1, name


def test_randomized_protocols_terminate_without_step_cap():
    for i in range(50):
        rng = random.Random(1000 + i)
        text = protogen.rand_protocol_text(rng)
        pf = parse_file(text)
        (scn,) = pf.scenarios.values()
        res = enumerate_traces(instantiate(scn, pf.roles, Counter()))
        assert res.traces, f"instance {i}"


# ---------------------------------------------------------------------------
# differential checks against the ground reference engines


def test_matching_approximation_agrees_with_ground_engine():
    bad = run_term_approx_diff(500, seed=11)
    assert not bad, bad[:3]


def test_restricted_matching_agrees_with_ground_engine():
    bad = run_term_eq_approx_diff(300, seed=11)
    assert not bad, bad[:3]


def test_satisfiability_agrees_with_ground_engine():
    bad, nsat = run_eq_check_diff(500, seed=11)
    assert not bad, bad[:3]
    assert 100 <= nsat <= 450, f"degenerate sat/unsat mix: {nsat}/500"


def test_generation_solutions_sound_and_complete():
    bad, nsound, ncomplete = run_s_gen_diff(300, seed=11)
    assert not bad, bad[:3]
    assert nsound > 5000, f"soundness probe too thin: {nsound}"
    assert ncomplete > 5000, f"completeness probe too thin: {ncomplete}"


# ---------------------------------------------------------------------------
# the time-constraint solver: exact models, known-truth quantified checks,
# and (when a solver binary is around) agreement with an external decision
# procedure


def _rand_system(rng: random.Random):
    pool = rng.sample(
        [param_var(f"p{i}") for i in range(3)]
        + [clock_var(1), clock_var(2)]
        + [local_var("u", 7)],
        rng.randint(1, 6),
    )
    atoms = []
    for _ in range(rng.randint(1, 10)):
        e = expr_const(Fraction(rng.randint(-10, 10)))
        touched = False
        for v in pool:
            if rng.random() < 0.6:
                num = rng.randint(-10, 10)
                if num:
                    e = e + expr_of(v).scale(Fraction(num, rng.randint(1, 4)))
                    touched = True
        if not touched:
            e = e + expr_of(rng.choice(pool))
        atoms.append(atom_cmp(e, rng.choice(["=", "<=", "<", ">=", ">"]), expr_const(0)))
    return frozenset(atoms)


def _forall_instance(rng: random.Random, contradict: bool):
    """A timed-match query with known truth: the right side is a renamed
    copy of the left (matches), unless one paired equality is flipped into
    a strict bound (cannot match)."""
    k = rng.randint(1, 3)
    lvars = [clock_var(10 + i) for i in range(k)]
    rvars = [clock_var(20 + i) for i in range(k)]
    consts = [Fraction(rng.randint(1, 10)) for _ in range(k)]
    tcl = frozenset(
        atom_cmp(expr_of(v), "=", expr_const(c)) for v, c in zip(lvars, consts)
    )
    rights = [
        atom_cmp(expr_of(v), "=", expr_const(c)) for v, c in zip(rvars, consts)
    ]
    if contradict:
        j = rng.randrange(k)
        rights[j] = atom_cmp(
            expr_of(rvars[j]),
            rng.choice(["<", ">"]),
            expr_const(consts[j]),
        )
    return tcl, frozenset(rights), list(zip(lvars, rvars))


def test_linear_solver_models_reevaluate_exactly():
    rng = random.Random(11)
    nsat = 0
    for _ in range(1000):
        tc = _rand_system(rng)
        res = is_satisfiable(tc)
        if res.sat:
            nsat += 1
            full = with_implicit_bounds(tc)
            assert all(eval_atom(a, res.model) for a in full), tc
    assert 100 <= nsat <= 900, f"degenerate sat/unsat mix: {nsat}/1000"


def test_timed_match_decides_known_truth_instances():
    rng = random.Random(11)
    for i in range(100):
        contradict = i >= 50
        tcl, tcr, pairs = _forall_instance(rng, contradict)
        got = check_timed_match(tcl, tcr, pairs)
        assert got == (not contradict), (tcl, tcr, pairs)


def _external_solver() -> str | None:
    env = os.environ.get("TEQUIV_SMT")
    if env:
        return env
    for name, args in (
        ("z3", "-in"),
        ("cvc5", "--lang smt2 -"),
        ("cvc4", "--lang smt2 -"),
    ):
        path = shutil.which(name)
        if path:
            return f"{path} {args}"
    return None


def test_linear_solver_agrees_with_external_solver():
    cmd = _external_solver()
    if cmd is None:
        pytest.skip("no SMT-LIB2 solver on PATH; set TEQUIV_SMT to enable")
    rng = random.Random(11)
    for _ in range(1000):
        tc = _rand_system(rng)
        assert bool(is_satisfiable(tc)) == is_satisfiable_external(tc, cmd), tc


def test_timed_match_agrees_with_external_solver():
    cmd = _external_solver()
    if cmd is None:
        pytest.skip("no SMT-LIB2 solver on PATH; set TEQUIV_SMT to enable")
    rng = random.Random(11)
    for i in range(100):
        tcl, tcr, pairs = _forall_instance(rng, i >= 50)
        internal = check_timed_match(tcl, tcr, pairs)
        external = check_timed_match_external(tcl, tcr, pairs, cmd)
        assert internal == external, (tcl, tcr, pairs)


# ---------------------------------------------------------------------------
# run invariants, checked at every step of every corpus trace


def _step_violations(res, tag: str) -> list:
    viol = []
    for tr in res.traces:
        prev = tr.initial
        for st in tr.steps:
            cfg = st.config
            try:
                topo_symbols(cfg.dc)
            except ValueError:
                viol.append((tag, "constraint cycle", st.rule))
            for m in prev.ik:
                mi = apply_sym_subst(st.ssb, m)
                if mi not in cfg.ik and not derivable_in(mi, cfg.ik, cfg.dc):
                    viol.append((tag, "knowledge lost", st.rule, mi))
            syms = sorted(cfg.dc, key=lambda s: s.serial)
            for older, younger in zip(syms, syms[1:]):
                for g in cfg.dc[older]:
                    if g not in cfg.dc[younger] and not derivable_in(
                        g, cfg.dc[younger], cfg.dc
                    ):
                        viol.append((tag, "constraint shrank", older, younger, g))
            prev = cfg
    return viol


def test_trace_invariants_hold_at_every_step(corpus):
    left, right = corpus
    viol = []
    for side, runs in (("left", left), ("right", right)):
        for name, run in runs.items():
            viol += _step_violations(run.res, f"{side}:{name}")
    assert not viol, viol[:5]


# ---------------------------------------------------------------------------
# regression: the handshake enumeration contains the classic relay trace,
# resolving the responder's inputs to the initiator's nonce, the initiator's
# name, and the responder's nonce


def test_handshake_relay_trace_present(corpus):
    left, _ = corpus
    hits = 0
    for tr in left["ns"].res.traces:
        if not tr.steps or tr.steps[-1].rule != "recv":
            continue
        total: dict = {}
        for st in tr.steps:
            total = {k: apply_sym_subst(st.ssb, v) for k, v in total.items()}
            for k, v in st.ssb.items():
                total.setdefault(k, v)
        resolved = sorted(total.items(), key=lambda kv: kv[0].serial)
        values = tuple(v for _, v in resolved)
        if values == (Nonce(0, 0), Name("alice"), Nonce(1, 0)):
            hits += 1
    assert hits >= 1
