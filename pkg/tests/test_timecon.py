"""Time-constraint solving: exact vectors plus randomized algebra checks."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tequiv.timecon import (
    atom_cmp,
    atoms_vars,
    check_timed_match,
    clock_var,
    eliminate_forall,
    eval_atom,
    expr_const,
    expr_div,
    expr_mul,
    expr_of,
    is_satisfiable,
    local_var,
    mk_atom,
    negate_atom,
    param_var,
    prune_implied,
    rename_atom,
    with_implicit_bounds,
)

tv1 = local_var("tv", 1)
tv2 = local_var("tv", 2)
px = param_var("x")
py = param_var("y")


def V(v):
    return expr_of(v)


def K(c):
    return expr_const(c)


class TestExpressions:
    def test_arithmetic_collects_terms(self):
        e = V(px) + V(py) - V(px) + K(3)
        assert e.vars() == {py}
        assert e.const == 3

    def test_scalar_multiplication_both_ways(self):
        assert expr_mul(K(2), V(px)) == expr_mul(V(px), K(2))
        assert expr_div(V(px).scale(Fraction(4)), K(2)) == V(px).scale(Fraction(2))

    def test_nonlinear_rejected(self):
        with pytest.raises(ValueError, match="nonlinear"):
            expr_mul(V(px), V(py))
        with pytest.raises(ValueError, match="nonlinear"):
            expr_div(K(1), V(px))

    def test_atom_orientation_is_canonical(self):
        assert atom_cmp(V(px), "=", K(5)) == atom_cmp(K(5), "=", V(px))
        assert atom_cmp(V(px), "<=", K(2)) == atom_cmp(K(2), ">=", V(px))


class TestSatisfiability:
    def test_chained_bounds_sat_with_model(self):
        tc = {
            atom_cmp(V(tv1), "<=", K(2)),
            atom_cmp(V(tv2), ">=", K(1) + V(tv1)),
        }
        res = is_satisfiable(tc)
        assert res.sat
        for a in with_implicit_bounds(frozenset(tc)):
            assert eval_atom(a, res.model)

    def test_empty_set_sat(self):
        assert is_satisfiable(frozenset()).sat

    def test_strict_self_comparison_unsat(self):
        assert not is_satisfiable({atom_cmp(V(tv1), ">", V(tv1))}).sat

    def test_equality_chain_propagates(self):
        tc = {
            atom_cmp(V(tv1), "=", K(3)),
            atom_cmp(V(tv2), "=", V(tv1) + K(1)),
            atom_cmp(V(tv2), "<", K(4)),
        }
        assert not is_satisfiable(tc).sat

    def test_clock_variables_are_nonnegative(self):
        assert not is_satisfiable({atom_cmp(V(tv1), "<", K(0))}).sat
        # parameters carry no implicit bound
        assert is_satisfiable({atom_cmp(V(px), "<", K(0))}).sat


class TestProjection:
    def test_bound_transfer(self):
        tc = {atom_cmp(V(py), ">=", V(px)), atom_cmp(V(py), "<=", K(3))}
        assert eliminate_forall(tc, [py]) == [frozenset({atom_cmp(V(px), "<=", K(3))})]

    def test_eliminating_nothing_is_identity(self):
        tc = frozenset(
            {atom_cmp(V(py), ">=", V(px)), atom_cmp(V(py), "<=", K(3))}
        )
        assert eliminate_forall(tc, []) == [tc]

    def test_contradictory_bounds_project_to_nothing(self):
        tc = {atom_cmp(V(py), ">", V(px)), atom_cmp(V(py), "<", V(px))}
        assert eliminate_forall(tc, [py]) == []

    def test_untouched_equalities_survive(self):
        tc = {atom_cmp(V(px), "=", K(5)), atom_cmp(V(py), ">=", V(px))}
        assert eliminate_forall(tc, [py]) == [
            frozenset({atom_cmp(V(px), "=", K(5))})
        ]

    def test_equality_pivot_is_exact(self):
        tc = {
            atom_cmp(V(py), "=", V(px) + K(2)),
            atom_cmp(V(py), "<=", K(10)),
        }
        assert eliminate_forall(tc, [py]) == [
            frozenset({atom_cmp(V(px), "<=", K(8))})
        ]


class TestPruneImplied:
    def test_weaker_bound_dropped(self):
        a = atom_cmp(V(px), "<=", K(1))
        b = atom_cmp(V(px), "<=", K(5))
        assert prune_implied(frozenset({a, b})) == frozenset({a})

    def test_independent_bounds_kept(self):
        a = atom_cmp(V(px), "<=", K(1))
        b = atom_cmp(V(py), "<=", K(1))
        assert prune_implied(frozenset({a, b})) == frozenset({a, b})


class TestTimedMatch:
    def test_renamed_copy_matches(self):
        tc = frozenset(
            {
                atom_cmp(V(tv1), "<=", K(2)),
                atom_cmp(V(tv2), ">=", K(1) + V(tv1)),
            }
        )
        ren = {tv1: local_var("tv", 101), tv2: local_var("tv", 102)}
        tcr = frozenset(rename_atom(a, ren) for a in tc)
        pairs = [(tv1, ren[tv1]), (tv2, ren[tv2])]
        assert check_timed_match(tc, tcr, pairs)
        assert check_timed_match(tcr, tc, [(r, l) for l, r in pairs])

    def test_shared_parameter_offset_matches(self):
        # both sides schedule the observable one dMac after a free start
        d = param_var("dMac")
        side = {atom_cmp(V(d), ">", K(0))}
        xl, sl = clock_var(3), local_var("tv", 1)
        xr, sr = clock_var(103), local_var("tv", 101)
        tcl = frozenset({atom_cmp(V(xl), "=", V(sl) + V(d))} | side)
        tcr = frozenset({atom_cmp(V(xr), "=", V(sr) + V(d))} | side)
        assert check_timed_match(tcl, tcr, [(xl, xr)])
        assert check_timed_match(tcr, tcl, [(xr, xl)])

    def test_distinct_durations_do_not_match(self):
        dr, dv = param_var("dReal"), param_var("dVirtual")
        side = {atom_cmp(V(dr), ">", K(0)), atom_cmp(V(dv), ">", V(dr))}
        xl, xr = clock_var(3), clock_var(103)
        tcl = frozenset({atom_cmp(V(xl), "=", V(dv))} | side)
        tcr = frozenset({atom_cmp(V(xr), "=", V(dr))} | side)
        assert not check_timed_match(tcl, tcr, [(xl, xr)])
        assert not check_timed_match(tcr, tcl, [(xr, xl)])

    def test_unsat_left_matches_vacuously(self):
        bad = frozenset({atom_cmp(K(0), "<", K(0))})
        assert check_timed_match(bad, bad, [])
        assert check_timed_match(bad, frozenset(), [])

    def test_unsat_right_fails_against_sat_left(self):
        bad = frozenset({atom_cmp(K(0), "<", K(0))})
        assert not check_timed_match(frozenset(), bad, [])

    def test_empty_sides_match(self):
        assert check_timed_match(frozenset(), frozenset(), [])


# ---------------------------------------------------------------------------
# randomized checks

PVARS = [param_var(f"p{i}") for i in range(4)]
CVARS = [clock_var(i) for i in (1, 2, 3)]


@st.composite
def lin_exprs(draw, vars_pool):
    e = K(draw(st.integers(-6, 6)))
    for v in vars_pool:
        c = draw(st.integers(-3, 3))
        if c:
            e = e + V(v).scale(Fraction(c))
    return e


def atoms_over(vars_pool):
    return st.builds(
        atom_cmp,
        lin_exprs(vars_pool),
        st.sampled_from(["=", "<=", "<", ">=", ">"]),
        lin_exprs(vars_pool),
    )


param_systems = st.frozensets(atoms_over(PVARS), max_size=6)
clock_systems = st.frozensets(atoms_over(CVARS + [PVARS[0]]), max_size=5)


@given(param_systems)
@settings(max_examples=200)
def test_models_satisfy_their_system(tc):
    res = is_satisfiable(tc)
    if res.sat:
        assert all(eval_atom(a, res.model) for a in tc)


@given(param_systems, st.integers(0, 5))
@settings(max_examples=150)
def test_satisfiability_is_monotone_under_weakening(tc, drop):
    if is_satisfiable(tc).sat:
        smaller = frozenset(sorted(tc, key=repr)[drop:])
        assert is_satisfiable(smaller).sat


@given(param_systems, st.sets(st.sampled_from(PVARS), max_size=3))
@settings(max_examples=150)
def test_projection_preserves_models(tc, targets):
    res = is_satisfiable(tc)
    proj = eliminate_forall(tc, targets)
    if res.sat:
        assert proj, "projection lost a satisfiable system"
        assert all(eval_atom(a, res.model) for a in proj[0])
    elif not proj:
        assert not res.sat


@given(
    atoms_over(PVARS),
    st.tuples(*(st.integers(-8, 8) for _ in PVARS)),
)
@settings(max_examples=200)
def test_negation_is_exact_complement(atom, point):
    model = {v: Fraction(c) for v, c in zip(PVARS, point)}
    holds = eval_atom(atom, model)
    negs = [eval_atom(d, model) for d in negate_atom(atom)]
    assert holds != any(negs)


@given(clock_systems)
@settings(max_examples=100)
def test_timed_match_accepts_renamed_copy(tc):
    ren = {v: clock_var(v.serial + 100) for v in CVARS}
    tcr = frozenset(rename_atom(a, ren) for a in tc)
    pairs = [(v, ren[v]) for v in CVARS if v in atoms_vars(tc)]
    assert check_timed_match(tc, tcr, pairs)
    assert check_timed_match(tcr, tc, [(r, l) for l, r in pairs])
