"""Shared hypothesis strategies for building random terms."""

from hypothesis import strategies as st

from tequiv.terms import (
    Enc,
    Name,
    Nonce,
    PubKey,
    SecKey,
    SymKey,
    Symbol,
    Text,
    Tup,
    Var,
)

names = st.sampled_from(["alice", "bob", "eve"]).map(Name)
texts = st.sampled_from(
    [Text("t1"), Text("t2"), Text("t3"), Text("hello", public=True)]
)
nonces = st.tuples(st.integers(0, 2), st.integers(0, 3)).map(lambda p: Nonce(*p))
symkeys = st.sampled_from(["k", "k2"]).map(SymKey)
asym_keys = st.tuples(st.booleans(), names).map(
    lambda p: PubKey(p[1]) if p[0] else SecKey(p[1])
)
keys = st.one_of(symkeys, asym_keys)

ground_atoms = st.one_of(names, texts, nonces, symkeys, asym_keys)

symbols = st.integers(1, 5).map(Symbol)
variables = st.sampled_from(["X", "Y", "Z"]).map(Var)


def ground_terms(max_leaves: int = 6):
    """Ground message terms; Enc keys are actual keys."""
    return st.recursive(
        ground_atoms,
        lambda sub: st.one_of(
            st.tuples(sub, keys).map(lambda p: Enc(*p)),
            st.lists(sub, min_size=2, max_size=3).map(lambda xs: Tup(tuple(xs))),
        ),
        max_leaves=max_leaves,
    )


def symbolic_terms(max_leaves: int = 6):
    """Terms over ground atoms plus symbols; no variables."""
    return st.recursive(
        st.one_of(ground_atoms, symbols),
        lambda sub: st.one_of(
            st.tuples(sub, st.one_of(keys, symbols)).map(lambda p: Enc(*p)),
            st.lists(sub, min_size=2, max_size=3).map(lambda xs: Tup(tuple(xs))),
        ),
        max_leaves=max_leaves,
    )


def pattern_terms(max_leaves: int = 6):
    """Terms that may also contain variables, as found in role bodies."""
    return st.recursive(
        st.one_of(ground_atoms, symbols, variables),
        lambda sub: st.one_of(
            st.tuples(sub, st.one_of(keys, symbols, variables)).map(
                lambda p: Enc(*p)
            ),
            st.lists(sub, min_size=2, max_size=3).map(lambda xs: Tup(tuple(xs))),
        ),
        max_leaves=max_leaves,
    )
