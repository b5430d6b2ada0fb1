"""Term algebra for protocol messages.

All terms are immutable and hashable. Two placeholder kinds exist and must
not be confused: a Var is a role-local pattern variable that is replaced
during execution, while a Symbol stands for attacker-chosen content and is
only ever narrowed by symbol substitutions produced by the solver.

A term is *ground* when it contains neither kind, and *symbolic* when it
contains no Var (Symbols allowed).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional


class Term:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Text(Term):
    """Text constant. Public texts can be produced by anyone on the network."""

    name: str
    public: bool = False

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Name(Term):
    """Player name; always public."""

    value: str

    def __repr__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class Nonce(Term):
    """Fresh value n(owner, serial); owner is the creating player's index."""

    owner: int
    serial: int

    def __repr__(self) -> str:
        return f"n({self.owner},{self.serial})"


@dataclass(frozen=True, slots=True)
class SymKey(Term):
    """Named symmetric key; its own inverse."""

    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class PubKey(Term):
    # holder is a Name, Var, or Symbol
    of: Term

    def __repr__(self) -> str:
        return f"pk({self.of!r})"


@dataclass(frozen=True, slots=True)
class SecKey(Term):
    of: Term

    def __repr__(self) -> str:
        return f"sk({self.of!r})"


@dataclass(frozen=True, slots=True)
class Var(Term):
    """Role-local pattern variable (sort: message)."""

    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Symbol(Term):
    """Attacker-content placeholder sym(serial); serials are creation-ordered."""

    serial: int

    def __repr__(self) -> str:
        return f"sym({self.serial})"


@dataclass(frozen=True, slots=True)
class Enc(Term):
    payload: Term
    key: Term

    def __repr__(self) -> str:
        return f"enc({self.payload!r},{self.key!r})"


@dataclass(frozen=True, slots=True)
class Tup(Term):
    # always at least 2 elements; build through mk_tuple
    items: tuple[Term, ...]

    def __repr__(self) -> str:
        return "<" + ",".join(repr(i) for i in self.items) + ">"


@dataclass(frozen=True, slots=True)
class Star(Term):
    """Opaque-content marker used when projecting terms onto their black boxes."""

    def __repr__(self) -> str:
        return "*"


STAR = Star()


def mk_tuple(items: Iterable[Term]) -> Term:
    """Tuple constructor; the singleton tuple is identified with its element."""
    elems = tuple(items)
    if not elems:
        raise ValueError("empty tuple")
    if len(elems) == 1:
        return elems[0]
    return Tup(elems)


# ---------------------------------------------------------------------------
# traversal


def children(t: Term) -> tuple[Term, ...]:
    if isinstance(t, Enc):
        return (t.payload, t.key)
    if isinstance(t, Tup):
        return t.items
    if isinstance(t, (PubKey, SecKey)):
        return (t.of,)
    return ()


def subterms(t: Term) -> Iterator[Term]:
    """Pre-order traversal, including t itself."""
    stack = [t]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(children(cur)))


def vars_of(t: Term) -> frozenset[Var]:
    return frozenset(s for s in subterms(t) if isinstance(s, Var))


def vars_in_order(t: Term) -> list[Var]:
    """Distinct variables in left-to-right first-occurrence order."""
    seen: list[Var] = []
    for s in subterms(t):
        if isinstance(s, Var) and s not in seen:
            seen.append(s)
    return seen


def symbols_of(t: Term) -> frozenset[Symbol]:
    return frozenset(s for s in subterms(t) if isinstance(s, Symbol))


def is_ground(t: Term) -> bool:
    return not any(isinstance(s, (Var, Symbol)) for s in subterms(t))


def is_symbolic(t: Term) -> bool:
    """No Var occurs; Symbols are fine."""
    return not any(isinstance(s, Var) for s in subterms(t))


# ---------------------------------------------------------------------------
# classification


def is_guessable(t: Term) -> bool:
    """True for terms any network party can produce out of thin air:
    player names, public keys of named players, and declared-public texts."""
    if isinstance(t, Name):
        return True
    if isinstance(t, PubKey) and isinstance(t.of, Name):
        return True
    if isinstance(t, Text) and t.public:
        return True
    return False


def inverse_key(k: Term) -> Term:
    if isinstance(k, PubKey):
        return SecKey(k.of)
    if isinstance(k, SecKey):
        return PubKey(k.of)
    if isinstance(k, SymKey):
        return k
    raise ValueError("not a key")


def safe_inverse(k: Term) -> Optional[Term]:
    """inverse_key, or None when k is not a concrete key."""
    if isinstance(k, (PubKey, SecKey, SymKey)):
        return inverse_key(k)
    return None


# ---------------------------------------------------------------------------
# canonical ordering

_TAGS = {
    Text: 0,
    Name: 1,
    Nonce: 2,
    SymKey: 3,
    PubKey: 4,
    SecKey: 5,
    Var: 6,
    Symbol: 7,
    Enc: 8,
    Tup: 9,
    Star: 10,
}


def order_key(t: Term) -> tuple:
    """Total order on terms: variant tag first, then contents lexicographically."""
    tag = _TAGS[type(t)]
    if isinstance(t, Text):
        return (tag, t.name, t.public)
    if isinstance(t, Name):
        return (tag, t.value)
    if isinstance(t, Nonce):
        return (tag, t.owner, t.serial)
    if isinstance(t, SymKey):
        return (tag, t.name)
    if isinstance(t, (PubKey, SecKey)):
        return (tag, order_key(t.of))
    if isinstance(t, Var):
        return (tag, t.name)
    if isinstance(t, Symbol):
        return (tag, t.serial)
    if isinstance(t, Enc):
        return (tag, order_key(t.payload), order_key(t.key))
    if isinstance(t, Tup):
        return (tag, len(t.items)) + tuple(order_key(i) for i in t.items)
    return (tag,)


def sorted_terms(ts: Iterable[Term]) -> list[Term]:
    return sorted(ts, key=order_key)


# ---------------------------------------------------------------------------
# substitution

VarSubst = Mapping[Var, Term]
SymSubst = Mapping[Symbol, Term]


def apply_var_subst(s: VarSubst, t: Term) -> Term:
    if not s:
        return t
    if isinstance(t, Var):
        return s.get(t, t)
    if isinstance(t, Enc):
        return Enc(apply_var_subst(s, t.payload), apply_var_subst(s, t.key))
    if isinstance(t, Tup):
        return Tup(tuple(apply_var_subst(s, i) for i in t.items))
    if isinstance(t, PubKey):
        return PubKey(apply_var_subst(s, t.of))
    if isinstance(t, SecKey):
        return SecKey(apply_var_subst(s, t.of))
    return t


def apply_sym_subst(d: SymSubst, t: Term) -> Term:
    if not d:
        return t
    if isinstance(t, Symbol):
        return d.get(t, t)
    if isinstance(t, Enc):
        return Enc(apply_sym_subst(d, t.payload), apply_sym_subst(d, t.key))
    if isinstance(t, Tup):
        return Tup(tuple(apply_sym_subst(d, i) for i in t.items))
    if isinstance(t, PubKey):
        return PubKey(apply_sym_subst(d, t.of))
    if isinstance(t, SecKey):
        return SecKey(apply_sym_subst(d, t.of))
    return t


def compose_sym(base: dict[Symbol, Term], sym: Symbol, m: Term) -> dict[Symbol, Term]:
    """Extend base with sym -> m, keeping the whole map idempotent."""
    one = {sym: m}
    out = {s: apply_sym_subst(one, r) for s, r in base.items()}
    out[sym] = m
    return out


# ---------------------------------------------------------------------------
# unification (symbols are the unifiable class; Vars are inert constants here)


def _walk(t: Term, subst: dict[Symbol, Term]) -> Term:
    while isinstance(t, Symbol) and t in subst:
        t = subst[t]
    return t


def _occurs(s: Symbol, t: Term, subst: dict[Symbol, Term]) -> bool:
    stack = [t]
    while stack:
        cur = _walk(stack.pop(), subst)
        if cur == s:
            return True
        stack.extend(children(cur))
    return False


def unify(pairs: Iterable[tuple[Term, Term]]) -> Optional[dict[Symbol, Term]]:
    """Most general unifier treating Symbols as unknowns, with occur check.

    When two symbols meet, the younger (larger serial) is bound to the older,
    so survivors are always the earliest-created symbols. Returns an
    idempotent substitution, or None when the terms do not unify.
    """
    subst: dict[Symbol, Term] = {}
    work = list(pairs)
    while work:
        a, b = work.pop()
        a, b = _walk(a, subst), _walk(b, subst)
        if a == b:
            continue
        if isinstance(a, Symbol) or isinstance(b, Symbol):
            if isinstance(a, Symbol) and isinstance(b, Symbol):
                # orient younger -> older
                s, m = (a, b) if a.serial > b.serial else (b, a)
            elif isinstance(a, Symbol):
                s, m = a, b
            else:
                s, m = b, a
            if _occurs(s, m, subst):
                return None
            subst[s] = m
            continue
        if isinstance(a, Enc) and isinstance(b, Enc):
            work.append((a.payload, b.payload))
            work.append((a.key, b.key))
            continue
        if isinstance(a, Tup) and isinstance(b, Tup) and len(a.items) == len(b.items):
            work.extend(zip(a.items, b.items))
            continue
        if isinstance(a, PubKey) and isinstance(b, PubKey):
            work.append((a.of, b.of))
            continue
        if isinstance(a, SecKey) and isinstance(b, SecKey):
            work.append((a.of, b.of))
            continue
        return None
    # close to idempotence; acyclic by occur check
    out: dict[Symbol, Term] = {}
    for s in subst:
        t = apply_sym_subst(subst, subst[s])
        while True:
            t2 = apply_sym_subst(subst, t)
            if t2 == t:
                break
            t = t2
        out[s] = t
    return out


def match(pattern: Term, instance: Term) -> Optional[dict[Symbol, Term]]:
    """One-sided matching: a substitution th over pattern's Symbols with
    th[pattern] = instance. Symbols in the instance are treated as constants."""
    th: dict[Symbol, Term] = {}
    work = [(pattern, instance)]
    while work:
        p, g = work.pop()
        if isinstance(p, Symbol):
            if p in th:
                if th[p] != g:
                    return None
            else:
                th[p] = g
            continue
        if type(p) is not type(g):
            return None
        if isinstance(p, Enc):
            work.append((p.payload, g.payload))
            work.append((p.key, g.key))
        elif isinstance(p, Tup):
            if len(p.items) != len(g.items):
                return None
            work.extend(zip(p.items, g.items))
        elif isinstance(p, PubKey) or isinstance(p, SecKey):
            work.append((p.of, g.of))
        elif p != g:
            return None
    return th


# ---------------------------------------------------------------------------
# fresh-serial service

# owner index reserved for nonces introduced while aligning two observables
BRIDGE_OWNER = 99


class Counter:
    """Issues fresh serials for nonces, symbols, and time variables.

    One instance per enumeration run keeps serial numbering reproducible;
    the lock makes it safe to share across parallel workers.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._sym = 0
        self._nonce: dict[int, int] = {}
        self._streams: dict[str, int] = {}

    def fresh_symbol(self) -> Symbol:
        with self._lock:
            self._sym += 1
            return Symbol(self._sym)

    def fresh_nonce(self, owner: int) -> Nonce:
        with self._lock:
            serial = self._nonce.get(owner, 0)
            self._nonce[owner] = serial + 1
            return Nonce(owner, serial)

    def next_serial(self, stream: str) -> int:
        with self._lock:
            n = self._streams.get(stream, 0)
            self._streams[stream] = n + 1
            return n

    def snapshot(self) -> tuple:
        """Immutable state for storing inside a configuration; serials then
        depend only on the path taken, not on exploration order."""
        with self._lock:
            return (
                self._sym,
                tuple(sorted(self._nonce.items())),
                tuple(sorted(self._streams.items())),
            )

    @classmethod
    def from_snapshot(cls, snap: tuple) -> "Counter":
        c = cls()
        c._sym = snap[0]
        c._nonce = dict(snap[1])
        c._streams = dict(snap[2])
        return c
