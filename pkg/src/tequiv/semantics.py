"""Timed protocol runs.

Instantiates a scenario into a configuration, applies the step rules (new,
send, receive, conditional), and enumerates every maximal symbolic trace by
exhaustive depth-first expansion. Labels are recorded the moment a step
fires and are never rewritten by substitutions found later; equivalence
checking reconciles them through the comparison-time witnesses instead.

Each configuration carries its own counter snapshot, so the serials a trace
allocates depend only on the steps taken, never on exploration order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .compare import Eq, Neq, eq_check
from .intruder import s_gen, s_gen_match
from .knowledge import normalize_union
from .protocol import (
    Cmd,
    CmdIf,
    CmdNew,
    CmdRecv,
    CmdSend,
    PEnc,
    PIdent,
    PKey,
    PPk,
    PSk,
    PTerm,
    PTup,
    Role,
    Scenario,
    TBin,
    TCur,
    TExpr,
    TimeCon,
    TName,
    TNum,
    TScale,
    is_message_var,
)
from .terms import (
    Counter,
    Enc,
    Name,
    Nonce,
    PubKey,
    SecKey,
    Symbol,
    SymKey,
    Term,
    Text,
    Tup,
    Var,
    apply_sym_subst,
    apply_var_subst,
    is_guessable,
    order_key,
    safe_inverse,
    vars_in_order,
)
from .timecon import (
    CUR,
    Atom,
    TimeExpr,
    TimeVar,
    atom_cmp,
    atoms_vars,
    clock_var,
    eliminate_forall,
    expr_const,
    expr_of,
    is_satisfiable,
    local_var,
    param_var,
    prune_implied,
    rename_atom,
)

# ---------------------------------------------------------------------------
# runtime commands: role bodies with names resolved to terms and time atoms


@dataclass(frozen=True, slots=True)
class RNew:
    var: Var
    tc: Optional[Atom] = None


@dataclass(frozen=True, slots=True)
class RSend:
    term: Term
    tc: Optional[Atom] = None


@dataclass(frozen=True, slots=True)
class RRecv:
    term: Term
    tc: Optional[Atom] = None


@dataclass(frozen=True, slots=True)
class RIf:
    lhs: Term
    rhs: Term
    tc: Optional[Atom]
    then_branch: tuple["RCmd", ...]
    else_branch: tuple["RCmd", ...]


RCmd = RNew | RSend | RRecv | RIf


@dataclass(frozen=True, slots=True)
class ScenarioContext:
    players: frozenset[str]
    publics: frozenset[str]
    params: frozenset[str]


def resolve_term(t: PTerm, ctx: ScenarioContext) -> Term:
    if isinstance(t, PIdent):
        if is_message_var(t.name):
            return Var(t.name)
        if t.name in ctx.players:
            return Name(t.name)
        return Text(t.name, public=t.name in ctx.publics)
    if isinstance(t, PKey):
        return SymKey(t.name)
    if isinstance(t, PPk):
        return PubKey(Var(t.name) if is_message_var(t.name) else Name(t.name))
    if isinstance(t, PSk):
        return SecKey(Var(t.name) if is_message_var(t.name) else Name(t.name))
    if isinstance(t, PEnc):
        return Enc(resolve_term(t.payload, ctx), resolve_term(t.keyterm, ctx))
    return Tup(tuple(resolve_term(i, ctx) for i in t.items))


def resolve_texpr(e: TExpr, params: frozenset[str], pidx: int) -> TimeExpr:
    if isinstance(e, TNum):
        return expr_const(e.value)
    if isinstance(e, TCur):
        return expr_of(CUR)
    if isinstance(e, TName):
        if e.name in params:
            return expr_of(param_var(e.name))
        return expr_of(local_var(e.name, pidx))
    if isinstance(e, TScale):
        return resolve_texpr(e.arg, params, pidx).scale(e.factor)
    lhs = resolve_texpr(e.lhs, params, pidx)
    rhs = resolve_texpr(e.rhs, params, pidx)
    return lhs + rhs if e.op == "+" else lhs - rhs


def resolve_tcon(c: TimeCon, params: frozenset[str], pidx: int) -> Atom:
    return atom_cmp(
        resolve_texpr(c.lhs, params, pidx), c.op, resolve_texpr(c.rhs, params, pidx)
    )


def resolve_cmds(
    cmds: tuple[Cmd, ...], ctx: ScenarioContext, pidx: int
) -> tuple[RCmd, ...]:
    def tc(c) -> Optional[Atom]:
        return resolve_tcon(c.tc, ctx.params, pidx) if c.tc else None

    out: list[RCmd] = []
    for c in cmds:
        if isinstance(c, CmdNew):
            out.append(RNew(Var(c.var), tc(c)))
        elif isinstance(c, CmdSend):
            out.append(RSend(resolve_term(c.term, ctx), tc(c)))
        elif isinstance(c, CmdRecv):
            out.append(RRecv(resolve_term(c.term, ctx), tc(c)))
        else:
            out.append(
                RIf(
                    resolve_term(c.lhs, ctx),
                    resolve_term(c.rhs, ctx),
                    tc(c),
                    resolve_cmds(c.then_branch, ctx, pidx),
                    resolve_cmds(c.else_branch, ctx, pidx),
                )
            )
    return tuple(out)


def _map_cmds(cmds: tuple[RCmd, ...], f: Callable[[Term], Term]) -> tuple[RCmd, ...]:
    out: list[RCmd] = []
    for c in cmds:
        if isinstance(c, RNew):
            out.append(c)
        elif isinstance(c, RSend):
            out.append(RSend(f(c.term), c.tc))
        elif isinstance(c, RRecv):
            out.append(RRecv(f(c.term), c.tc))
        else:
            out.append(
                RIf(
                    f(c.lhs),
                    f(c.rhs),
                    c.tc,
                    _map_cmds(c.then_branch, f),
                    _map_cmds(c.else_branch, f),
                )
            )
    return tuple(out)


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True, eq=False)
class Player:
    idx: int
    name: str
    remaining: tuple[RCmd, ...]
    keys: frozenset[Term]


@dataclass(frozen=True, eq=False)
class Configuration:
    players: tuple[Player, ...]
    ik: frozenset[Term]
    dc: dict[Symbol, frozenset[Term]]
    eq: frozenset
    tc: frozenset[Atom]
    clock: TimeVar
    counter: tuple


def _texpr_names(e: TExpr) -> set[str]:
    if isinstance(e, TName):
        return {e.name}
    if isinstance(e, TBin):
        return _texpr_names(e.lhs) | _texpr_names(e.rhs)
    if isinstance(e, TScale):
        return _texpr_names(e.arg)
    return set()


def instantiate(
    scenario: Scenario, roles: dict[str, Role], counter: Optional[Counter] = None
) -> Configuration:
    params: set[str] = set()
    for con in scenario.params:
        params |= _texpr_names(con.lhs) | _texpr_names(con.rhs)
    ctx = ScenarioContext(
        players=frozenset(p.name for p in scenario.players),
        publics=frozenset(scenario.public),
        params=frozenset(params),
    )
    counter = counter if counter is not None else Counter()
    t0 = clock_var(counter.next_serial("clock"))
    tc = {atom_cmp(expr_of(t0), ">=", expr_const(0))}
    for con in scenario.params:
        tc.add(resolve_tcon(con, ctx.params, -1))
    players = tuple(
        Player(
            i,
            pd.name,
            resolve_cmds(roles[pd.role].body, ctx, i),
            frozenset(resolve_term(k, ctx) for k in pd.keys),
        )
        for i, pd in enumerate(scenario.players)
    )
    if not is_satisfiable(frozenset(tc)).sat:
        raise ValueError(f"scenario {scenario.name}: parameter constraints are unsatisfiable")
    ik = normalize_union((resolve_term(k, ctx) for k in scenario.knowledge), dc={})
    return Configuration(
        players, ik, {}, frozenset(), frozenset(tc), t0, counter.snapshot()
    )


# ---------------------------------------------------------------------------
# receivability and key learning


def is_receivable(m: Term, ks: frozenset[Term], ik: frozenset[Term]) -> bool:
    """Can a participant holding the keys ks accept m off the network?

    An encryption is acceptable when the participant can decrypt it (its
    inverse key is held or guessable) and the payload is acceptable in turn,
    or when the whole ciphertext is a known opaque blob from ik."""
    if isinstance(m, Tup):
        return all(is_receivable(i, ks, ik) for i in m.items)
    if isinstance(m, Enc):
        if m in ik:
            return True
        ki = safe_inverse(m.key)
        if ki is not None and (ki in ks or is_guessable(ki)):
            return is_receivable(m.payload, ks, ik)
        return False
    return True


def _is_key(t: Term) -> bool:
    return isinstance(t, (SymKey, PubKey, SecKey))


def add_keys(m: Term, ks: frozenset[Term], ik: frozenset[Term]) -> frozenset[Term]:
    """Close ks under the keys sitting in decryptable positions of m."""
    out = set(ks)

    def collect(t: Term) -> None:
        if _is_key(t):
            out.add(t)
        elif isinstance(t, Tup):
            for i in t.items:
                collect(i)
        elif isinstance(t, Enc):
            ki = safe_inverse(t.key)
            if ki is not None and (ki in out or is_guessable(ki)):
                collect(t.payload)

    while True:
        before = len(out)
        collect(m)
        if len(out) == before:
            return frozenset(out)


# ---------------------------------------------------------------------------
# step rules


@dataclass(frozen=True, eq=False)
class TraceStep:
    sign: str  # "+", "-", or "" for silent steps
    message: Optional[Term]
    time: TimeVar
    player: int
    rule: str  # new | send | recv | then | else
    ssb: dict[Symbol, Term]
    config: Configuration


@dataclass(frozen=True, eq=False)
class Trace:
    initial: Configuration
    steps: tuple[TraceStep, ...]

    @property
    def final(self) -> Configuration:
        return self.steps[-1].config if self.steps else self.initial

    def labels(self) -> tuple[tuple[str, Term, TimeVar], ...]:
        return tuple(
            (s.sign, s.message, s.time) for s in self.steps if s.sign
        )


def _advance(
    cfg: Configuration, counter: Counter, template: Optional[Atom]
) -> Optional[tuple[TimeVar, frozenset[Atom]]]:
    """Fresh global clock, monotonicity atom, and the step's own constraint.

    Adding a lower bound on a fresh variable keeps any satisfiable set
    satisfiable, so the solver only runs when the step carries a constraint."""
    t1 = clock_var(counter.next_serial("clock"))
    atoms = cfg.tc | {atom_cmp(expr_of(t1), ">=", expr_of(cfg.clock))}
    if template is not None:
        atoms = atoms | {rename_atom(template, {CUR: t1})}
        if not is_satisfiable(atoms).sat:
            return None
    return t1, atoms


def _with_player(
    players: tuple[Player, ...],
    idx: int,
    remaining: tuple[RCmd, ...],
    keys: Optional[frozenset[Term]] = None,
    ssb: Optional[dict[Symbol, Term]] = None,
) -> tuple[Player, ...]:
    out = []
    for p in players:
        rem = remaining if p.idx == idx else p.remaining
        if ssb:
            rem = _map_cmds(rem, lambda t: apply_sym_subst(ssb, t))
        ks = keys if keys is not None and p.idx == idx else p.keys
        out.append(Player(p.idx, p.name, rem, ks))
    return tuple(out)


def _map_eq(eq: frozenset, ssb: dict[Symbol, Term]) -> frozenset:
    if not ssb:
        return eq
    return frozenset(
        type(c)(apply_sym_subst(ssb, c.lhs), apply_sym_subst(ssb, c.rhs)) for c in eq
    )


def _step_new(cfg: Configuration, pl: Player, cmd: RNew) -> list[TraceStep]:
    counter = Counter.from_snapshot(cfg.counter)
    adv = _advance(cfg, counter, cmd.tc)
    if adv is None:
        return []
    t1, tc = adv
    nonce = counter.fresh_nonce(pl.idx)
    rest = _map_cmds(
        pl.remaining[1:], lambda t: apply_var_subst({cmd.var: nonce}, t)
    )
    cfg2 = Configuration(
        _with_player(cfg.players, pl.idx, rest),
        cfg.ik,
        cfg.dc,
        cfg.eq,
        tc,
        t1,
        counter.snapshot(),
    )
    return [TraceStep("", None, t1, pl.idx, "new", {}, cfg2)]


def _step_send(cfg: Configuration, pl: Player, cmd: RSend) -> list[TraceStep]:
    counter = Counter.from_snapshot(cfg.counter)
    adv = _advance(cfg, counter, cmd.tc)
    if adv is None:
        return []
    t1, tc = adv
    ik = normalize_union(cfg.ik, [cmd.term], dc=cfg.dc)
    cfg2 = Configuration(
        _with_player(cfg.players, pl.idx, pl.remaining[1:]),
        ik,
        cfg.dc,
        cfg.eq,
        tc,
        t1,
        counter.snapshot(),
    )
    return [TraceStep("+", cmd.term, t1, pl.idx, "send", {}, cfg2)]


def _step_recv(cfg: Configuration, pl: Player, cmd: RRecv) -> list[TraceStep]:
    counter = Counter.from_snapshot(cfg.counter)
    adv = _advance(cfg, counter, cmd.tc)
    if adv is None:
        return []
    t1, tc = adv
    res = s_gen(cmd.term, cfg.ik, cfg.dc, counter)
    snap = counter.snapshot()
    pat = apply_var_subst(res.sb, cmd.term)
    rest0 = _map_cmds(pl.remaining[1:], lambda t: apply_var_subst(res.sb, t))
    out = []
    for sol in res.solutions:
        ms = apply_sym_subst(sol.ssb, pat)
        if not is_receivable(ms, pl.keys, cfg.ik):
            continue
        dc1 = dict(sol.dc)
        ik1 = normalize_union(
            (apply_sym_subst(sol.ssb, t) for t in cfg.ik), dc=dc1
        )
        # resolved symbols stay in the labels, so the store must keep the
        # link between them and the values the run committed to
        eq1 = _map_eq(cfg.eq, sol.ssb) | frozenset(
            Eq(k, v) for k, v in sol.ssb.items()
        )
        if sol.ssb and not eq_check(eq1, dc1):
            continue
        cfg2 = Configuration(
            _with_player(
                cfg.players, pl.idx, rest0, add_keys(ms, pl.keys, cfg.ik), sol.ssb
            ),
            ik1,
            dc1,
            eq1,
            tc,
            t1,
            snap,
        )
        out.append(TraceStep("-", ms, t1, pl.idx, "recv", dict(sol.ssb), cfg2))
    return out


def _step_if(cfg: Configuration, pl: Player, cmd: RIf) -> list[TraceStep]:
    counter = Counter.from_snapshot(cfg.counter)
    adv = _advance(cfg, counter, cmd.tc)
    if adv is None:
        return []
    t1, tc = adv
    res = s_gen_match(cmd.lhs, cmd.rhs, cfg.ik, cfg.dc, counter)
    lhs2 = apply_var_subst(res.sb, cmd.lhs)
    rhs2 = apply_var_subst(res.sb, cmd.rhs)
    then0 = _map_cmds(
        cmd.then_branch + pl.remaining[1:],
        lambda t: apply_var_subst(res.sb, t),
    )
    out = []
    for sol in res.solutions:
        dc1 = dict(sol.dc)
        eq1 = _map_eq(
            cfg.eq | {Eq(lhs2, rhs2)},
            sol.ssb,
        ) | frozenset(Eq(k, v) for k, v in sol.ssb.items())
        if not eq_check(eq1, dc1):
            continue
        ik1 = normalize_union(
            (apply_sym_subst(sol.ssb, t) for t in cfg.ik), dc=dc1
        )
        cfg2 = Configuration(
            _with_player(cfg.players, pl.idx, then0, None, sol.ssb),
            ik1,
            dc1,
            eq1,
            tc,
            t1,
            counter.snapshot(),
        )
        out.append(TraceStep("", None, t1, pl.idx, "then", dict(sol.ssb), cfg2))
    # the negative branch: any instantiation of the pattern variables must
    # fail to match, approximated by fresh symbols the intruder constrains
    sbe = {v: counter.fresh_symbol() for v in vars_in_order(Tup((cmd.lhs, cmd.rhs)))}
    dce = dict(cfg.dc)
    for s in sbe.values():
        dce[s] = cfg.ik
    eqe = cfg.eq | {
        Neq(apply_var_subst(sbe, cmd.lhs), apply_var_subst(sbe, cmd.rhs))
    }
    if eq_check(eqe, dce):
        else0 = _map_cmds(
            cmd.else_branch + pl.remaining[1:],
            lambda t: apply_var_subst(sbe, t),
        )
        cfge = Configuration(
            _with_player(cfg.players, pl.idx, else0),
            cfg.ik,
            dce,
            eqe,
            tc,
            t1,
            counter.snapshot(),
        )
        out.append(TraceStep("", None, t1, pl.idx, "else", {}, cfge))
    return out


_RULES = {
    RNew: _step_new,
    RSend: _step_send,
    RRecv: _step_recv,
    RIf: _step_if,
}


def successors(cfg: Configuration) -> list[TraceStep]:
    out: list[TraceStep] = []
    for pl in cfg.players:
        if pl.remaining:
            cmd = pl.remaining[0]
            out.extend(_RULES[type(cmd)](cfg, pl, cmd))
    return out


@dataclass
class EnumResult:
    traces: list[Trace]
    states: int  # configurations expanded in the search tree


def enumerate_traces(
    initial: Configuration, max_steps: Optional[int] = None
) -> EnumResult:
    result = EnumResult([], 1)

    def dfs(cfg: Configuration, steps: list[TraceStep]) -> None:
        succ = [] if max_steps is not None and len(steps) >= max_steps else successors(cfg)
        if not succ:
            result.traces.append(Trace(initial, tuple(steps)))
            return
        for s in succ:
            result.states += 1
            steps.append(s)
            dfs(s.config, steps)
            steps.pop()

    dfs(initial, [])
    return result


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True, eq=False)
class Observable:
    labels: tuple[tuple[str, Term, TimeVar], ...]
    ik: frozenset[Term]
    dc: dict[Symbol, frozenset[Term]]
    eq: frozenset
    tc: frozenset[Atom]  # projected onto label times, the end time, and params
    end: TimeVar
    key: str


def _masked(t: Term) -> str:
    """Structural rendering with fresh-value identities blanked; used only
    to make set orderings independent of the serials a path allocated."""
    if isinstance(t, Symbol):
        return "sym(?)"
    if isinstance(t, Nonce):
        return "n(?)"
    if isinstance(t, Enc):
        return f"enc({_masked(t.payload)},{_masked(t.key)})"
    if isinstance(t, Tup):
        return "<" + ",".join(_masked(i) for i in t.items) + ">"
    if isinstance(t, PubKey):
        return f"pk({_masked(t.of)})"
    if isinstance(t, SecKey):
        return f"sk({_masked(t.of)})"
    return repr(t)


def _set_order(t: Term):
    return (_masked(t), order_key(t))


def canonical_key(
    labels, ik, dc, eq, tc: frozenset[Atom], end: TimeVar
) -> str:
    names: dict[Term, str] = {}

    def render(t: Term) -> str:
        if isinstance(t, (Symbol, Nonce)):
            if t not in names:
                tag = "S" if isinstance(t, Symbol) else "N"
                names[t] = f"{tag}{sum(1 for k in names if type(k) is type(t))}"
            return names[t]
        if isinstance(t, Enc):
            return f"enc({render(t.payload)},{render(t.key)})"
        if isinstance(t, Tup):
            return "<" + ",".join(render(i) for i in t.items) + ">"
        if isinstance(t, PubKey):
            return f"pk({render(t.of)})"
        if isinstance(t, SecKey):
            return f"sk({render(t.of)})"
        return repr(t)

    tnames: dict[TimeVar, str] = {}
    parts = []
    for i, (sign, m, tv) in enumerate(labels):
        tnames.setdefault(tv, f"T{i}")
        parts.append(f"{sign}{render(m)}@{tnames[tv]}")
    tnames.setdefault(end, "TI")
    for m in sorted(ik, key=_set_order):
        parts.append("ik " + render(m))
    for s, gens in sorted(
        dc.items(), key=lambda kv: (sorted(map(_masked, kv[1])), kv[0].serial)
    ):
        parts.append(
            f"dc {render(s)}:"
            + ",".join(render(g) for g in sorted(gens, key=_set_order))
        )
    for c in sorted(
        eq,
        key=lambda c: (
            type(c).__name__,
            _masked(c.lhs),
            _masked(c.rhs),
            order_key(c.lhs),
            order_key(c.rhs),
        ),
    ):
        parts.append(f"{type(c).__name__}({render(c.lhs)},{render(c.rhs)})")

    def render_atom(a: Atom) -> str:
        coeffs = sorted(
            (tnames.get(v, v.name), c) for v, c in a.expr.coeffs
        )
        body = "+".join(f"{c}*{n}" for n, c in coeffs)
        return f"{a.expr.const}+{body}{a.rel}0"

    parts.extend(sorted(render_atom(a) for a in tc))
    parts.append(f"end={tnames[end]}")
    return "\n".join(parts)


def observable_of(trace: Trace) -> Observable:
    fin = trace.final
    labels = trace.labels()
    keep = {t for _, _, t in labels} | {fin.clock}
    elim = {v for v in atoms_vars(fin.tc) if v.kind != "param" and v not in keep}
    proj = eliminate_forall(fin.tc, elim)
    tcp = prune_implied(proj[0]) if proj else frozenset()
    key = canonical_key(labels, fin.ik, fin.dc, fin.eq, tcp, fin.clock)
    return Observable(labels, fin.ik, fin.dc, fin.eq, tcp, fin.clock, key)


def observables_of(traces: Iterable[Trace]) -> list[Observable]:
    """Observables of the given traces, deduplicated up to renaming of
    fresh values and clock variables."""
    seen: dict[str, Observable] = {}
    for tr in traces:
        ob = observable_of(tr)
        seen.setdefault(ob.key, ob)
    return list(seen.values())
