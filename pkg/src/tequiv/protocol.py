"""Role and scenario DSL: lexer, recursive-descent parser, renderer, loader.

Identifiers split by case: an uppercase-initial name in a message is a bound
variable of the role; lowercase names resolve against the scenario (player,
declared public text, otherwise a private text constant). Arguments of pk()
and sk() are always identity names, and `key k` names a symmetric key
directly, so no separate declaration pass is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Optional


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True, slots=True)
class PIdent:
    name: str


@dataclass(frozen=True, slots=True)
class PKey:
    name: str


@dataclass(frozen=True, slots=True)
class PPk:
    name: str


@dataclass(frozen=True, slots=True)
class PSk:
    name: str


@dataclass(frozen=True, slots=True)
class PEnc:
    payload: "PTerm"
    keyterm: "PTerm"


@dataclass(frozen=True, slots=True)
class PTup:
    items: tuple["PTerm", ...]


PTerm = PIdent | PKey | PPk | PSk | PEnc | PTup


@dataclass(frozen=True, slots=True)
class TNum:
    value: Fraction


@dataclass(frozen=True, slots=True)
class TName:
    name: str


@dataclass(frozen=True, slots=True)
class TCur:
    pass


@dataclass(frozen=True, slots=True)
class TBin:
    op: str
    lhs: "TExpr"
    rhs: "TExpr"


@dataclass(frozen=True, slots=True)
class TScale:
    factor: Fraction
    arg: "TExpr"


TExpr = TNum | TName | TCur | TBin | TScale


@dataclass(frozen=True, slots=True)
class TimeCon:
    lhs: TExpr
    op: str
    rhs: TExpr


@dataclass(frozen=True, slots=True)
class CmdNew:
    var: str
    tc: Optional[TimeCon] = None


@dataclass(frozen=True, slots=True)
class CmdSend:
    term: PTerm
    tc: Optional[TimeCon] = None


@dataclass(frozen=True, slots=True)
class CmdRecv:
    term: PTerm
    tc: Optional[TimeCon] = None


@dataclass(frozen=True, slots=True)
class CmdIf:
    lhs: PTerm
    rhs: PTerm
    tc: Optional[TimeCon]
    then_branch: tuple["Cmd", ...]
    else_branch: tuple["Cmd", ...]


Cmd = CmdNew | CmdSend | CmdRecv | CmdIf


@dataclass(frozen=True, slots=True)
class Role:
    name: str
    body: tuple[Cmd, ...]


@dataclass(frozen=True, slots=True)
class PlayerDecl:
    name: str
    role: str
    keys: tuple[PTerm, ...] = ()


@dataclass(frozen=True, slots=True)
class Scenario:
    name: str
    players: tuple[PlayerDecl, ...]
    knowledge: tuple[PTerm, ...]
    public: tuple[str, ...] = ()
    params: tuple[TimeCon, ...] = ()


@dataclass
class ProtoFile:
    roles: dict[str, Role] = field(default_factory=dict)
    scenarios: dict[str, Scenario] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# lexer

_TWO_CHAR = (":=", "<=", ">=")
_ONE_CHAR = "{}()[]<>,;:#=+-*"


@dataclass(frozen=True, slots=True)
class Tok:
    kind: str  # IDENT | NUM | a punctuation literal | EOF
    text: str
    line: int
    col: int


def _lex(text: str) -> list[Tok]:
    toks: list[Tok] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        two = text[i : i + 2]
        if two in _TWO_CHAR:
            toks.append(Tok(two, two, start_line, start_col))
            i += 2
            col += 2
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(Tok("IDENT", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "/" and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            toks.append(Tok("NUM", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c in _ONE_CHAR:
            toks.append(Tok(c, c, start_line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Tok("EOF", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.pos = 0

    def peek(self) -> Tok:
        return self.toks[self.pos]

    def next(self) -> Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def fail(self, msg: str):
        t = self.peek()
        raise ParseError(msg, t.line, t.col)

    def expect(self, kind: str) -> Tok:
        t = self.peek()
        if t.kind != kind:
            self.fail(f"expected {kind!r}, found {t.text or t.kind!r}")
        return self.next()

    def expect_word(self, word: str) -> Tok:
        t = self.peek()
        if t.kind != "IDENT" or t.text != word:
            self.fail(f"expected {word!r}, found {t.text or t.kind!r}")
        return self.next()

    def at_word(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "IDENT" and t.text == word

    # -- terms

    def term(self) -> PTerm:
        t = self.peek()
        if t.kind == "<":
            self.next()
            items = [self.term()]
            while self.peek().kind == ",":
                self.next()
                items.append(self.term())
            self.expect(">")
            if len(items) < 2:
                self.fail("tuples need at least two components")
            return PTup(tuple(items))
        if t.kind != "IDENT":
            self.fail(f"expected a term, found {t.text or t.kind!r}")
        word = self.next().text
        if word == "enc":
            self.expect("(")
            payload = self.term()
            self.expect(",")
            keyterm = self.term()
            self.expect(")")
            return PEnc(payload, keyterm)
        if word in ("pk", "sk"):
            self.expect("(")
            name = self.expect("IDENT").text
            self.expect(")")
            return PPk(name) if word == "pk" else PSk(name)
        if word == "key":
            return PKey(self.expect("IDENT").text)
        return PIdent(word)

    # -- time expressions

    def texpr(self) -> TExpr:
        e = self.tatom()
        while self.peek().kind in ("+", "-"):
            op = self.next().kind
            e = TBin(op, e, self.tatom())
        return e

    def tatom(self) -> TExpr:
        t = self.peek()
        if t.kind == "NUM":
            self.next()
            value = Fraction(t.text)
            if self.peek().kind == "*":
                self.next()
                return TScale(value, self.tatom())
            return TNum(value)
        if t.kind == "(":
            self.next()
            e = self.texpr()
            self.expect(")")
            return e
        if t.kind == "IDENT":
            word = self.next().text
            return TCur() if word == "cur" else TName(word)
        self.fail(f"expected a time expression, found {t.text or t.kind!r}")

    def tcon(self) -> TimeCon:
        lhs = self.texpr()
        t = self.peek()
        if t.kind not in ("=", "<=", "<", ">=", ">"):
            self.fail(f"expected a relation, found {t.text or t.kind!r}")
        op = self.next().kind
        return TimeCon(lhs, op, self.texpr())

    def topt(self) -> Optional[TimeCon]:
        if self.peek().kind == "#":
            self.next()
            return self.tcon()
        return None

    # -- commands

    def cmd(self) -> Cmd:
        t = self.peek()
        if t.kind != "IDENT":
            self.fail(f"expected a command, found {t.text or t.kind!r}")
        if t.text == "new":
            self.next()
            var = self.expect("IDENT").text
            tc = self.topt()
            self.expect(";")
            return CmdNew(var, tc)
        if t.text == "send":
            self.next()
            term = self.term()
            tc = self.topt()
            self.expect(";")
            return CmdSend(term, tc)
        if t.text == "recv":
            self.next()
            term = self.term()
            tc = self.topt()
            self.expect(";")
            return CmdRecv(term, tc)
        if t.text == "if":
            self.next()
            lhs = self.term()
            self.expect(":=")
            rhs = self.term()
            tc = self.topt()
            self.expect_word("then")
            self.expect("{")
            then_branch = []
            while self.peek().kind != "}":
                then_branch.append(self.cmd())
            self.expect("}")
            self.expect_word("else")
            self.expect("{")
            else_branch = []
            while self.peek().kind != "}":
                else_branch.append(self.cmd())
            self.expect("}")
            return CmdIf(lhs, rhs, tc, tuple(then_branch), tuple(else_branch))
        self.fail(f"unknown command {t.text!r}")

    def roledef(self) -> Role:
        self.expect_word("role")
        name = self.expect("IDENT").text
        self.expect("{")
        body = []
        while self.peek().kind != "}":
            body.append(self.cmd())
        self.expect("}")
        role = Role(name, tuple(body))
        _check_bound(role)
        return role

    # -- scenarios

    def term_list_braced(self) -> tuple[PTerm, ...]:
        self.expect("{")
        items = []
        while self.peek().kind != "}":
            items.append(self.term())
            if self.peek().kind == ",":
                self.next()
        self.expect("}")
        return tuple(items)

    def player(self) -> PlayerDecl:
        name = self.expect("IDENT").text
        self.expect_word("as")
        role = self.expect("IDENT").text
        keys: tuple[PTerm, ...] = ()
        if self.at_word("keys"):
            self.next()
            keys = self.term_list_braced()
        return PlayerDecl(name, role, keys)

    def scenario(self) -> Scenario:
        self.expect_word("scenario")
        name = self.expect("IDENT").text
        self.expect("{")
        self.expect_word("players")
        self.expect(":")
        self.expect("[")
        players = []
        if self.peek().kind != "]":
            players.append(self.player())
            while self.peek().kind == ",":
                self.next()
                players.append(self.player())
        self.expect("]")
        self.expect(";")
        self.expect_word("knowledge")
        self.expect(":")
        knowledge = self.term_list_braced()
        self.expect(";")
        public: tuple[str, ...] = ()
        if self.at_word("public"):
            self.next()
            self.expect(":")
            self.expect("{")
            names = []
            while self.peek().kind != "}":
                names.append(self.expect("IDENT").text)
                if self.peek().kind == ",":
                    self.next()
            self.expect("}")
            self.expect(";")
            public = tuple(names)
        params = []
        while self.at_word("param"):
            self.next()
            params.append(self.tcon())
            self.expect(";")
        self.expect("}")
        sc = Scenario(name, tuple(players), knowledge, public, tuple(params))
        _check_scenario(sc)
        return sc

    def file(self) -> ProtoFile:
        out = ProtoFile()
        while self.peek().kind != "EOF":
            if self.at_word("role"):
                r = self.roledef()
                out.roles[r.name] = r
            elif self.at_word("scenario"):
                s = self.scenario()
                out.scenarios[s.name] = s
            else:
                self.fail("expected 'role' or 'scenario'")
        return out


def is_message_var(name: str) -> bool:
    return name[0].isupper()


def term_vars(t: PTerm) -> set[str]:
    if isinstance(t, (PIdent, PPk, PSk)):
        return {t.name} if is_message_var(t.name) else set()
    if isinstance(t, PEnc):
        return term_vars(t.payload) | term_vars(t.keyterm)
    if isinstance(t, PTup):
        out: set[str] = set()
        for item in t.items:
            out |= term_vars(item)
        return out
    return set()


def _check_bound(role: Role) -> None:
    def walk(cmds: tuple[Cmd, ...], bound: set[str]) -> None:
        for c in cmds:
            if isinstance(c, CmdNew):
                if not is_message_var(c.var):
                    raise ParseError(
                        f"new binds a variable; {c.var!r} is not uppercase", 0, 0
                    )
                bound = bound | {c.var}
            elif isinstance(c, CmdSend):
                loose = term_vars(c.term) - bound
                if loose:
                    raise ParseError(
                        f"role {role.name}: unbound variable(s) "
                        f"{', '.join(sorted(loose))} in send",
                        0,
                        0,
                    )
            elif isinstance(c, CmdRecv):
                bound = bound | term_vars(c.term)
            elif isinstance(c, CmdIf):
                inner = bound | term_vars(c.lhs) | term_vars(c.rhs)
                walk(c.then_branch, set(inner))
                walk(c.else_branch, set(inner))
                bound = inner

    walk(role.body, set())


def _check_scenario(sc: Scenario) -> None:
    for t in sc.knowledge + tuple(k for p in sc.players for k in p.keys):
        if term_vars(t):
            raise ParseError(
                f"scenario {sc.name}: variables not allowed in ground terms", 0, 0
            )
    for con in sc.params:
        for e in (con.lhs, con.rhs):
            if _mentions_cur(e):
                raise ParseError(
                    f"scenario {sc.name}: cur not allowed in param constraints", 0, 0
                )


def _mentions_cur(e: TExpr) -> bool:
    if isinstance(e, TCur):
        return True
    if isinstance(e, TBin):
        return _mentions_cur(e.lhs) or _mentions_cur(e.rhs)
    if isinstance(e, TScale):
        return _mentions_cur(e.arg)
    return False


def parse_file(text: str) -> ProtoFile:
    return _Parser(text).file()


def parse_role(text: str) -> Role:
    return _Parser(text).roledef()


def parse_scenario(text: str) -> Scenario:
    return _Parser(text).scenario()


# ---------------------------------------------------------------------------
# renderer (canonical text; parse of the output gives back the same AST)


def render_term(t: PTerm) -> str:
    if isinstance(t, PIdent):
        return t.name
    if isinstance(t, PKey):
        return f"key {t.name}"
    if isinstance(t, PPk):
        return f"pk({t.name})"
    if isinstance(t, PSk):
        return f"sk({t.name})"
    if isinstance(t, PEnc):
        return f"enc({render_term(t.payload)}, {render_term(t.keyterm)})"
    return "<" + ", ".join(render_term(i) for i in t.items) + ">"


def render_texpr(e: TExpr) -> str:
    if isinstance(e, TNum):
        return str(e.value)
    if isinstance(e, TName):
        return e.name
    if isinstance(e, TCur):
        return "cur"
    if isinstance(e, TScale):
        inner = render_texpr(e.arg)
        if isinstance(e.arg, TBin):
            inner = f"({inner})"
        return f"{e.factor} * {inner}"
    lhs = render_texpr(e.lhs)
    rhs = render_texpr(e.rhs)
    if isinstance(e.rhs, TBin):
        rhs = f"({rhs})"
    return f"{lhs} {e.op} {rhs}"


def render_tcon(c: TimeCon) -> str:
    return f"{render_texpr(c.lhs)} {c.op} {render_texpr(c.rhs)}"


def _render_topt(tc: Optional[TimeCon]) -> str:
    return f" # {render_tcon(tc)}" if tc else ""


def _render_cmds(cmds: tuple[Cmd, ...], indent: int) -> Iterator[str]:
    pad = "  " * indent
    for c in cmds:
        if isinstance(c, CmdNew):
            yield f"{pad}new {c.var}{_render_topt(c.tc)};"
        elif isinstance(c, CmdSend):
            yield f"{pad}send {render_term(c.term)}{_render_topt(c.tc)};"
        elif isinstance(c, CmdRecv):
            yield f"{pad}recv {render_term(c.term)}{_render_topt(c.tc)};"
        else:
            yield (
                f"{pad}if {render_term(c.lhs)} := {render_term(c.rhs)}"
                f"{_render_topt(c.tc)} then {{"
            )
            yield from _render_cmds(c.then_branch, indent + 1)
            yield f"{pad}}} else {{"
            yield from _render_cmds(c.else_branch, indent + 1)
            yield f"{pad}}}"


def render_role(r: Role) -> str:
    lines = [f"role {r.name} {{"]
    lines.extend(_render_cmds(r.body, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_scenario(s: Scenario) -> str:
    def pl(p: PlayerDecl) -> str:
        out = f"{p.name} as {p.role}"
        if p.keys:
            out += " keys { " + ", ".join(render_term(k) for k in p.keys) + " }"
        return out

    lines = [f"scenario {s.name} {{"]
    lines.append("  players: [" + ", ".join(pl(p) for p in s.players) + "];")
    lines.append(
        "  knowledge: { " + ", ".join(render_term(t) for t in s.knowledge) + " };"
        if s.knowledge
        else "  knowledge: { };"
    )
    if s.public:
        lines.append("  public: { " + ", ".join(s.public) + " };")
    for con in s.params:
        lines.append(f"  param {render_tcon(con)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_file(f: ProtoFile) -> str:
    parts = [render_role(r) for r in f.roles.values()]
    parts.extend(render_scenario(s) for s in f.scenarios.values())
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# loader


def load_path(path: str | Path) -> ProtoFile:
    p = Path(path)
    try:
        return parse_file(p.read_text())
    except ParseError as e:
        raise ParseError(f"{p.name}: {e.msg}", e.line, e.col) from None


def load_scenario_file(path: str | Path) -> tuple[Scenario, dict[str, Role]]:
    """Parse a scenario file, pulling role definitions from the file itself
    and from every sibling .tproto file."""
    p = Path(path)
    own = load_path(p)
    roles = dict(own.roles)
    for sib in sorted(p.parent.glob("*.tproto")):
        if sib == p:
            continue
        for name, role in load_path(sib).roles.items():
            roles.setdefault(name, role)
    if len(own.scenarios) != 1:
        raise ValueError(f"{p.name}: expected exactly one scenario")
    (scenario,) = own.scenarios.values()
    missing = [pl.role for pl in scenario.players if pl.role not in roles]
    if missing:
        raise ValueError(
            f"{p.name}: unknown role(s): {', '.join(sorted(set(missing)))}"
        )
    return scenario, roles
