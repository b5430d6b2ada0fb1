"""Hand-off to an external SMT-LIB2 solver process.

Scripts are rendered with implicit clock bounds materialized, so the text is
self-contained and kind-agnostic: any LRA-capable solver gives answers
comparable with the internal procedure. The runner distinguishes three
failure modes so callers can tell a missing binary from a hung or confused
one.
"""

from __future__ import annotations

import shlex
import subprocess
from fractions import Fraction
from typing import Iterable

from .timecon import (
    Atom,
    TimeVar,
    atom_cmp,
    atoms_vars,
    expr_of,
    with_implicit_bounds,
)

DEFAULT_TIMEOUT = 30.0


class BridgeError(Exception):
    pass


class SpawnError(BridgeError):
    """The solver process could not be started."""


class ReplyError(BridgeError):
    """The solver ran but produced no usable verdict."""


class BridgeTimeout(BridgeError):
    """The solver exceeded its time budget."""


def _smt_name(v: TimeVar) -> str:
    base = v.name if v.kind == "param" else f"{v.name}_{v.serial}"
    return "".join(c if c.isalnum() or c == "_" else "_" for c in base)


def _rat(f: Fraction) -> str:
    if f.denominator == 1:
        return str(f.numerator) if f >= 0 else f"(- {-f.numerator})"
    body = f"(/ {abs(f.numerator)} {f.denominator})"
    return body if f >= 0 else f"(- {body})"


def _expr_sexp(e) -> str:
    parts = []
    for v, c in e.coeffs:
        name = _smt_name(v)
        parts.append(name if c == 1 else f"(* {_rat(c)} {name})")
    if e.const != 0 or not parts:
        parts.append(_rat(e.const))
    if len(parts) == 1:
        return parts[0]
    return f"(+ {' '.join(parts)})"


def _atom_sexp(a: Atom) -> str:
    op = {"eq": "=", "le": "<=", "lt": "<"}[a.rel]
    return f"({op} {_expr_sexp(a.expr)} 0)"


def _conj(sexps: list[str]) -> str:
    if not sexps:
        return "true"
    if len(sexps) == 1:
        return sexps[0]
    return f"(and {' '.join(sexps)})"


def render_sat_script(atoms: Iterable[Atom]) -> str:
    full = with_implicit_bounds(frozenset(atoms))
    lines = ["(set-logic LRA)"]
    for v in sorted(atoms_vars(full), key=_smt_name):
        lines.append(f"(declare-const {_smt_name(v)} Real)")
    for a in sorted(full, key=_atom_sexp):
        lines.append(f"(assert {_atom_sexp(a)})")
    lines.append("(check-sat)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


def render_timed_match_script(
    tcl: frozenset[Atom],
    tcr: frozenset[Atom],
    pairs: Iterable[tuple[TimeVar, TimeVar]],
) -> str:
    """A refutation query: sat means the timed match FAILS.

    Encodes: exists left assignment allowed by the left side such that no
    right assignment satisfies the right side and the pairing equalities."""
    pairs = list(pairs)
    eqs = {atom_cmp(expr_of(l), "=", expr_of(r)) for l, r in pairs}
    left = with_implicit_bounds(tcl)
    right = with_implicit_bounds(tcr) | eqs
    bound = {
        v
        for v in atoms_vars(with_implicit_bounds(tcr)) | {r for _, r in pairs}
        if v.kind != "param"
    }
    free = (atoms_vars(left) | atoms_vars(right)) - bound
    lines = ["(set-logic LRA)"]
    for v in sorted(free, key=_smt_name):
        lines.append(f"(declare-const {_smt_name(v)} Real)")
    for a in sorted(left, key=_atom_sexp):
        lines.append(f"(assert {_atom_sexp(a)})")
    body = _conj([_atom_sexp(a) for a in sorted(right, key=_atom_sexp)])
    if bound:
        binder = " ".join(
            f"({_smt_name(v)} Real)" for v in sorted(bound, key=_smt_name)
        )
        lines.append(f"(assert (forall ({binder}) (not {body})))")
    else:
        lines.append(f"(assert (not {body}))")
    lines.append("(check-sat)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


def run_solver(script: str, command: str, timeout: float = DEFAULT_TIMEOUT) -> str:
    """Feed a script to the solver on stdin; return sat, unsat or unknown."""
    argv = shlex.split(command)
    if not argv:
        raise SpawnError("empty solver command")
    try:
        proc = subprocess.run(
            argv,
            input=script.encode(),
            capture_output=True,
            timeout=timeout,
        )
    except (FileNotFoundError, PermissionError, OSError) as e:
        raise SpawnError(f"cannot start solver {argv[0]!r}: {e}") from e
    except subprocess.TimeoutExpired as e:
        raise BridgeTimeout(f"solver exceeded {timeout}s") from e
    for line in proc.stdout.decode(errors="replace").splitlines():
        tok = line.strip()
        if tok in ("sat", "unsat", "unknown"):
            return tok
    err = proc.stderr.decode(errors="replace").strip()
    raise ReplyError(
        f"no verdict in solver output (exit {proc.returncode})"
        + (f": {err[:200]}" if err else "")
    )


def is_satisfiable_external(
    atoms: Iterable[Atom], command: str, timeout: float = DEFAULT_TIMEOUT
) -> bool:
    status = run_solver(render_sat_script(atoms), command, timeout)
    if status == "unknown":
        raise ReplyError("solver answered unknown")
    return status == "sat"


def check_timed_match_external(
    tcl: frozenset[Atom],
    tcr: frozenset[Atom],
    pairs: Iterable[tuple[TimeVar, TimeVar]],
    command: str,
    timeout: float = DEFAULT_TIMEOUT,
) -> bool:
    script = render_timed_match_script(tcl, tcr, pairs)
    status = run_solver(script, command, timeout)
    if status == "unknown":
        raise ReplyError("solver answered unknown")
    return status == "unsat"
