"""Command-line front end: enumerate a scenario's traces, or decide timed
observational equivalence of two scenarios.

Exit status of `verify` is the verdict: 0 equivalent, 1 not equivalent,
2 for any error (unreadable input, solver failure, timeout). Runs are
deterministic for a fixed input, whatever --jobs says.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .equivalence import config_equiv, disjoint_counter
from .protocol import ParseError, load_scenario_file
from .semantics import enumerate_traces, instantiate, observables_of
from .smtbridge import BridgeError, check_timed_match_external
from .terms import Counter
from .timecon import check_timed_match

EXIT_EQUIV = 0
EXIT_NOT_EQUIV = 1
EXIT_ERROR = 2


class CliError(Exception):
    pass


def _resolve_solver(spec: str, timeout: float | None):
    if spec == "internal":
        return check_timed_match
    if spec.startswith("external:"):
        command = spec[len("external:"):]
        if not command.strip():
            raise CliError("empty external solver command")
        budget = timeout if timeout is not None else 30.0

        def external(tcl, tcr, pairs):
            return check_timed_match_external(tcl, tcr, pairs, command, budget)

        return external
    raise CliError(f"unknown solver {spec!r}; use internal or external:<command>")


class _Deadline:
    """Best-effort wall-clock budget, checked between phases."""

    def __init__(self, seconds: float | None):
        self.at = time.monotonic() + seconds if seconds else None

    def check(self, phase: str) -> None:
        if self.at is not None and time.monotonic() > self.at:
            raise CliError(f"timeout during {phase}")


def _label_text(sign: str, message, tv) -> str:
    return f"{sign}{message} @ {tv.name}{tv.serial}"


def _emit_traces(dirpath: str, name: str, traces) -> None:
    out = Path(dirpath)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, tr in enumerate(traces):
        lines.append(f"trace {i}")
        for s in tr.steps:
            head = f"  {s.rule}"
            if s.sign:
                head += " " + _label_text(s.sign, s.message, s.time)
            lines.append(head)
    (out / f"{name}.traces.txt").write_text("\n".join(lines) + "\n")


def _load_side(path: str, counter: Counter, max_steps, deadline: _Deadline):
    scn, roles = load_scenario_file(path)
    cfg = instantiate(scn, roles, counter)
    res = enumerate_traces(cfg, max_steps)
    deadline.check(f"enumeration of {path}")
    return scn, res, observables_of(res.traces)


def _cmd_verify(args) -> int:
    deadline = _Deadline(args.timeout)
    timed_match = _resolve_solver(args.solver, args.timeout)
    scn_l, res_l, obs_l = _load_side(
        args.left, Counter(), args.max_steps, deadline
    )
    scn_r, res_r, obs_r = _load_side(
        args.right, disjoint_counter(), args.max_steps, deadline
    )
    if args.emit_traces:
        _emit_traces(args.emit_traces, scn_l.name + ".left", res_l.traces)
        _emit_traces(args.emit_traces, scn_r.name + ".right", res_r.traces)
    verdict = config_equiv(
        obs_l,
        obs_r,
        (res_l.states, res_r.states),
        timed_match=timed_match,
        jobs=args.jobs,
    )
    deadline.check("comparison")
    if args.json:
        doc = verdict.to_json()
        doc["left"] = args.left
        doc["right"] = args.right
        print(json.dumps(doc, indent=2))
    else:
        print("Equiv" if verdict.equivalent else "Not Equiv")
        print(
            f"observables: {verdict.left_observables}/{verdict.right_observables}"
            f"  states: {verdict.states[0]}/{verdict.states[1]}"
        )
        if verdict.witness is not None:
            w = verdict.witness
            print(f"uncovered observable on the {w['side']} side:")
            for lab in w["labels"]:
                print(f"  {lab}")
    return EXIT_EQUIV if verdict.equivalent else EXIT_NOT_EQUIV


def _cmd_enumerate(args) -> int:
    deadline = _Deadline(args.timeout)
    scn, res, obs = _load_side(args.scenario, Counter(), args.max_steps, deadline)
    if args.emit_traces:
        _emit_traces(args.emit_traces, scn.name, res.traces)
    if args.json:
        print(
            json.dumps(
                {
                    "scenario": scn.name,
                    "observables": len(obs),
                    "states": res.states,
                    "traces": len(res.traces),
                },
                indent=2,
            )
        )
    else:
        print(
            f"{scn.name}: observables={len(obs)} states={res.states}"
            f" traces={len(res.traces)}"
        )
    return EXIT_EQUIV


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--max-steps",
        type=int,
        default=None,
        help="cap trace length (safety valve; enumeration is finite without it)",
    )
    p.add_argument(
        "--timeout", type=float, default=None, help="wall-clock budget in seconds"
    )
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument(
        "--emit-traces", metavar="DIR", default=None, help="dump traces to DIR"
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="tequiv",
        description="timed observational equivalence of protocol scenarios",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)
    v = sub.add_parser("verify", help="compare two scenarios")
    v.add_argument("left")
    v.add_argument("right")
    v.add_argument(
        "--solver",
        default="internal",
        help="internal (default) or external:<smt-lib2 command>",
    )
    v.add_argument("--jobs", type=int, default=1, help="comparison workers")
    _common_flags(v)
    e = sub.add_parser("enumerate", help="explore one scenario")
    e.add_argument("scenario")
    _common_flags(e)
    args = ap.parse_args(argv)
    try:
        if args.cmd == "verify":
            return _cmd_verify(args)
        return _cmd_enumerate(args)
    except (CliError, BridgeError, ParseError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
