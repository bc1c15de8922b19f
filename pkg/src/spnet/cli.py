"""``spnet`` command line: check, run and inspect."""
from __future__ import annotations

import argparse
import json
import re
import sys

from .analysis import analyze, check_budgets
from .core import parse_index
from .errors import ConfigError, ParseError, SPNetError
from .parser import BUDGET_KINDS, UNITS, parse_program
from .printer import algebraic_form
from .records import decode_record, encode_record
from .nodes import node_at
from .resources import parse_resources
from .runtime import RunConfig, Runtime
from .services import (arity_at, load_plugin, load_trace, lookup_event, state_at, trace_header,
                       write_trace)

EXIT_OK, EXIT_STATIC, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3

_QTY = re.compile(r"^(\d+)([A-Za-z]*)$")


def parse_budget(text: str) -> tuple[str, float]:
    """``kind=amount[unit]``; a bare power amount is read as watts."""
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"budget must look like kind=value, got {text!r}")
    kind, val = text.split("=", 1)
    if kind not in BUDGET_KINDS:
        raise argparse.ArgumentTypeError(f"unknown budget kind {kind!r}")
    m = _QTY.match(val.strip())
    if not m or (m.group(2) and m.group(2) not in UNITS):
        raise argparse.ArgumentTypeError(f"bad budget amount {val!r}")
    n, unit = int(m.group(1)), m.group(2)
    if unit:
        return kind, float(n * UNITS[unit])
    return kind, float(n * 1000 if kind == "mp" else n)


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _parse_file(path: str):
    return parse_program(_read(path))


def _parse_error(path: str, e: ParseError) -> int:
    print(f"ERROR\t{path}:{e.line}:{e.col}\tPARSE\t{e.message}", file=sys.stderr)
    return EXIT_PARSE


def cmd_check(args) -> int:
    try:
        prog = _parse_file(args.file)
    except ParseError as e:
        return _parse_error(args.file, e)
    rep = analyze(prog.network, prog.boxes, prog.positions)
    check_budgets(prog.network, rep, prog.positions)
    for d in rep.diagnostics:
        print(d.format(args.file))
    if args.verbose and rep.ok:
        for path in sorted(rep.signatures):
            sig = rep.type_signature(path)
            loc = "[" + ";".join(map(str, path)) + "]"
            print(f"{loc}\t{algebraic_form(node_at(prog.network, path))}\t{sig}")
    return EXIT_OK if rep.ok else EXIT_STATIC


def cmd_run(args) -> int:
    for ref in args.plugin:
        load_plugin(ref)
    text = _read(args.file)
    try:
        prog = parse_program(text)
    except ParseError as e:
        return _parse_error(args.file, e)
    try:
        inputs = [decode_record(line) for line in _read(args.input).splitlines()
                  if line.strip() and not line.lstrip().startswith("#")]
    except ParseError as e:
        return _parse_error(args.input, e)
    res_text = _read(args.resources) if args.resources else None
    config = RunConfig(seed=args.seed, budgets=dict(args.budget), collect_zombies=args.collect_zombies,
                       smoothing=args.smoothing, workers=args.workers, debug=args.debug,
                       resources=parse_resources(res_text) if res_text else None)
    try:
        h = Runtime(prog, config=config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STATIC
    for r in inputs:
        h.feed(r)
    code = EXIT_OK
    try:
        h.run_to_quiescence()
    except SPNetError as e:
        print(f"runtime exception: {e}", file=sys.stderr)
        code = EXIT_RUNTIME
    for r in h.drain():
        print(encode_record(r))
    if args.trace:
        header = trace_header(text, inputs, config, res_text, args.plugin)
        write_trace(args.trace, header, h)
    return code


def cmd_inspect(args) -> int:
    tr = load_trace(args.trace)
    try:
        if args.service == "lookup":
            print(lookup_event(tr, args.event, args.label, args.functional))
        elif args.service == "arity":
            rep = arity_at(tr, parse_index(args.index), args.at)
            print(" ".join(f"{k}={v}" for k, v in rep.items()))
        else:
            for entry in state_at(tr, parse_index(args.index), args.at):
                print(json.dumps(entry, sort_keys=True))
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STATIC
    except SPNetError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spnet", description="Coordination network interpreter.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("check", help="parse and statically analyse a program")
    c.add_argument("file")
    c.add_argument("-v", "--verbose", action="store_true", help="print per-node signatures")
    c.set_defaults(fn=cmd_check)

    r = sub.add_parser("run", help="run a program over an input record file")
    r.add_argument("file")
    r.add_argument("--input", required=True, help="record lines ('-' for stdin)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace", help="write the event trace here")
    r.add_argument("--budget", type=parse_budget, action="append", default=[],
                   help="root budget, e.g. mc=64MB or mp=5 (watts)")
    r.add_argument("--resources", help="resource tree file")
    r.add_argument("--collect-zombies", action="store_true")
    r.add_argument("--smoothing", default="0.5", help="alpha in (0,1] or window:N")
    r.add_argument("--workers", type=int, default=None, help="concurrent activation limit")
    r.add_argument("--plugin", action="append", default=[], help="module registering host boxes")
    r.add_argument("--debug", action="store_true")
    r.set_defaults(fn=cmd_run)

    i = sub.add_parser("inspect", help="operator services over a recorded trace")
    i.add_argument("trace")
    isub = i.add_subparsers(dest="service", required=True)
    lk = isub.add_parser("lookup")
    lk.add_argument("event", type=int, help="0-based event number")
    lk.add_argument("label")
    lk.add_argument("--functional", action="store_true")
    ar = isub.add_parser("arity")
    ar.add_argument("index")
    ar.add_argument("--at", type=int, default=None, help="virtual ns")
    st = isub.add_parser("state")
    st.add_argument("index")
    st.add_argument("--at", type=int, default=None)
    i.set_defaults(fn=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
