"""Search seeds whose C! pick sequence starts with a given prefix (default 1 1 0)."""
import argparse
from pathlib import Path

from spnet.parser import parse_program
from spnet.records import decode_record
from spnet.runtime import RunConfig, run

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("prefix", nargs="*", type=int, default=[1, 1, 0])
    ap.add_argument("--limit", type=int, default=200)
    args = ap.parse_args()
    prog = parse_program((PROGRAMS / "bangstar.spnet").read_text())
    ins = [decode_record(l) for l in (PROGRAMS / "bangstar.in").read_text().splitlines() if l]
    for seed in range(args.limit):
        _, h = run(prog, ins, RunConfig(seed=seed))
        if h.picks[:len(args.prefix)] == args.prefix:
            calls = [e.payload for e in h.trace_events if e.kind == "box_call" and "<r=" in e.payload]
            print(seed, h.picks, calls[:3])
