"""For each annotated corpus program, compare outputs with its extra-functional erasure."""
import sys
from collections import Counter
from pathlib import Path

from spnet.nodes import erase_xfun
from spnet.parser import parse_program
from spnet.records import decode_record, encode_record
from spnet.resources import load_resources
from spnet.runtime import RunConfig, Runtime, run

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"


def inputs(path: Path):
    f = path.with_suffix(".in")
    if not f.exists():
        f = PROGRAMS / "default.in"
    return [decode_record(l) for l in f.read_text().splitlines() if l.strip()]


if __name__ == "__main__":
    res = load_resources(str(PROGRAMS / "cores.res"))
    bad = 0
    for path in sorted(PROGRAMS.glob("x*.spnet")):
        prog = parse_program(path.read_text())
        ins = inputs(path)
        a, ha = run(prog, ins, RunConfig(seed=0, resources=res))
        h = Runtime(erase_xfun(prog.network), config=RunConfig(seed=0), boxes=prog.boxes)
        for r in ins:
            h.feed(r)
        h.run_to_quiescence()
        b = h.drain()
        same = Counter(map(encode_record, a)) == Counter(map(encode_record, b))
        bad += not same
        print(f"{path.name:28} outputs={len(a):3} t_annotated={ha.now:>9} t_erased={h.now:>9} "
              f"{'same' if same else 'DIFFERENT'}")
    sys.exit(1 if bad else 0)
