"""Independent reference evaluators and frozen expected values for the acceptance suite.

Nothing here imports the runtime; the oracles work on plain dicts so a bug in the
interpreter cannot leak into the expected values.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

# --- frozen values --------------------------------------------------------------------

N_INDEX = "[(0,11,2)]"                                   # 3rd activation of N's 12th incarnation
M_INDEX = "[(1,0,12);(0,0,12);(12,0,12);(0,0,12)]"       # M inside the 13th star unfolding
LOOKUP_FROM_X = "[1;123;1;0]"
LOOKUP_FROM_Y = "[0]"
LIVE_A = [(1, 123, 0), (1, 124, 0)]
LIVE_SBC = [(1, 123, 1), (1, 124, 1)]
BANGSTAR_SEED = 22                                      # found by search; picks start [1, 1, 0]
BANGSTAR_PICKS = [1, 1, 0]
MFL_AT_NS = 10_000_000


# --- C* reference -------------------------------------------------------------------------

@dataclass(frozen=True)
class CounterProgram:
    """``Inc*{n} where n >= limit`` with Inc adding ``step`` and, when
    ``n mod fork = 0``, also emitting ``n + jump``."""
    step: int
    jump: int
    fork: int
    limit: int

    def source(self) -> str:
        return (f"box Inc ((n) -> (n)) = {{ emit {{n = n + {self.step}}}; "
                f"emit {{n = n + {self.jump}}} if n mod {self.fork} = 0 }};\n"
                f"Inc*{{n}} where n >= {self.limit}")

    def box(self, r: dict) -> list[dict]:
        n = r["n"]
        out = [{**r, "n": n + self.step}]
        if n % self.fork == 0:
            out.append({**r, "n": n + self.jump})
        return out

    def guard(self, r: dict) -> bool:
        return "n" in r and r["n"] >= self.limit


def star_reference(box, guard, r: dict, depth: int = 0, limit: int = 10_000) -> list[dict]:
    """Literal recursion  C*(N, g)(r) = r if g(r) else C*(N, g)(N(r))."""
    if depth > limit:
        raise RecursionError("reference evaluation too deep")
    if guard(r):
        return [r]
    out = []
    for o in box(r):
        out.extend(star_reference(box, guard, o, depth + 1, limit))
    return out


def random_counter_programs(count: int, seed: int = 2024) -> list[tuple[CounterProgram, list[int]]]:
    rng = random.Random(seed)
    progs = []
    for _ in range(count):
        p = CounterProgram(step=rng.randint(1, 3), jump=rng.randint(2, 5),
                           fork=rng.randint(3, 6), limit=rng.randint(0, 14))
        inputs = [rng.randint(-3, 16) for _ in range(rng.randint(1, 4))]
        progs.append((p, inputs))
    return progs


# --- transducer references ------------------------------------------------------------------

def sync_reference(records: list[dict], groups: list[frozenset]) -> list[dict]:
    """Synchroniser: collect one record of each group (any order), emit their union."""
    held: dict[int, dict] = {}
    out = []
    for r in records:
        keys = frozenset(r)
        slot = next((i for i, g in enumerate(groups) if g == keys), None)
        if slot is None or slot in held:
            out.append(r)
            continue
        held[slot] = r
        if len(held) == len(groups):
            merged: dict = {}
            for i in range(len(groups)):
                for k, v in held[i].items():
                    merged.setdefault(k, v)
            out.append(merged)
            held.clear()
    return out


# --- grammar-derived program generator (parser fuzzing) ----------------------------------

FUZZ_BOXES = ("box A ((a) -> (a)) = { emit {a = a + 1} };\n"
              "box B ((a) -> (a) | (b)) = { emit {b = a} if a mod 2 = 0 } cost(duration=2us);\n"
              "box C ((b, <t>) -> (b, <t>)) = { emit {b = b}<t=t> times 2 } fault Boom when b = 7;\n")
_LEAVES = ["A", "B", "C", "[| {a},{b} |]", "[| {a=9} -> [emit {a=0}]; {a} -> [emit {a=input.a+1}]; |]",
           "[n=dla(X,[0])]", "[a=time(1000)]", "[| label [0..1]; 0: {a} -> [emit {a=0}] 1; 1: x -> [] 0; |]"]
_SUFFIX = ["'X", "'W", "/X/s", "//p", "/X:mc(64B)", "/:mfl(10ms)", "/W!ge", "/!te", "/W@:share(*)",
           "/W@:split(/0/*)", "$(a=Boom)", "$X(a=Violation(mfl))", "!<t>", "!<t>lr", "!*<r><p>",
           "*{a} where a >= 3", "*{b}"]
_TOKENS = [" ", "(", ")", "..", "|", "'", "/", "!", "*", "<", ">", "{", "}", "[", "]", "|]", "[|",
           "#", "?", "$", "@", ":", ";", ",", "=", "->", "0", "9", "a", "box", "emit", "//", "\n", "\"", "é"]


def gen_network(rng: random.Random, depth: int = 0) -> str:
    if depth > 3 or rng.random() < 0.3:
        s = rng.choice(_LEAVES)
    else:
        k = rng.random()
        if k < 0.35:
            s = f"({gen_network(rng, depth + 1)} .. {gen_network(rng, depth + 1)})"
        elif k < 0.6:
            s = f"({gen_network(rng, depth + 1)} | {gen_network(rng, depth + 1)})"
        elif k < 0.7:
            s = f"?{gen_network(rng, depth + 1)}#"
        else:
            s = f"({gen_network(rng, depth + 1)})"
    while rng.random() < 0.3:
        s = f"({s}){rng.choice(_SUFFIX)}"
    return s


def gen_program(rng: random.Random) -> str:
    return FUZZ_BOXES + gen_network(rng)


def mutate(text: str, rng: random.Random) -> str:
    for _ in range(rng.randint(1, 3)):
        i = rng.randint(0, len(text))
        op = rng.random()
        if op < 0.35 and text:
            j = min(len(text), i + rng.randint(1, 4))
            text = text[:i] + text[j:]
        elif op < 0.7:
            text = text[:i] + rng.choice(_TOKENS) + text[i:]
        elif op < 0.85 and text:
            j = rng.randint(0, len(text))
            text = text[:i] + text[j:j + rng.randint(1, 8)] + text[i:]
        else:
            text = text[:i]
    return text
