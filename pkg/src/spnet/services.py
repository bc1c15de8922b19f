"""Operator services over recorded traces: lookup, arity inspection and state listing."""
from __future__ import annotations

import importlib
import importlib.util
import json
import os
from dataclasses import dataclass, field

from .core import format_functional, format_index, functional, parse_index
from .errors import ConfigError, SPNetError, UnknownIndex, UnknownLabel
from .nodes import BangStar, Comp, Label, Node, ReplSelect, Select, StarComp
from .parser import parse_program
from .records import decode_record, encode_record
from .resources import parse_resources
from .runtime import RunConfig, Runtime, TraceEvent

HEADER = "#spnet-trace v1 "
_loaded: set[str] = set()


@dataclass
class RecordedTrace:
    header: dict
    events: list[TraceEvent] = field(default_factory=list)

    @property
    def program(self):
        return parse_program(self.header["program"])


def trace_header(program_text: str, inputs, config: RunConfig, resources_text: str | None = None,
                 plugins=()) -> str:
    meta = {"program": program_text, "inputs": [encode_record(r) for r in inputs],
            "config": config.public(), "resources": resources_text, "plugins": list(plugins)}
    return HEADER + json.dumps(meta, sort_keys=True)


def write_trace(path: str, header: str, h: Runtime) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for line in h.trace_lines():
            fh.write(line + "\n")


def parse_trace(text: str) -> RecordedTrace:
    header: dict = {}
    events = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        if line.startswith(HEADER):
            header = json.loads(line[len(HEADER):])
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ConfigError(f"trace line {n}: expected 4 tab-separated fields")
        events.append(TraceEvent(int(parts[0]), parts[1], parse_index(parts[2]), parts[3]))
    return RecordedTrace(header, events)


def load_trace(path: str) -> RecordedTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def load_plugin(ref: str) -> None:
    """Import a module (dotted name or .py path) whose import registers host boxes."""
    if ref in _loaded:
        return
    _loaded.add(ref)
    if ref.endswith(".py") or os.sep in ref:
        name = "spnet_plugin_" + os.path.splitext(os.path.basename(ref))[0]
        spec = importlib.util.spec_from_file_location(name, ref)
        if spec is None or spec.loader is None:
            raise ConfigError(f"cannot load plugin {ref!r}")
        mod = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(mod)
    else:
        importlib.import_module(ref)


# --- lookup -------------------------------------------------------------------------

def label_offsets(spec: Node, findex) -> dict[str, int]:
    """For each label on the path named by ``findex``, the number of index
    components consumed above its innermost occurrence."""
    seen: dict[str, int] = {}
    node = spec
    idx = list(findex)
    used = 0
    while True:
        if isinstance(node, Label):
            seen[node.label] = used
        if isinstance(node, (Comp, Select)):
            if used >= len(idx) or not 0 <= idx[used] < len(node.items):
                break
            node = node.items[idx[used]]
            used += 1
        elif isinstance(node, (StarComp, BangStar, ReplSelect)):
            if used >= len(idx):
                break
            node = node.inner
            used += 1
        elif node.children():
            node = node.children()[0]
        else:
            break
    if used < len(idx):
        raise UnknownIndex(f"index {format_functional(idx)} leaves the network")
    return seen


def lookup(spec: Node, index, label: str) -> tuple:
    """Strip the part of ``index`` above the innermost ``Label(label)`` on its path."""
    idx = tuple(index)
    f = [c[0] if isinstance(c, tuple) else c for c in idx]
    offsets = label_offsets(spec, f)
    if label not in offsets:
        raise UnknownLabel(f"label {label!r} is not on the path of {format_functional(f)}")
    return idx[offsets[label]:]


def lookup_event(tr: RecordedTrace, event_id: int, label: str, as_functional: bool = False) -> str:
    if not 0 <= event_id < len(tr.events):
        raise UnknownIndex(f"no event {event_id} (trace has {len(tr.events)})")
    rel = lookup(tr.program.network, tr.events[event_id].index, label)
    return format_functional(functional(rel)) if as_functional else format_index(rel)


# --- replay-based inspection -----------------------------------------------------------

def replay(tr: RecordedTrace, at: int | None = None) -> Runtime:
    """Rebuild the run described by the trace header and advance it to ``at`` (or the end)."""
    meta = tr.header
    if not meta:
        raise ConfigError("trace has no header; cannot replay")
    for ref in meta.get("plugins", ()):
        load_plugin(ref)
    cfg = dict(meta.get("config", {}))
    res = meta.get("resources")
    config = RunConfig(**cfg, resources=parse_resources(res) if res else None)
    h = Runtime(tr.program, config=config)
    for text in meta.get("inputs", ()):
        h.feed(decode_record(text))
    try:
        h.run_to_quiescence(until=at)
    except SPNetError:
        pass  # a failing run is still inspectable at the point it stopped
    return h


def arity_at(tr: RecordedTrace, index, at: int | None = None) -> dict[str, int]:
    return replay(tr, at).arity_report(tuple(index))


def state_at(tr: RecordedTrace, index, at: int | None = None) -> list[dict]:
    return replay(tr, at).state(tuple(index))


__all__ = ["RecordedTrace", "trace_header", "write_trace", "parse_trace", "load_trace",
           "load_plugin", "lookup", "lookup_event", "replay", "arity_at", "state_at"]
