"""Hierarchical resource trees and selector evaluation for placement."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(eq=False)
class ResourceNode:
    name: str
    meta: dict = field(default_factory=dict)
    children: list["ResourceNode"] = field(default_factory=list)
    parent: "ResourceNode | None" = None
    assigned: int = 0          # number of replicas holding this node by split

    def path(self) -> tuple[int, ...]:
        out = []
        n = self
        while n.parent is not None:
            out.append(n.parent.children.index(n))
            n = n.parent
        return tuple(reversed(out))

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def unassigned(self) -> int:
        return sum(1 for c in self.children if not c.assigned)

    def prop(self, key: str):
        if key == "arity":
            return len(self.children)
        if key == "unassigned":
            return self.unassigned()
        return self.meta.get(key)

    def __repr__(self) -> str:
        return f"ResourceNode({self.name!r})"


def _coerce(v: str):
    try:
        return int(v)
    except ValueError:
        return v


def parse_resources(text: str) -> ResourceNode:
    """Parse indentation-nested ``node NAME [k=v ...]`` lines under an implicit root."""
    root = ResourceNode("root")
    stack: list[tuple[int, ResourceNode]] = [(-1, root)]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip(" \t"))
        parts = line.split()
        if parts[0] != "node" or len(parts) < 2:
            raise ConfigError(f"resources line {lineno}: expected 'node NAME [key=value ...]'")
        meta = {}
        for kv in parts[2:]:
            if "=" not in kv:
                raise ConfigError(f"resources line {lineno}: bad attribute {kv!r}")
            k, v = kv.split("=", 1)
            meta[k] = _coerce(v)
        while stack[-1][0] >= indent:
            stack.pop()
        parent = stack[-1][1]
        node = ResourceNode(parts[1], meta, parent=parent)
        parent.children.append(node)
        stack.append((indent, node))
    return root


def load_resources(path: str) -> ResourceNode:
    with open(path, encoding="utf-8") as fh:
        return parse_resources(fh.read())


_PATH = re.compile(r"^(/(\d+|\*))+$")
_FILTER = re.compile(r"^\[\s*(\w+)\s*=\s*([\w.-]+)\s*\]$")


def select(origin: ResourceNode, selector: str) -> list[ResourceNode]:
    """Nodes picked by ``/i/j``, ``/i/*``, ``*`` or ``[key=value]`` relative to ``origin``."""
    s = selector.strip()
    if s == "*":
        return list(origin.children)
    m = _FILTER.match(s)
    if m:
        key, val = m.group(1), _coerce(m.group(2))
        return [c for c in origin.children if c.meta.get(key) == val]
    if _PATH.match(s):
        nodes = [origin]
        for comp in s.strip("/").split("/"):
            nxt = []
            for n in nodes:
                if comp == "*":
                    nxt.extend(n.children)
                elif int(comp) < len(n.children):
                    nxt.append(n.children[int(comp)])
            nodes = nxt
        return nodes
    raise ConfigError(f"bad resource selector {selector!r}")
