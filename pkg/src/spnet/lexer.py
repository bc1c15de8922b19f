"""Tokenizer for .spnet source text."""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError

# longest first
PUNCT = ["[|", "|]", "..", ":=", "->", "!*", "!=", "<=", ">=",
         "|", "(", ")", "{", "}", "[", "]", "<", ">", "=", ";", ",", ":", ".",
         "*", "!", "?", "#", "'", "$", "/", "@", "+", "-", "~", "%", "&"]

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>" + "|".join(re.escape(p) for p in PUNCT) + r")"
)


@dataclass
class Token:
    kind: str          # int | ident | punct | eof
    value: str
    line: int
    col: int
    offset: int

    def __repr__(self):
        return f"{self.kind}:{self.value!r}@{self.line}:{self.col}"


def tokenize(text: str) -> list[Token]:
    """Split source into tokens.

    ``//`` starts a comment only at the start of a line or after
    whitespace, so that ``N//f`` (isolation without a selector) stays
    expressible.
    """
    if not isinstance(text, str):
        raise ParseError("source must be text", 1, 1)
    toks: list[Token] = []
    pos = 0
    line, line_start = 1, 0
    n = len(text)
    while pos < n:
        if text.startswith("//", pos) and (pos == 0 or text[pos - 1] in " \t\r\n"):
            end = text.find("\n", pos)
            pos = n if end < 0 else end
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        val = m.group()
        if kind == "ws":
            nl = val.count("\n")
            if nl:
                line += nl
                line_start = pos + val.rfind("\n") + 1
        else:
            toks.append(Token(kind, val, line, pos - line_start + 1, pos))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1, pos))
    return toks
