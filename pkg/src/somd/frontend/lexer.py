from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ParseError
from .ast import Loc

KEYWORDS = {
    "int", "long", "double", "boolean", "void",
    "for", "while", "if", "else", "return",
    "sync", "reduce", "dist", "shared",
    "new", "true", "false", "class", "static", "final",
}

TYPE_KEYWORDS = ("int", "long", "double", "boolean", "void")

_OPERATORS = [
    ">>>=", "<<=", ">>=", ">>>",
    "++", "--", "&&", "||", "==", "!=", "<=", ">=", "<<", ">>",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "+", "-", "*", "/", "%", "=", "<", ">", "!", "~", "&", "|", "^",
    "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}",
]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<nl>\n)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<double>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[dD]?|\d+[eE][+-]?\d+[dD]?|\d+[dD])
  | (?P<hex>0[xX][0-9a-fA-F]+[lL]?)
  | (?P<int>\d+[lL]?)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op>"""
    + "|".join(re.escape(o) for o in _OPERATORS)
    + r""")
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | kw | int | long | double | op | eof
    text: str
    loc: Loc
    value: object = None

    def is_op(self, *ops: str) -> bool:
        return self.kind == "op" and self.text in ops

    def is_kw(self, *kws: str) -> bool:
        return self.kind == "kw" and self.text in kws


def tokenize(source: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            col = pos - line_start + 1
            raise ParseError(f"unexpected character {source[pos]!r}", Loc(line, col))
        kind = m.lastgroup
        text = m.group()
        loc = Loc(line, pos - line_start + 1)
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "bcomment":
            nls = text.count("\n")
            if nls:
                line += nls
                line_start = pos + text.rfind("\n") + 1
        elif kind in ("ws", "lcomment"):
            pass
        elif kind == "double":
            tokens.append(Token("double", text, loc, float(text.rstrip("dD"))))
        elif kind in ("int", "hex"):
            is_long = text[-1] in "lL"
            digits = text.rstrip("lL")
            value = int(digits, 16) if kind == "hex" else int(digits)
            if kind == "hex":
                # Java hex literals denote the bit pattern of the type
                bits = 64 if is_long else 32
                if value >= 1 << bits:
                    raise ParseError(f"integer literal out of range: {text}", loc)
                if value >= 1 << (bits - 1):
                    value -= 1 << bits
            tokens.append(Token("long" if is_long else "int", text, loc, value))
        elif kind == "ident":
            tokens.append(Token("kw" if text in KEYWORDS else "ident", text, loc))
        else:
            tokens.append(Token("op", text, loc))
        pos = m.end()
    tokens.append(Token("eof", "", Loc(line, pos - line_start + 1)))
    return tokens
