"""A small line-oriented language of navigation primitive calls.

Grammar::

    program := line+
    line    := call NEWLINE | COMMENT | BLANK
    call    := IDENT "(" [arg ("," arg)*] ")"
    arg     := STRING | INT | REAL
    COMMENT := "#" ... end of line

Strings are double-quoted; ``\\"`` and ``\\\\`` are the only escapes.
One call per line keeps programs easy for a language model to emit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ArgTypeError, ArityError, DSLSyntaxError, UnknownPrimitive

STR, INT, REAL = "str", "int", "real"

# name -> parameter types
REGISTRY: dict[str, tuple[str, ...]] = {
    "move_to_object": (STR,),
    "move_to_instance": (STR, INT),
    "move_to_nth_closest": (STR, INT),
    "move_to_nth_in_view": (STR, INT),
    "move_to_closest": (STR,),
    "move_to_farthest": (STR,),
    "move_between": (STR, INT, STR, INT),
    "move_between_instances": (STR, INT, INT),
    "move_to_left_of": (STR, INT),
    "move_to_right_of": (STR, INT),
    "move_in_front_of": (STR, INT),
    "move_behind": (STR, INT),
    "move_to_point": (REAL, REAL),
    "move_within": (STR, INT, REAL),
    "face_object": (STR,),
    "face_instance": (STR, INT),
    "turn_left": (REAL,),
    "turn_right": (REAL,),
    "turn_to_heading": (REAL,),
    "move_forward": (REAL,),
    "move_backward": (REAL,),
    "return_to_start": (),
    "stop": (),
}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#.*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
""", re.VERBOSE)


@dataclass(frozen=True)
class PrimitiveCall:
    name: str
    args: tuple = ()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def __str__(self):
        return f"{self.name}({', '.join(_format_arg(a) for a in self.args)})"


@dataclass(frozen=True)
class Program:
    calls: tuple[PrimitiveCall, ...]

    def __iter__(self):
        return iter(self.calls)

    def __len__(self):
        return len(self.calls)

    def __str__(self):
        return pretty(self)


def _format_arg(a) -> str:
    if isinstance(a, str):
        return '"' + a.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(a, bool):
        raise TypeError("booleans are not DSL values")
    if isinstance(a, int):
        return str(a)
    return repr(float(a))


def pretty(program: Program) -> str:
    return "".join(f"{c}\n" for c in program.calls)


def _unescape(raw: str) -> str:
    return re.sub(r"\\(.)", r"\1", raw[1:-1])


def _tokenize(text: str, lineno: int):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == '"':
                raise DSLSyntaxError("unterminated string", lineno, pos + 1)
            raise DSLSyntaxError(f"unexpected character {ch!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append((kind, m.group(), pos + 1))
        pos = m.end()
    return out


def _parse_line(text: str, lineno: int):
    toks = _tokenize(text, lineno)
    if not toks:
        return None
    end_col = len(text.rstrip()) + 1

    def expect(i, kinds, what):
        if i >= len(toks):
            raise DSLSyntaxError(f"expected {what} before end of line", lineno, end_col)
        if toks[i][0] not in kinds:
            raise DSLSyntaxError(f"expected {what}, found {toks[i][1]!r}", lineno, toks[i][2])
        return toks[i]

    _, name, col = expect(0, ("ident",), "primitive name")
    expect(1, ("lparen",), "'('")
    i = 2
    args = []  # (kind, value, col)
    if i < len(toks) and toks[i][0] == "rparen":
        i += 1
    else:
        while True:
            kind, tok, acol = expect(i, ("string", "number"), "a quoted string or a number")
            if kind == "string":
                args.append((STR, _unescape(tok), acol))
            elif re.fullmatch(r"[-+]?\d+", tok):
                args.append((INT, int(tok), acol))
            else:
                args.append((REAL, float(tok), acol))
            i += 1
            kind, tok, _ = expect(i, ("comma", "rparen"), "',' or ')'")
            i += 1
            if kind == "rparen":
                break
    if i < len(toks):
        raise DSLSyntaxError(f"unexpected {toks[i][1]!r} after call", lineno, toks[i][2])
    return name, args, col


def _check_call(name, args, lineno, col) -> PrimitiveCall:
    sig = REGISTRY.get(name)
    if sig is None:
        raise UnknownPrimitive(f"unknown primitive {name!r}", lineno, col)
    if len(args) != len(sig):
        raise ArityError(f"{name} takes {len(sig)} argument(s), got {len(args)}", lineno, col)
    values = []
    for k, ((kind, value, acol), want) in enumerate(zip(args, sig), 1):
        if want == REAL and kind in (INT, REAL):
            values.append(float(value))
        elif kind == want:
            values.append(value)
        else:
            raise ArgTypeError(f"argument {k} of {name} must be {want}, got {kind}", lineno, acol)
    return PrimitiveCall(name, tuple(values), lineno, col)


def parse_program(text: str) -> Program:
    calls = []
    for lineno, line in enumerate(text.split("\n"), 1):
        parsed = _parse_line(line, lineno)
        if parsed is None:
            continue
        calls.append(_check_call(*parsed[:2], lineno, parsed[2]))
    if not calls:
        raise DSLSyntaxError("program contains no calls", 1, 1)
    return Program(tuple(calls))


def make_call(name: str, *args) -> PrimitiveCall:
    """Build a validated call in code (same checks as the parser)."""
    typed = []
    for a in args:
        if isinstance(a, str):
            typed.append((STR, a, 0))
        elif isinstance(a, int) and not isinstance(a, bool):
            typed.append((INT, a, 0))
        else:
            typed.append((REAL, float(a), 0))
    return _check_call(name, typed, 0, 0)
