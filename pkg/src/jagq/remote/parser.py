"""Recursive-descent parser for the textual query language.

Grammar (stage keywords are case sensitive)::

    query  := "From(" id ")" { "|>" stage }
    stage  := Get "(" string ")" | Where "(" lambda ")" | Select "(" lambda ")"
            | SelectMany "(" lambda ")" | Count "()" | First "()"
    lambda := param "=>" expr

Expressions are C-like: ``&&``/``||``, comparisons, arithmetic, unary
minus, declared functions by name, ``Abs``/``Sqrt``/``Sin``/``Cos`` for the
builtin unary math.  Integer-looking literals parse as integers, anything
with a point or exponent as floating point.

``SelectMany`` is recognized but rejected: flattening has no node in this
engine's expression IR.
"""
from __future__ import annotations

import re

from ..errors import QuerySyntaxError
from ..expr import ExprHandle, Session

_FROM_RE = re.compile(r"From\(([^)\s]+)\)")

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<string>"[^"]*")
  | (?P<op>\|>|=>|&&|\|\||<=|>=|==|!=|[()<>.,+\-*/])
""", re.X)

_STAGES = ("Get", "Where", "Select", "SelectMany", "Count", "First")
_UNARY_NAMES = {"Abs": "abs", "Sqrt": "sqrt", "Sin": "sin", "Cos": "cos"}
_COMPARISONS = ("<=", ">=", "==", "!=", "<", ">")


class _Tokens:
    def __init__(self, text: str, base: int):
        self.items: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            match = _TOKEN_RE.match(text, pos)
            if match is None:
                raise QuerySyntaxError(f"unexpected character {text[pos]!r}", base + pos)
            if match.lastgroup != "ws":
                self.items.append((match.lastgroup, match.group(), base + pos))
            pos = match.end()
        self.index = 0
        self.end = base + len(text)

    def peek(self):
        if self.index < len(self.items):
            return self.items[self.index]
        return ("eof", "", self.end)

    def next(self):
        token = self.peek()
        self.index += 1
        return token

    def expect(self, value: str):
        kind, text, pos = self.next()
        if text != value or kind == "eof":
            raise QuerySyntaxError(f"expected {value!r}, found {text or 'end of query'!r}", pos)
        return pos


def parse_query(text: str, session: Session | None = None) -> ExprHandle:
    """Parse query text into an expression over a (possibly fresh) session."""
    if session is None:
        session = Session()
    head = _FROM_RE.match(text)
    if head is None or head.start() != 0:
        raise QuerySyntaxError("query must start with From(<dataset>)", 0)
    current = session.source(head.group(1))
    tokens = _Tokens(text[head.end():], head.end())
    parser = _Parser(tokens, session)
    while tokens.peek()[0] != "eof":
        tokens.expect("|>")
        current = parser.stage(current)
    return current


class _Parser:
    def __init__(self, tokens: _Tokens, session: Session):
        self.tokens = tokens
        self.session = session

    def stage(self, current: ExprHandle) -> ExprHandle:
        kind, name, pos = self.tokens.next()
        if kind != "ident" or name not in _STAGES:
            raise QuerySyntaxError(f"unknown stage {name or 'end of query'!r}", pos)
        self.tokens.expect("(")
        if name == "Get":
            tkind, raw, tpos = self.tokens.next()
            if tkind != "string":
                raise QuerySyntaxError("Get expects a quoted collection name", tpos)
            self.tokens.expect(")")
            return self.session.attribute(current, raw[1:-1])
        if name in ("Count", "First"):
            self.tokens.expect(")")
            return self.session.aggregate(current, name)
        if name == "SelectMany":
            raise QuerySyntaxError("SelectMany is not supported by this engine", pos)
        # Where / Select take a lambda
        pkind, pname, ppos = self.tokens.next()
        if pkind != "ident":
            raise QuerySyntaxError(f"{name} expects a lambda parameter", ppos)
        self.tokens.expect("=>")
        build = self.session.filter if name == "Where" else self.session.map
        out = build(current, lambda param: self.expr({pname: param}))
        self.tokens.expect(")")
        return out

    # -- expression grammar -------------------------------------------------

    def expr(self, env: dict) -> ExprHandle:
        return self._or(env)

    def _or(self, env):
        left = self._and(env)
        while self.tokens.peek()[1] == "||":
            self.tokens.next()
            left = self.session.binary("|", left, self._and(env))
        return left

    def _and(self, env):
        left = self._cmp(env)
        while self.tokens.peek()[1] == "&&":
            self.tokens.next()
            left = self.session.binary("&", left, self._cmp(env))
        return left

    def _cmp(self, env):
        left = self._add(env)
        if self.tokens.peek()[1] in _COMPARISONS:
            op = self.tokens.next()[1]
            return self.session.binary(op, left, self._add(env))
        return left

    def _add(self, env):
        left = self._mul(env)
        while self.tokens.peek()[1] in ("+", "-"):
            op = self.tokens.next()[1]
            left = self.session.binary(op, left, self._mul(env))
        return left

    def _mul(self, env):
        left = self._unary(env)
        while self.tokens.peek()[1] in ("*", "/"):
            op = self.tokens.next()[1]
            left = self.session.binary(op, left, self._unary(env))
        return left

    def _unary(self, env):
        if self.tokens.peek()[1] == "-":
            self.tokens.next()
            inner = self._unary(env)
            node = inner.node
            if node.kind == "const" and not isinstance(node.value, bool):
                return ExprHandle(self.session, self.session.space.constant(-node.value))
            return self.session.unary("neg", inner)
        return self._postfix(env)

    def _postfix(self, env):
        value = self._atom(env)
        while self.tokens.peek()[1] == ".":
            self.tokens.next()
            kind, name, pos = self.tokens.next()
            if kind != "ident":
                raise QuerySyntaxError("expected a field name after '.'", pos)
            value = self.session.attribute(value, name)
        return value

    def _atom(self, env):
        kind, text, pos = self.tokens.next()
        if kind == "number":
            if re.fullmatch(r"\d+", text):
                value: float | int = int(text)
            else:
                value = float(text)
            return ExprHandle(self.session, self.session.space.constant(value))
        if kind == "op" and text == "(":
            inner = self.expr(env)
            self.tokens.expect(")")
            return inner
        if kind == "ident":
            if text == "true":
                return ExprHandle(self.session, self.session.space.constant(True))
            if text == "false":
                return ExprHandle(self.session, self.session.space.constant(False))
            if text in env:
                return env[text]
            if self.tokens.peek()[1] == "(":
                return self._call(text, pos, env)
            raise QuerySyntaxError(f"unknown name {text!r}", pos)
        raise QuerySyntaxError(f"unexpected token {text or 'end of query'!r}", pos)

    def _call(self, name: str, pos: int, env):
        self.tokens.expect("(")
        args = []
        if self.tokens.peek()[1] != ")":
            args.append(self.expr(env))
            while self.tokens.peek()[1] == ",":
                self.tokens.next()
                args.append(self.expr(env))
        self.tokens.expect(")")
        if name in _UNARY_NAMES:
            if len(args) != 1:
                raise QuerySyntaxError(f"{name} takes one argument", pos)
            return self.session.unary(_UNARY_NAMES[name], args[0])
        if name not in self.session.functions:
            raise QuerySyntaxError(f"unknown function {name!r}", pos)
        return self.session.call(name, *args)
