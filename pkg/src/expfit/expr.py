"""A small arithmetic expression language for coefficient fields.

Grammar (``^`` binds tightest and is right associative)::

    field   := expr | '[' field (',' field)* ']' | '(' field ',' field (',' field)* ')'
    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Variables are ``x``, ``y``, ``z`` and the constant ``pi``. Evaluation is
vectorised over an ``(N, dim)`` array of points.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}
COORDINATES = ("x", "y", "z")
CONSTANTS = {"pi": np.pi}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Vec:
    """Vector or matrix literal; items are scalar expressions or nested ``Vec``."""
    items: tuple


Node = Union[Num, Var, Neg, BinOp, Call, Vec]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),\[\]]))"
)


def _tokenize(text: str):
    pos, tokens = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, off = self.peek()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)
        self.advance()

    def field(self) -> Node:
        kind, val, _ = self.peek()
        if val == "[":
            self.advance()
            items = [self.field()]
            while self.peek()[1] == ",":
                self.advance()
                items.append(self.field())
            self.expect("]")
            return Vec(tuple(items))
        if val == "(":
            # tuple literal or parenthesised scalar
            save = self.i
            self.advance()
            first = self.field()
            if self.peek()[1] == ",":
                items = [first]
                while self.peek()[1] == ",":
                    self.advance()
                    items.append(self.field())
                self.expect(")")
                return Vec(tuple(items))
            self.i = save
        return self.expr()

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, off = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[1] == "(":
                if val not in FUNCTIONS:
                    raise ExprError(f"unknown function {val!r}")
                self.advance()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[val][0]
                if len(args) != arity:
                    raise ExprError(f"{val}() takes {arity} argument(s), got {len(args)}")
                return Call(val, tuple(args))
            if val not in COORDINATES and val not in CONSTANTS:
                raise ExprError(f"unknown identifier {val!r}")
            return Var(val)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", off)


def parse_field(text: str) -> Node:
    """Parse a scalar expression or a vector/matrix literal of expressions."""
    p = _Parser(text)
    node = p.field()
    kind, val, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {val!r}", off)
    return node


def parse_expr(text: str) -> Node:
    """Parse a scalar expression."""
    p = _Parser(text)
    node = p.expr()
    kind, val, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {val!r}", off)
    return node


def to_text(node: Node) -> str:
    """Render ``node`` so that ``parse_field(to_text(node)) == node``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)}{node.op}{to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Vec):
        return "[" + ", ".join(to_text(a) for a in node.items) + "]"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Node) -> set:
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, (Call, Vec)):
        out = set()
        for a in node.args if isinstance(node, Call) else node.items:
            out |= free_variables(a)
        return out
    return set()


def shape_of(node: Node) -> tuple:
    if not isinstance(node, Vec):
        return ()
    shapes = {shape_of(item) for item in node.items}
    if len(shapes) != 1:
        raise ExprError("ragged vector/matrix literal")
    return (len(node.items),) + shapes.pop()


def evaluate(node: Node, points) -> np.ndarray:
    """Evaluate at ``points`` of shape (N, dim); result shape is (N,) + shape_of(node)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = points.shape
    if isinstance(node, Vec):
        return np.stack([evaluate(item, points) for item in node.items], axis=1)
    if isinstance(node, Num):
        return np.full(n, node.value)
    if isinstance(node, Var):
        if node.name in CONSTANTS:
            return np.full(n, CONSTANTS[node.name])
        k = COORDINATES.index(node.name)
        if k >= dim:
            raise ExprError(f"variable {node.name!r} not available in {dim}D")
        return points[:, k].copy()
    if isinstance(node, Neg):
        return -evaluate(node.operand, points)
    if isinstance(node, BinOp):
        a, b = evaluate(node.left, points), evaluate(node.right, points)
        with np.errstate(all="ignore"):
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                return a / b
            return np.power(a, b)
    if isinstance(node, Call):
        _, fn = FUNCTIONS[node.name]
        with np.errstate(all="ignore"):
            return fn(*(evaluate(a, points) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


def check_variables(node: Node, dim: int) -> None:
    allowed = set(COORDINATES[:dim])
    extra = free_variables(node) - allowed
    if extra:
        raise ExprError(f"unknown identifier {sorted(extra)[0]!r} in {dim}D")
