"""Symbolic expression trees: representation, protected evaluation, random
generation, printing and parsing.

Trees are immutable. Every operator is total: for finite inputs the result is
always finite, which is what lets the genetic search evaluate arbitrary
programs without guarding each call.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

PROTECT = 1e-3
EXP_CAP = 30.0
_BIG = 1e300

UNARY_OPS = ("inv", "cos", "sqrt", "exp", "log", "neg")
BINARY_OPS = ("add", "sub", "mul", "div", "min", "max")
_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_FROM_INFIX = {v: k for k, v in _INFIX.items()}


class ExprError(ValueError):
    """Structural problem with an expression (bad op, bad variable index)."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class _Node:
    """Shared structural helpers for all node kinds.

    ``length``, ``depth`` and ``max_var`` are computed once at construction.
    """

    def _stats(self, *children):
        object.__setattr__(self, "length", 1 + sum(c.length for c in children))
        object.__setattr__(self, "depth", 1 + max((c.depth for c in children), default=0))
        object.__setattr__(self, "max_var", max((c.max_var for c in children), default=-1))

    @property
    def children(self) -> tuple:
        return ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Constant(_Node):
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ExprError(f"constant must be finite, got {self.value}")
        object.__setattr__(self, "value", float(self.value))
        self._stats()


@dataclass(frozen=True, eq=True)
class Variable(_Node):
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ExprError(f"variable index must be >= 0, got {self.index}")
        self._stats()
        object.__setattr__(self, "max_var", self.index)


@dataclass(frozen=True, eq=True)
class Unary(_Node):
    op: str
    child: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ExprError(f"unknown unary op {self.op!r}")
        self._stats(self.child)

    @property
    def children(self) -> tuple:
        return (self.child,)


@dataclass(frozen=True, eq=True)
class Binary(_Node):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ExprError(f"unknown binary op {self.op!r}")
        self._stats(self.left, self.right)

    @property
    def children(self) -> tuple:
        return (self.left, self.right)


Expr = Constant | Variable | Unary | Binary


@dataclass(frozen=True)
class BasisSet:
    """Operators and constant range available to the genetic search."""

    unary: tuple[str, ...] = ("inv", "cos")
    binary: tuple[str, ...] = ("add", "sub", "mul", "div")
    const_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "unary", tuple(self.unary))
        object.__setattr__(self, "binary", tuple(self.binary))
        if not self.unary and not self.binary:
            raise ExprError("basis set must contain at least one operator")
        for op in self.unary:
            if op not in UNARY_OPS:
                raise ExprError(f"unknown unary op {op!r}")
        for op in self.binary:
            if op not in BINARY_OPS:
                raise ExprError(f"unknown binary op {op!r}")
        lo, hi = self.const_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ExprError(f"bad constant range {self.const_range}")

    @classmethod
    def from_names(cls, names: Sequence[str], const_range=(-1.0, 1.0)) -> BasisSet:
        names = [n.strip() for n in names if n.strip()]
        unary = tuple(n for n in names if n in UNARY_OPS)
        binary = tuple(n for n in names if n in BINARY_OPS)
        unknown = set(names) - set(unary) - set(binary)
        if unknown:
            raise ExprError(f"unknown basis functions: {sorted(unknown)}")
        return cls(unary=unary, binary=binary, const_range=tuple(const_range))

    @property
    def names(self) -> tuple[str, ...]:
        return self.binary + self.unary


# ---------------------------------------------------------------------------
# evaluation


def _guard(x):
    # arithmetic overflow is the only way out of the finite reals; clipping
    # every arithmetic result keeps all inputs finite, so no NaN can form
    return np.clip(x, -_BIG, _BIG)


def _apply_unary(op, x):
    if op == "cos":
        return np.cos(x)
    if op == "neg":
        return -x
    if op == "sqrt":
        return np.sqrt(np.abs(x))
    if op == "exp":
        return np.exp(np.minimum(x, EXP_CAP))
    ok = np.abs(x) > PROTECT
    if op == "inv":
        return np.where(ok, 1.0 / np.where(ok, x, 1.0), 0.0)
    if op == "log":
        return np.where(ok, np.log(np.where(ok, np.abs(x), 1.0)), 0.0)
    raise ExprError(f"unknown unary op {op!r}")


def _apply_binary(op, a, b):
    if op == "add":
        return _guard(a + b)
    if op == "sub":
        return _guard(a - b)
    if op == "mul":
        return _guard(a * b)
    if op == "div":
        ok = np.abs(b) > PROTECT
        return _guard(np.where(ok, a / np.where(ok, b, 1.0), 1.0))
    if op == "min":
        return np.minimum(a, b)
    if op == "max":
        return np.maximum(a, b)
    raise ExprError(f"unknown binary op {op!r}")


def _eval(node, cols):
    # constants stay scalar and broadcast against the state columns
    if isinstance(node, Constant):
        return node.value
    if isinstance(node, Variable):
        return cols[node.index]
    if isinstance(node, Unary):
        return _apply_unary(node.op, _eval(node.child, cols))
    return _apply_binary(node.op, _eval(node.left, cols), _eval(node.right, cols))


def evaluate_columns(expr: Expr, cols: np.ndarray) -> np.ndarray:
    """Evaluate on a (d, n) array holding one state variable per row.

    No dimension check; :func:`evaluate` is the checked entry point.
    """
    with np.errstate(all="ignore"):
        out = _eval(expr, cols)
    if np.ndim(out) == 0:
        return np.full(cols.shape[1], float(out))
    return out


def evaluate(expr: Expr, state) -> float | np.ndarray:
    """Evaluate ``expr`` with protected semantics.

    A 1-D ``state`` gives a float; a 2-D array of states (one per row) gives
    one value per row.

    Raises:
      ExprError: if the tree references a variable the state does not have.
    """
    X = np.asarray(state, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if expr.max_var >= X.shape[1]:
        raise ExprError(
            f"expression uses s{expr.max_var} but state has dimension {X.shape[1]}"
        )
    out = evaluate_columns(expr, np.ascontiguousarray(X.T))
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# structure


def nodes(expr: Expr) -> Iterator[Expr]:
    """Pre-order traversal."""
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def subtree(expr: Expr, index: int) -> Expr:
    """Return the subtree rooted at pre-order position ``index``."""
    node = expr
    while index:
        index -= 1
        for child in node.children:
            if index < child.length:
                node = child
                break
            index -= child.length
    return node


def replace_subtree(expr: Expr, index: int, new: Expr) -> Expr:
    """Return a copy of ``expr`` with the pre-order node ``index`` replaced."""
    if index == 0:
        return new
    offset = 1
    if isinstance(expr, Unary):
        return Unary(expr.op, replace_subtree(expr.child, index - offset, new))
    if isinstance(expr, Binary):
        if index - offset < expr.left.length:
            return Binary(expr.op, replace_subtree(expr.left, index - offset, new), expr.right)
        offset += expr.left.length
        return Binary(expr.op, expr.left, replace_subtree(expr.right, index - offset, new))
    raise IndexError("node index out of range")


def substitute(expr: Expr, index: int, value: float) -> Expr:
    """Replace every ``s<index>`` with the constant ``value``."""
    if isinstance(expr, Variable):
        return Constant(value) if expr.index == index else expr
    if isinstance(expr, Unary):
        return Unary(expr.op, substitute(expr.child, index, value))
    if isinstance(expr, Binary):
        return Binary(expr.op, substitute(expr.left, index, value), substitute(expr.right, index, value))
    return expr


def depth(expr: Expr) -> int:
    return expr.depth


def length(expr: Expr) -> int:
    return expr.length


def variables(expr: Expr) -> set[int]:
    return {n.index for n in nodes(expr) if isinstance(n, Variable)}


# ---------------------------------------------------------------------------
# random generation


def random_terminal(rng: np.random.Generator, basis: BasisSet, d: int) -> Expr:
    k = rng.integers(d + 1)
    if k < d:
        return Variable(int(k))
    lo, hi = basis.const_range
    return Constant(float(rng.uniform(lo, hi)))


def random_tree(
    rng: np.random.Generator,
    basis: BasisSet,
    d: int,
    depth_range: tuple[int, int],
    method: str = "grow",
) -> Expr:
    """Draw a random tree with depth inside ``depth_range``.

    ``full`` builds every branch out to the sampled depth; ``grow`` picks
    uniformly among functions and terminals at each node and may stop early.
    """
    lo, hi = depth_range
    target = int(rng.integers(lo, hi + 1))
    funcs = basis.binary + basis.unary
    n_terms = d + 1

    def build(level: int) -> Expr:
        if level >= target:
            return random_terminal(rng, basis, d)
        if method == "full":
            pick = int(rng.integers(len(funcs)))
        else:
            pick = int(rng.integers(len(funcs) + n_terms))
            if pick >= len(funcs):
                return random_terminal(rng, basis, d)
        op = funcs[pick]
        if op in BINARY_OPS:
            left = build(level + 1)
            return Binary(op, left, build(level + 1))
        return Unary(op, build(level + 1))

    return build(1)


def ramped_half_and_half(
    rng: np.random.Generator, basis: BasisSet, d: int, depth_range: tuple[int, int], n: int
) -> list[Expr]:
    return [
        random_tree(rng, basis, d, depth_range, "full" if i % 2 else "grow")
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# text format


def format_constant(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def to_string(expr: Expr) -> str:
    """Fully parenthesised infix text, e.g. ``((0.52 - (2 * s2)) - s3)``."""
    if isinstance(expr, Constant):
        return format_constant(expr.value)
    if isinstance(expr, Variable):
        return f"s{expr.index}"
    if isinstance(expr, Unary):
        return f"{expr.op}({to_string(expr.child)})"
    if expr.op in _INFIX:
        return f"({to_string(expr.left)} {_INFIX[expr.op]} {to_string(expr.right)})"
    return f"{expr.op}({to_string(expr.left)}, {to_string(expr.right)})"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<var>s\d+)\b|(?P<name>[A-Za-z_]\w*)|(?P<sym>[-+*/(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


@dataclass
class _Parser:
    tokens: list
    d: int | None
    i: int = field(default=0)

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = _FROM_INFIX[self.take()[1]]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = _FROM_INFIX[self.take()[1]]
            node = Binary(op, node, self.factor())
        return node

    def factor(self):
        kind, text, pos = self.peek()
        if text == "-":
            self.take()
            nxt = self.peek()
            if nxt[0] == "num" and nxt[2] == pos + 1:
                self.take()
                return Constant(-float(nxt[1]))
            return Unary("neg", self.factor())
        if text == "+":
            self.take()
            return self.factor()
        if kind == "num":
            self.take()
            return Constant(float(text))
        if kind == "var":
            self.take()
            index = int(text[1:])
            if self.d is not None and index >= self.d:
                raise ExprError(f"variable {text} out of range for dimension {self.d}")
            return Variable(index)
        if kind == "name":
            self.take()
            if text in UNARY_OPS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Unary(text, arg)
            if text in BINARY_OPS:
                self.take("(")
                a = self.expr()
                self.take(",")
                b = self.expr()
                self.take(")")
                return Binary(text, a, b)
            raise ParseError(f"unknown function {text!r}", pos)
        if text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        raise ParseError(f"unexpected token {text or 'end of input'!r}", pos)


def parse_expr(text: str, d: int | None = None) -> Expr:
    """Parse the infix grammar written by :func:`to_string`.

    Usual precedence applies, so hand-written forms such as
    ``0.52 - 2*s2 - 0.595*s3`` are accepted too. When ``d`` is given, any
    ``sK`` with ``K >= d`` raises :class:`ExprError`.
    """
    parser = _Parser(_tokenize(text), d)
    node = parser.expr()
    kind, tok, pos = parser.peek()
    if kind != "end":
        raise ParseError(f"trailing input {tok!r}", pos)
    return node
