"""Integer expression trees.

Nodes are immutable and hashable.  Unary operators use single-character
symbols: ``>`` increment, ``<`` decrement, ``~`` negate, ``H`` heaviside
(1 if x > 0), ``D`` dirac (1 if x == 0), ``A`` absolute value.  Binary
operators are ``+ - * %``; ``%`` takes the sign of the divisor.

Rendering to source text goes through :func:`to_source`, which needs a
:class:`Names` context telling it which variables are program inputs and
which are known to hold bits (for the ``^`` rendering of bit parity).
"""

from __future__ import annotations

import ast as pyast
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

UNARY_OPS = (">", "<", "~", "H", "D", "A")
BINARY_OPS = ("+", "*", "-", "%")


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Binary("+", self, _wrap(other))

    def __sub__(self, other):
        return Binary("-", self, _wrap(other))

    def __mul__(self, other):
        return Binary("*", self, _wrap(other))

    def __mod__(self, other):
        return Binary("%", self, _wrap(other))


def _wrap(v) -> "Expr":
    return v if isinstance(v, Expr) else Const(int(v))


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    value: int


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Linear(Expr):
    """sum(coef * var) + const, with integer coefficients."""

    terms: tuple[tuple[str, int], ...]
    const: int = 0


ExprNode = Union[Var, Const, Unary, Binary, Linear]


def heaviside(e: Expr) -> Expr:
    return Unary("H", e)


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, Linear):
        return {n for n, c in e.terms if c}
    if isinstance(e, Unary):
        return variables(e.arg)
    return variables(e.left) | variables(e.right)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Linear):
        if not any(n in mapping for n, _ in e.terms):
            return e
        out: Expr | None = None
        for n, c in e.terms:
            term = mapping.get(n, Var(n))
            term = term if c == 1 else Binary("*", Const(c), term)
            out = term if out is None else Binary("+", out, term)
        return Binary("+", out, Const(e.const)) if e.const else out
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, mapping))
    return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


# ---------------------------------------------------------------------------
# evaluation


def apply_unary(op: str, v):
    if op == ">":
        return v + 1
    if op == "<":
        return v - 1
    if op == "~":
        return -v
    if op == "H":
        return (v > 0).astype(np.int64) if isinstance(v, np.ndarray) else int(v > 0)
    if op == "D":
        return (v == 0).astype(np.int64) if isinstance(v, np.ndarray) else int(v == 0)
    if op == "A":
        return abs(v)
    raise ValueError(f"unknown unary op {op!r}")


def apply_binary(op: str, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "%":
        if np.any(np.asarray(b) == 0):
            raise ZeroDivisionError("integer modulo by zero")
        return a % b
    raise ValueError(f"unknown binary op {op!r}")


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate on python ints or int64 arrays (broadcasting)."""
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Linear):
        total = e.const
        for n, c in e.terms:
            total = total + c * env[n]
        return total
    if isinstance(e, Unary):
        return apply_unary(e.op, evaluate(e.arg, env))
    return apply_binary(e.op, evaluate(e.left, env), evaluate(e.right, env))


# ---------------------------------------------------------------------------
# reverse polish notation


def to_rpn(e: Expr) -> str:
    """RPN string; constants outside 0-9 are written in brackets, e.g. ``[483]``."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return str(e.value) if 0 <= e.value <= 9 else f"[{e.value}]"
    if isinstance(e, Unary):
        return to_rpn(e.arg) + e.op
    if isinstance(e, Binary):
        return to_rpn(e.left) + to_rpn(e.right) + e.op
    return to_rpn(_linear_tree(e))


def _linear_tree(e: Linear) -> Expr:
    out: Expr | None = None
    for n, c in e.terms:
        if c == 0:
            continue
        term: Expr = Var(n)
        if c == -1:
            term = Unary("~", term)
        elif c != 1:
            term = Binary("*", term, Const(c))
        out = term if out is None else Binary("+", out, term)
    if out is None:
        return Const(e.const)
    if e.const in (1, -1):
        return Unary(">" if e.const == 1 else "<", out)
    return Binary("+", out, Const(e.const)) if e.const else out


def from_rpn(text: str) -> Expr:
    stack: list[Expr] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "[":
            j = text.index("]", i)
            stack.append(Const(int(text[i + 1:j])))
            i = j + 1
            continue
        if ch.isdigit():
            stack.append(Const(int(ch)))
        elif ch in UNARY_OPS:
            stack.append(Unary(ch, stack.pop()))
        elif ch in BINARY_OPS:
            r, l = stack.pop(), stack.pop()
            stack.append(Binary(ch, l, r))
        elif ch.isalpha() or ch == "_":
            stack.append(Var(ch))
        else:
            raise ValueError(f"bad RPN symbol {ch!r}")
        i += 1
    if len(stack) != 1:
        raise ValueError(f"RPN {text!r} does not reduce to one expression")
    return stack[0]


# ---------------------------------------------------------------------------
# linear folding


def as_linear(e: Expr) -> Linear | None:
    """Fold ``e`` to a :class:`Linear` if it is affine in its variables."""
    if isinstance(e, Linear):
        return e
    if isinstance(e, Var):
        return Linear(((e.name, 1),), 0)
    if isinstance(e, Const):
        return Linear((), e.value)
    if isinstance(e, Unary):
        inner = as_linear(e.arg) if e.op in "><~" else None
        if inner is None:
            return None
        if e.op == ">":
            return Linear(inner.terms, inner.const + 1)
        if e.op == "<":
            return Linear(inner.terms, inner.const - 1)
        return Linear(tuple((n, -c) for n, c in inner.terms), -inner.const)
    if e.op in "+-":
        l, r = as_linear(e.left), as_linear(e.right)
        if l is None or r is None:
            return None
        sign = 1 if e.op == "+" else -1
        coefs = dict(l.terms)
        for n, c in r.terms:
            coefs[n] = coefs.get(n, 0) + sign * c
        return Linear(tuple(coefs.items()), l.const + sign * r.const)
    if e.op == "*":
        l, r = as_linear(e.left), as_linear(e.right)
        if l is None or r is None:
            return None
        if not l.terms or not r.terms:
            k, other = (l.const, r) if not l.terms else (r.const, l)
            return Linear(tuple((n, k * c) for n, c in other.terms), k * other.const)
    return None


# ---------------------------------------------------------------------------
# source rendering


@dataclass(frozen=True)
class Names:
    """Rendering context: variable order, input names, bit-valued names."""

    order: tuple[str, ...] = ()
    inputs: frozenset = field(default_factory=frozenset)
    bits: frozenset = field(default_factory=frozenset)

    def rank(self, name: str):
        return (self.order.index(name), name) if name in self.order else (len(self.order), name)


_ATOM, _UNARY, _MUL, _ADD, _XOR, _CMP = 100, 90, 80, 70, 50, 40


def _signed(coef: int, name: str) -> str:
    mag = "" if abs(coef) == 1 else f"{abs(coef)}*"
    return ("+" if coef > 0 else "-") + mag + name


def _render_linear(lin: Linear, names: Names, explicit: bool) -> tuple[str, int]:
    # An explicit Linear node keeps the sign of a leading input term ("+x");
    # hidden terms always come first and never carry a leading "+".
    terms = sorted(((n, c) for n, c in lin.terms if c), key=lambda t: names.rank(t[0]))
    hidden = "".join(_signed(c, n) for n, c in terms if n not in names.inputs)
    inputs = "".join(_signed(c, n) for n, c in terms if n in names.inputs)
    if hidden.startswith("+"):
        hidden = hidden[1:]
    const = f"{lin.const:+d}" if lin.const else ""
    text = hidden + inputs + const
    if not explicit or hidden:
        text = text.lstrip("+") if text.startswith("+") else text
    if not text:
        return "0", _ATOM
    if not terms:
        return text.lstrip("+"), (_ATOM if lin.const >= 0 else _UNARY)
    if len(terms) == 1 and not const:
        if abs(terms[0][1]) != 1:
            return text, _MUL  # "2*a" and "-2*a" are products
        return text, (_ATOM if text.isidentifier() else _UNARY)
    return text, _ADD


def _paren(text: str, prec: int, need: int) -> str:
    return f"({text})" if prec < need else text


def _threshold(e: Expr) -> tuple[Expr, int]:
    """Split ``e`` into (core, k) with e == core - k."""
    lin = as_linear(e)
    if lin is not None and lin.terms:
        return Linear(lin.terms, 0), -lin.const
    if isinstance(e, Unary) and e.op in "<>":
        core, k = _threshold(e.arg)
        return core, k + (1 if e.op == "<" else -1)
    if isinstance(e, Binary) and isinstance(e.right, Const) and e.op in "+-":
        core, k = _threshold(e.left)
        return core, k + (e.right.value if e.op == "-" else -e.right.value)
    return e, 0


def _leftmost_explicit(e: Expr) -> bool:
    while True:
        if isinstance(e, Linear):
            return True
        if isinstance(e, Binary):
            e = e.left
        elif isinstance(e, Unary) and e.op in "<>":
            e = e.arg
        else:
            return False


def _render(e: Expr, names: Names) -> tuple[str, int]:
    if isinstance(e, Var):
        return e.name, _ATOM
    if isinstance(e, Const):
        return str(e.value), (_ATOM if e.value >= 0 else _UNARY)
    lin = as_linear(e)
    if lin is not None:
        merged = Linear(tuple(_merge(lin.terms)), lin.const)
        return _render_linear(merged, names, isinstance(e, Linear))
    if isinstance(e, Unary):
        if e.op == "A":
            return f"abs({_render(e.arg, names)[0]})", _ATOM
        if e.op == "H":
            core, k = _threshold(e.arg)
            if isinstance(core, Linear):
                text, prec = _render_linear(core, names, _leftmost_explicit(e.arg))
            else:
                text, prec = _render(core, names)
            return f"{_paren(text, prec, _XOR)}>{k}", _CMP
        if e.op == "D":
            text, prec = _render(e.arg, names)
            return f"{_paren(text, prec, _XOR)}==0", _CMP
        text, prec = _render(e.arg, names)
        if e.op == "~":
            return "-" + _paren(text, prec, _UNARY), _UNARY
        return _paren(text, prec, _ADD) + ("+1" if e.op == ">" else "-1"), _ADD
    assert isinstance(e, Binary)
    if e.op == "%" and isinstance(e.right, Const) and e.right.value == 2:
        left = as_linear(e.left)
        if (left is not None and left.const == 0 and len(left.terms) >= 2
                and all(c == 1 and n in names.bits for n, c in left.terms)):
            ordered = sorted((n for n, _ in left.terms), key=names.rank)
            return " ^ ".join(ordered), _XOR
    lt, lp = _render(e.left, names)
    rt, rp = _render(e.right, names)
    if e.op in "*%":
        return f"{_paren(lt, lp, _MUL)}{e.op}{_paren(rt, rp, _MUL + 1)}", _MUL
    return f"{_paren(lt, lp, _ADD)}{e.op}{_paren(rt, rp, _ADD + 1)}", _ADD


def _merge(terms):
    coefs: dict[str, int] = {}
    for n, c in terms:
        coefs[n] = coefs.get(n, 0) + c
    return [(n, c) for n, c in coefs.items() if c]


def to_source(e: Expr, names: Names | None = None) -> str:
    return _render(e, names or Names())[0]


def source_length(e: Expr, names: Names | None = None) -> int:
    return len(to_source(e, names))


# ---------------------------------------------------------------------------
# parsing of rendered source


def parse_source(text: str) -> Expr:
    return from_pyast(pyast.parse(text.strip(), mode="eval").body)


def from_pyast(node) -> Expr:
    if isinstance(node, pyast.Name):
        return Var(node.id)
    if isinstance(node, pyast.Constant) and isinstance(node.value, (int, bool)):
        return Const(int(node.value))
    if isinstance(node, pyast.UnaryOp):
        inner = from_pyast(node.operand)
        if isinstance(node.op, pyast.USub):
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Unary("~", inner)
        if isinstance(node.op, pyast.UAdd):
            lin = as_linear(inner)
            return lin if lin is not None else inner
    if isinstance(node, pyast.BinOp):
        l, r = from_pyast(node.left), from_pyast(node.right)
        ops = {pyast.Add: "+", pyast.Sub: "-", pyast.Mult: "*", pyast.Mod: "%"}
        for cls, sym in ops.items():
            if isinstance(node.op, cls):
                out = Binary(sym, l, r)
                if isinstance(l, Linear) and sym in "+-*":
                    return as_linear(out) or out
                return out
        if isinstance(node.op, pyast.BitXor):
            # bit parity; rebuild as (sum of operands) % 2
            return Binary("%", _flatten_xor(node), Const(2))
    if isinstance(node, pyast.Compare) and len(node.ops) == 1:
        l, r = from_pyast(node.left), from_pyast(node.comparators[0])
        diff = l if isinstance(r, Const) and r.value == 0 else Binary("-", l, r)
        if isinstance(node.ops[0], pyast.Gt):
            return Unary("H", diff)
        if isinstance(node.ops[0], pyast.Eq):
            return Unary("D", diff)
    if (isinstance(node, pyast.Call) and isinstance(node.func, pyast.Name)
            and node.func.id == "abs" and len(node.args) == 1):
        return Unary("A", from_pyast(node.args[0]))
    raise ValueError(f"unsupported syntax: {pyast.dump(node)}")


def _flatten_xor(node) -> Expr:
    if isinstance(node, pyast.BinOp) and isinstance(node.op, pyast.BitXor):
        return Binary("+", _flatten_xor(node.left), _flatten_xor(node.right))
    return from_pyast(node)
