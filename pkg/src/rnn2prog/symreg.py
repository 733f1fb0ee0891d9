"""Symbolic regression of integer lookup tables.

Four strategies are tried and the shortest exact expression (by rendered
source length) wins:

* integer linear regression with rounded coefficients,
* disjunctive normal form for bit-valued tables,
* a bit-sum reduction for symmetric Boolean functions,
* brute-force enumeration of reverse-polish templates.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .expr import (UNARY_OPS, Binary, Const, Expr, Linear, Names, Unary, Var, evaluate,
                   source_length, substitute, to_source)

log = logging.getLogger(__name__)

DEFAULT_CONSTANTS = (0, 1, 2, 3)
# fixed enumeration order of the binary operators
_BIN = ("+", "*", "-", "%")


@dataclass
class RegressionProblem:
    """Rows of a function table: ``X[i] -> y[i]`` over named integer variables."""

    X: np.ndarray  # (rows, k) int64
    y: np.ndarray  # (rows,) int64
    names: tuple[str, ...]
    kinds: tuple[str, ...] = ()  # "bit" | "int" per variable
    inputs: frozenset = frozenset()
    out_kind: str = "int"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int64).reshape(len(self.y), len(self.names))
        self.y = np.asarray(self.y, dtype=np.int64)
        self.names = tuple(self.names)
        if not self.kinds:
            self.kinds = tuple("int" for _ in self.names)
        # deduplicate and sort rows; refuse non-functional tables
        if len(self.y):
            rows = np.unique(np.column_stack([self.X, self.y]), axis=0)
            X, y = rows[:, :-1], rows[:, -1]
            _, first, counts = np.unique(X, axis=0, return_index=True, return_counts=True)
            if np.any(counts > 1):
                raise ValueError("inconsistent table: one input row maps to several outputs")
            self.X, self.y = X, y

    @classmethod
    def from_rows(cls, rows, names, **kw) -> "RegressionProblem":
        rows = list(rows)
        X = np.array([r[0] for r in rows], dtype=np.int64).reshape(len(rows), len(names))
        y = np.array([r[1] for r in rows], dtype=np.int64)
        return cls(X, y, tuple(names), **kw)

    @property
    def all_bits(self) -> bool:
        return (self.out_kind == "bit" or bool(np.all((self.y == 0) | (self.y == 1)))) and all(
            k == "bit" for k in self.kinds)

    def env(self, X=None) -> dict:
        X = self.X if X is None else X
        return {n: X[:, i] for i, n in enumerate(self.names)}

    def render_names(self) -> Names:
        bits = frozenset(n for n, k in zip(self.names, self.kinds) if k == "bit")
        return Names(self.names, frozenset(self.inputs), bits)


@dataclass
class Fit:
    expr: Expr
    method: str
    verified: bool = True
    notes: list = field(default_factory=list)

    def source(self, names: Names | None = None) -> str:
        return to_source(self.expr, names)


def exact_on(expr: Expr, problem: RegressionProblem) -> bool:
    try:
        with np.errstate(all="ignore"):
            got = evaluate(expr, problem.env())
    except ZeroDivisionError:
        return False
    return bool(np.all(np.broadcast_to(got, problem.y.shape) == problem.y))


# ---------------------------------------------------------------------------
# linear


def fit_linear_integer(problem: RegressionProblem) -> Fit | None:
    if len(problem.y) == 0:
        return None
    A = np.column_stack([problem.X.astype(float), np.ones(len(problem.y))])
    coef, *_ = np.linalg.lstsq(A, problem.y.astype(float), rcond=None)
    ints = np.rint(coef).astype(np.int64)
    terms = tuple((n, int(c)) for n, c in zip(problem.names, ints[:-1]) if c != 0)
    expr = Linear(terms, int(ints[-1]))
    if not exact_on(expr, problem):
        return None
    return Fit(expr, "linear")


# ---------------------------------------------------------------------------
# Boolean forms


def _literal(name: str, positive: bool) -> Expr:
    return Var(name) if positive else Binary("-", Const(1), Var(name))


def _product(factors: list[Expr]) -> Expr:
    if not factors:
        return Const(1)
    out = factors[0]
    for f in factors[1:]:
        out = Binary("*", out, f)
    return out


def boolean_dnf(problem: RegressionProblem) -> Fit | None:
    """Minimised DNF; unobserved input rows are treated as don't-cares.

    Conjunctions are products of literals (``1-v`` for negation).  When the
    terms are pairwise disjoint they are summed, otherwise the sum is
    thresholded with ``>0``.
    """
    from sympy import And, Not, Or, symbols
    from sympy.logic import SOPform

    if not problem.all_bits:
        return None
    k = len(problem.names)
    observed = {tuple(int(v) for v in row): int(y) for row, y in zip(problem.X, problem.y)}
    ones = [list(r) for r, y in observed.items() if y == 1]
    fit_notes = []
    if not ones:
        return Fit(Const(0), "dnf")
    if len(observed) == 2 ** k and len(ones) == 2 ** k:
        return Fit(Const(1), "dnf")
    dont = [list(r) for r in itertools.product((0, 1), repeat=k) if r not in observed]
    if dont:
        fit_notes.append(f"incomplete table: {len(dont)} unobserved rows used as don't-cares")
    syms = symbols(" ".join(f"v{i}" for i in range(k)) + " _pad")[:k]
    sop = SOPform(list(syms), ones, dont)
    if sop is True or sop == True:  # noqa: E712 - sympy true
        return Fit(Const(1), "dnf", notes=fit_notes)
    terms = sop.args if isinstance(sop, Or) else (sop,)
    cubes = []
    for t in terms:
        lits = t.args if isinstance(t, And) else (t,)
        cube = {}
        for lit in lits:
            if isinstance(lit, Not):
                cube[syms.index(lit.args[0])] = False
            else:
                cube[syms.index(lit)] = True
        cubes.append(cube)
    cubes.sort(key=lambda c: sorted(c.items()))
    products = [_product([_literal(problem.names[i], pos) for i, pos in sorted(c.items())])
                for c in cubes]
    total = products[0]
    for p in products[1:]:
        total = Binary("+", total, p)
    disjoint = all(any(a.get(i, not v) != v for i, v in b.items())
                   for a, b in itertools.combinations(cubes, 2))
    expr = total if disjoint or len(products) == 1 else Unary("H", total)
    if not exact_on(expr, problem):
        return None
    return Fit(expr, "dnf", notes=fit_notes)


def relevant_variables(problem: RegressionProblem) -> list[int]:
    """Indices of variables the observed table actually depends on."""
    keep = []
    for i in range(len(problem.names)):
        others = np.delete(problem.X, i, axis=1)
        if others.shape[1] == 0:
            varies = len(np.unique(problem.y)) > 1
        else:
            _, inv = np.unique(others, axis=0, return_inverse=True)
            inv = inv.ravel()
            lo = np.full(inv.max() + 1, np.iinfo(np.int64).max)
            hi = np.full(inv.max() + 1, np.iinfo(np.int64).min)
            np.minimum.at(lo, inv, problem.y)
            np.maximum.at(hi, inv, problem.y)
            varies = bool(np.any(lo != hi))
        if varies:
            keep.append(i)
    return keep


def symmetric_bitsum(problem: RegressionProblem, constants=DEFAULT_CONSTANTS,
                     max_len: int = 6) -> Fit | None:
    """Express a permutation-invariant bit function through its bit sum."""
    if not problem.all_bits:
        return None
    rel = relevant_variables(problem)
    if not rel:
        return Fit(Const(int(problem.y[0])), "bitsum")
    s = problem.X[:, rel].sum(axis=1)
    table: dict[int, int] = {}
    for sv, yv in zip(s.tolist(), problem.y.tolist()):
        if table.setdefault(sv, yv) != yv:
            return None
    sub = RegressionProblem(np.array(list(table), dtype=np.int64)[:, None],
                            np.array(list(table.values()), dtype=np.int64), ("s",))
    inner = fit_linear_integer(sub)
    if inner is None:
        inner = brute_force_rpn(sub, max_len=max_len, constants=constants)
        if not inner.verified:
            return None
    bitsum = Linear(tuple((problem.names[i], 1) for i in rel), 0)
    expr = substitute(inner.expr, {"s": bitsum})
    if not exact_on(expr, problem):
        return None
    return Fit(expr, "bitsum")


# ---------------------------------------------------------------------------
# brute force over RPN templates


@lru_cache(maxsize=None)
def templates(length: int) -> tuple[str, ...]:
    """All syntactically valid type strings of exactly ``length`` symbols."""
    out = []
    for t in itertools.product("012", repeat=length):
        depth = 0
        for sym in t:
            if sym == "0":
                depth += 1
            elif sym == "1":
                if depth < 1:
                    break
            elif depth < 2:
                break
            else:
                depth -= 1
        else:
            if depth == 1:
                out.append("".join(t))
    return tuple(out)


def _unary_all(v: np.ndarray) -> np.ndarray:
    """(F, R) -> (F, 6, R) in UNARY_OPS order."""
    return np.stack([v + 1, v - 1, -v, (v > 0).astype(np.int64),
                     (v == 0).astype(np.int64), np.abs(v)], axis=1)


def _binary_all(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(F, R) x (F, R) -> values (F, 4, R) and validity (F, 4) in ``_BIN`` order."""
    safe = np.where(b == 0, 1, b)
    with np.errstate(over="ignore"):
        vals = np.stack([a + b, a * b, a - b, np.mod(a, safe)], axis=1)
    valid = np.ones(vals.shape[:2], dtype=bool)
    valid[:, 3] = ~np.any(b == 0, axis=1)
    return vals, valid


_RADIX = {"0": None, "1": len(UNARY_OPS), "2": len(_BIN)}


class _Budget(Exception):
    pass


def _eval_suffix(stack, valid, suffix, leaves):
    """Vectorised evaluation of every filling of ``suffix`` on top of a stack."""
    F = 1
    stack = [s[None, :] for s in stack]
    valid = np.array([valid])
    n0 = leaves.shape[0]
    for sym in suffix:
        if sym == "0":
            stack = [np.repeat(s, n0, axis=0) for s in stack]
            valid = np.repeat(valid, n0)
            stack.append(np.tile(leaves, (F, 1)))
            F *= n0
        elif sym == "1":
            top = _unary_all(stack.pop()).reshape(F * 6, -1)
            stack = [np.repeat(s, 6, axis=0) for s in stack] + [top]
            valid = np.repeat(valid, 6)
            F *= 6
        else:
            b, a = stack.pop(), stack.pop()
            vals, ok = _binary_all(a, b)
            stack = [np.repeat(s, 4, axis=0) for s in stack] + [vals.reshape(F * 4, -1)]
            valid = np.repeat(valid, 4) & ok.reshape(-1)
            F *= 4
    return stack[0], valid


def _decode(prefix_choice, suffix, index, n0):
    """Filling indices for the suffix positions from a flat vectorised index."""
    radices = [n0 if s == "0" else _RADIX[s] for s in suffix]
    digits = []
    for r in reversed(radices):
        digits.append(index % r)
        index //= r
    return list(prefix_choice) + digits[::-1]


def brute_force_rpn(problem: RegressionProblem, max_len: int = 6,
                    constants: Sequence[int] = DEFAULT_CONSTANTS, row_cap: int = 100,
                    budget: int = 10 ** 7, chunk: int = 20000, min_len: int = 1,
                    stop_len: int | None = None) -> Fit:
    """First exact expression in (template length, template, filling) order.

    Fillings put variables (problem order) before constants, unary operators
    in ``> < ~ H D A`` order and binary operators in ``+ * - %`` order.
    Candidates found on the first ``row_cap`` rows are re-checked on the
    whole table.  ``budget`` caps the fillings tried per template; when the
    search runs out, the bare first variable is returned unverified.
    """
    names = problem.names
    symbols_0 = [Var(n) for n in names] + [Const(c) for c in constants]
    R = min(row_cap, len(problem.y))
    X, y = problem.X[:R], problem.y[:R]
    leaves = np.vstack([X.T, np.tile(np.asarray(constants, dtype=np.int64)[:, None], (1, R))]) \
        if len(constants) else X.T.copy()
    leaves = leaves.astype(np.int64)
    n0 = leaves.shape[0]
    top = max_len if stop_len is None else min(max_len, stop_len)

    def build(tpl, choice) -> Expr:
        stack: list[Expr] = []
        for sym, c in zip(tpl, choice):
            if sym == "0":
                stack.append(symbols_0[c])
            elif sym == "1":
                stack.append(Unary(UNARY_OPS[c], stack.pop()))
            else:
                r = stack.pop()
                stack.append(Binary(_BIN[c], stack.pop(), r))
        return stack[0]

    for length in range(min_len, top + 1):
        for tpl in templates(length):
            radices = [n0 if s == "0" else _RADIX[s] for s in tpl]
            total = int(np.prod(radices))
            if total > budget:
                log.info("template %s exceeds budget (%d fillings)", tpl, total)
                return Fit(Var(names[0] if names else "a"), "fallback", verified=False,
                           notes=["brute-force budget exhausted"])
            # split point: vectorise the longest suffix that fits in a chunk
            split = len(tpl)
            while split > 0 and int(np.prod(radices[split - 1:])) <= chunk:
                split -= 1
            prefix, suffix = tpl[:split], tpl[split:]
            for choice in itertools.product(*[range(r) for r in radices[:split]]):
                stack: list[np.ndarray] = []
                ok = True
                for sym, c in zip(prefix, choice):
                    if sym == "0":
                        stack.append(leaves[c])
                    elif sym == "1":
                        stack.append(_unary_all(stack.pop()[None])[0, c])
                    else:
                        b = stack.pop()
                        a = stack.pop()
                        vals, valid = _binary_all(a[None], b[None])
                        ok &= bool(valid[0, c])
                        stack.append(vals[0, c])
                if not ok:
                    continue
                vals, valid = _eval_suffix(stack, ok, suffix, leaves)
                hits = np.flatnonzero(valid & np.all(vals == y, axis=1))
                for h in hits:
                    expr = build(tpl, _decode(choice, suffix, int(h), n0))
                    if R == len(problem.y) or exact_on(expr, problem):
                        return Fit(expr, "brute")
    return Fit(Var(names[0] if names else "a"), "fallback", verified=False,
               notes=[f"no expression up to {top} symbols"])


# ---------------------------------------------------------------------------
# driver


def regress(problem: RegressionProblem, max_len: int = 6,
            constants: Sequence[int] = DEFAULT_CONSTANTS, budget: int = 10 ** 7) -> Fit:
    """Shortest exact expression among all applicable strategies."""
    if len(problem.y) == 0:
        return Fit(Const(0), "empty", verified=False, notes=["empty table"])
    names = problem.render_names()
    if np.all(problem.y == problem.y[0]):
        return Fit(Const(int(problem.y[0])), "constant")
    cands: list[Fit] = []
    for method in (fit_linear_integer, symmetric_bitsum, boolean_dnf):
        fit = method(problem)
        if fit is not None and fit.verified:
            cands.append(fit)
    best_len = min((source_length(c.expr, names) for c in cands), default=None)
    # a template of m symbols renders to at least about 2m/3 characters
    stop = max_len
    if best_len is not None:
        stop = min(max_len, (3 * best_len - 1) // 2)
    if stop >= 1:
        bf = brute_force_rpn(problem, max_len=max_len, constants=constants, budget=budget,
                             stop_len=stop)
        if bf.verified or not cands:
            cands.append(bf)
    best = min(cands, key=lambda c: source_length(c.expr, names))
    return best
