import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnn2prog.expr import Names, evaluate, from_rpn, to_source
from rnn2prog.symreg import (RegressionProblem, boolean_dnf, brute_force_rpn, exact_on,
                             fit_linear_integer, regress, relevant_variables, symmetric_bitsum,
                             templates)


def bit_problem(fn, names):
    rows = list(itertools.product((0, 1), repeat=len(names)))
    X = np.array(rows)
    y = np.array([fn(*r) for r in rows])
    return RegressionProblem(X, y, tuple(names), ("bit",) * len(names), out_kind="bit")


def grid_problem(fn, lo=-5, hi=5):
    X = np.array(list(itertools.product(range(lo, hi + 1), repeat=2)))
    y = np.array([fn(a, b) for a, b in X])
    return RegressionProblem(X, y, ("a", "b"))


def motzkin(n):
    m = [1, 1]
    for k in range(2, n + 1):
        m.append(m[k - 1] + sum(m[i] * m[k - 2 - i] for i in range(k - 1)))
    return m[n]


def test_template_counts_are_motzkin_numbers():
    # unary-binary trees with n nodes, independently counted by recurrence
    assert [len(templates(n)) for n in range(1, 9)] == [motzkin(n - 1) for n in range(1, 9)]
    assert set(templates(3)) == {"011", "002"}


def test_table_rejects_inconsistent_rows():
    with pytest.raises(ValueError):
        RegressionProblem(np.array([[0], [0]]), np.array([1, 2]), ("a",))


def test_linear_integer_fit():
    p = grid_problem(lambda a, b: 3 * a - b + 2)
    fit = fit_linear_integer(p)
    assert fit is not None and exact_on(fit.expr, p)
    assert fit_linear_integer(grid_problem(lambda a, b: a * b)) is None


def test_carry_regresses_to_threshold_of_sum():
    p = bit_problem(lambda b, c, d: int(b + c + d > 1), "bcd")
    fit = regress(p)
    assert fit.verified
    names = Names(("a", "b", "c", "d"), frozenset("cd"), frozenset("abcd"))
    assert to_source(fit.expr, names) == "b+c+d>1"


def test_xor_regresses_to_parity():
    p = bit_problem(lambda b, c, d: (b + c + d) % 2, "bcd")
    fit = regress(p)
    names = Names(("a", "b", "c", "d"), frozenset("cd"), frozenset("abcd"))
    assert to_source(fit.expr, names) == "b ^ c ^ d"


def test_dnf_handles_asymmetric_functions():
    p = bit_problem(lambda a, b, c: int(a and not b) | int(c and b), "abc")
    fit = boolean_dnf(p)
    assert fit is not None and exact_on(fit.expr, p)
    assert symmetric_bitsum(p) is None


def test_dnf_uses_unobserved_rows_as_dont_cares():
    X = np.array([[0, 0], [1, 1]])
    p = RegressionProblem(X, np.array([0, 1]), ("a", "b"), ("bit", "bit"), out_kind="bit")
    fit = boolean_dnf(p)
    assert fit is not None and exact_on(fit.expr, p) and fit.notes


def test_relevant_variables_ignores_dead_inputs():
    p = bit_problem(lambda a, b, c: a ^ c, "abc")
    assert relevant_variables(p) == [0, 2]


def test_constant_table():
    p = bit_problem(lambda a, b: 1, "ab")
    fit = regress(p)
    assert fit.method == "constant" and evaluate(fit.expr, {}) == 1


def test_brute_force_finds_known_forms():
    for fn, expect in [(lambda a, b: abs(a - b), "abs(a-b)"),
                       (lambda a, b: (a + b) % 3, "(a+b)%3"),
                       (lambda a, b: a * b + 1, None)]:
        p = grid_problem(fn)
        fit = brute_force_rpn(p, max_len=6)
        assert fit.verified and exact_on(fit.expr, p)
        if expect:
            assert to_source(fit.expr, Names(("a", "b"))) == expect


def test_budget_exhaustion_falls_back_unverified():
    p = grid_problem(lambda a, b: a * a * b - 3 * b * b + a)
    fit = brute_force_rpn(p, max_len=9, budget=10 ** 4)
    assert not fit.verified and fit.method == "fallback"


def test_regress_prefers_shortest_rendering():
    p = grid_problem(lambda a, b: a - b)
    fit = regress(p)
    assert to_source(fit.expr, Names(("a", "b"))) == "a-b"


rpn_targets = st.sampled_from([t for n in range(1, 6) for t in templates(n)])


@given(rpn_targets, st.data())
def test_brute_force_recovers_random_targets(tpl, data):
    syms = []
    for s in tpl:
        if s == "0":
            syms.append(data.draw(st.sampled_from(["a", "b", "0", "1", "2", "3"])))
        elif s == "1":
            syms.append(data.draw(st.sampled_from(list("><~HDA"))))
        else:
            syms.append(data.draw(st.sampled_from(list("+*-%"))))
    target = from_rpn("".join(syms))
    X = np.array(list(itertools.product(range(-5, 6), repeat=2)))
    try:
        y = evaluate(target, {"a": X[:, 0], "b": X[:, 1]})
    except ZeroDivisionError:
        return
    p = RegressionProblem(X, np.broadcast_to(y, (len(X),)).copy(), ("a", "b"))
    fit = brute_force_rpn(p, max_len=5)
    assert fit.verified and exact_on(fit.expr, p)
