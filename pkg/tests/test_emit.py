import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_program
from rnn2prog.emit import (ProgramError, build_program, emit_text, ripple_adder_program, interpret,
                           parse_program, program_names, run_text, variable_names, verify)
from rnn2prog.expr import Const, Var
from rnn2prog.tasks import generate_dataset, get_task, oracle_batch

ADDER_TEXT = """def f(s,t):
    a = 0;b = 0;
    ys = []
    for i in range(10):
        c = s[i]; d = t[i];
        next_a = b ^ c ^ d
        next_b = b+c+d>1
        a = next_a;b = next_b;
        y = a
        ys.append(y)
    return ys
"""


def outcome(fn):
    try:
        return np.asarray(fn(), dtype=object).tolist()
    except (ProgramError, ZeroDivisionError):
        return "error"


def test_adder_text():
    assert emit_text(ripple_adder_program()) == ADDER_TEXT


def test_adder_matches_long_addition():
    task = get_task("Binary_Addition")
    data = generate_dataset(task, 4096, 0)
    assert np.array_equal(interpret(ripple_adder_program(), data.inputs), data.targets)


def test_variable_names_skip_reserved_letters():
    names = variable_names(30)
    assert names[:6] == ["a", "b", "c", "d", "e", "g"]
    assert not set(names) & set("fistxy")
    assert len(set(names)) == 30
    assert program_names(2, 1) == (["a", "b"], ["x"])
    assert program_names(2, 2) == (["a", "b"], ["c", "d"])


@given(st.integers(0, 10 ** 6), st.booleans())
def test_parse_round_trip(seed, bits):
    prog, x = random_program(np.random.default_rng(seed), bits)
    # parsing canonicalises linear parts, after which the text is a fixpoint
    once = parse_program(emit_text(prog))
    text = emit_text(once)
    assert emit_text(parse_program(text)) == text
    assert outcome(lambda: interpret(once, x)) == outcome(lambda: interpret(prog, x))


@given(st.integers(0, 10 ** 6), st.booleans())
def test_interpreter_matches_host_execution(seed, bits):
    prog, x = random_program(np.random.default_rng(seed), bits)
    text = emit_text(prog)
    assert outcome(lambda: interpret(prog, x)) == outcome(lambda: run_text(text, x))


def test_big_values_fall_back_to_exact_integers():
    prog = build_program([Var("a") * Var("a") * Const(3) + Var("x")], Var("a"), [2], 8, 1)
    x = np.ones((1, 1, 8), dtype=np.int64)
    want = run_text(emit_text(prog), x)
    assert interpret(prog, x).tolist() == want
    assert want[0][-1] > 2 ** 63


def test_program_errors():
    with pytest.raises(ProgramError):
        build_program([Var("zz")], Var("a"), [0], 5, 1)
    with pytest.raises(ProgramError):
        build_program([None], Var("a"), [0], 5, 1)
    prog = build_program([Var("a")], Var("a"), [0], 5, 1)
    with pytest.raises(ProgramError):
        interpret(prog, np.zeros((1, 2, 5)))
    with pytest.raises(ProgramError):
        parse_program("x = 1\n")


def test_verify_counts_exact_hits():
    task = get_task("Sum_All")
    good = build_program([Var("a") + Var("x")], Var("a"), [0], task.seq_len, 1)
    res = verify(good, task, 1000, 3)
    assert res.solved and res.accuracy == 1.0
    bad = build_program([Var("x")], Var("a"), [0], task.seq_len, 1)
    res = verify(bad, task, 1000, 3)
    data = generate_dataset(task, 1000, 3)
    want = float(np.mean(interpret(bad, data.inputs) == oracle_batch(task, data.inputs)))
    assert not res.solved and res.accuracy == pytest.approx(want)
