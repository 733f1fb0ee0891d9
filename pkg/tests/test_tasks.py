import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnn2prog.tasks import (TaskInputError, generate_dataset, get_task, list_tasks, load_dataset,
                            oracle_batch, oracle_eval, save_dataset)


def test_catalogue_size_and_named_rows():
    tasks = list_tasks()
    assert len(tasks) == 62
    assert [t.id for t in tasks] == list(range(1, 63))
    t1 = tasks[0]
    assert (t1.name, t1.num_inputs, t1.element_kind) == ("Binary_Addition", 2, "bit")
    assert (tasks[23].name, tasks[23].num_inputs) == ("Current_Number", 1)
    assert (tasks[57].name, tasks[57].element_kind) == ("Dithering", "int")


def test_lookup_by_name_and_id():
    assert get_task("Sum_Last2") is get_task(18) is get_task("18")
    with pytest.raises(KeyError):
        get_task("No_Such_Task")
    with pytest.raises(KeyError):
        get_task(63)


def test_sequence_length_follows_arity():
    for t in list_tasks():
        assert t.seq_len == (10 if t.num_inputs == 2 else 20)


def test_div3_worked_example():
    task = get_task("Div_3").with_overrides(seq_len=7)
    assert oracle_eval(task, [1, 0, 0, 0, 0, 1, 1]) == [0, 0, 1, 0, 1, 1, 0]


def test_sum_last2_zero_input():
    task = get_task("Sum_Last2")
    assert oracle_eval(task, [0] * 20) == [0] * 20


def _newton_spring_by_hand(seq):
    x = v = 0
    out = []
    for inp in seq:
        force = inp - x
        v += force
        x += v
        out.append(x)
    return out


def test_newton_spring_matches_hand_simulation(rng):
    task = get_task("Newton_Spring")
    for _ in range(5):
        seq = rng.integers(-3, 4, size=20).tolist()
        assert oracle_eval(task, seq) == _newton_spring_by_hand(seq)


def test_binary_addition_is_long_addition(rng):
    task = get_task("Binary_Addition")
    x = rng.integers(0, 2, size=(200, 2, 10))
    y = oracle_batch(task, x)
    weights = 2 ** np.arange(10)  # least significant bit first
    a, b, s = x[:, 0] @ weights, x[:, 1] @ weights, y @ weights
    assert np.array_equal(s, (a + b) % 1024)


def test_invalid_inputs_are_rejected():
    task = get_task("Bitwise_Xor")
    with pytest.raises(TaskInputError):
        oracle_batch(task, np.zeros((1, 1, 10), dtype=int))  # wrong arity
    with pytest.raises(TaskInputError):
        oracle_batch(task, np.full((1, 2, 10), 2))  # out of range
    with pytest.raises(TaskInputError):
        oracle_batch(task, np.zeros((1, 2, 9), dtype=int))  # wrong length


def test_dataset_generation_is_deterministic():
    task = get_task("Bitwise_Xor")
    a, b = generate_dataset(task, 4096, 0), generate_dataset(task, 4096, 0)
    assert a.inputs.shape == (4096, 2, 10)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.targets, b.targets)
    assert np.array_equal(a.targets, a.inputs[:, 0] ^ a.inputs[:, 1])
    with pytest.raises(ValueError):
        generate_dataset(task, 0, 0)


def test_sum_all_against_prefix_sums():
    ds = generate_dataset(get_task("Sum_All"), 100, 7)
    for x, y in zip(ds.inputs[:, 0], ds.targets):
        running, expect = 0, []
        for v in x:
            running += int(v)
            expect.append(running)
        assert y.tolist() == expect


def test_dataset_file_round_trip(tmp_path):
    task = get_task("Binary_Addition")
    ds = generate_dataset(task, 50, 3)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.task_id == 1 and back.seed == 3
    assert np.array_equal(back.inputs, ds.inputs) and np.array_equal(back.targets, ds.targets)


@pytest.mark.parametrize("task", list_tasks(), ids=lambda t: t.name)
def test_every_oracle_is_total(task):
    ds = generate_dataset(task, 1000, 1)
    assert ds.targets.shape == (1000, task.seq_len)
    assert ds.targets.dtype == np.int64


@pytest.mark.parametrize("k", [3, 5, 7])
@given(st.lists(st.integers(0, 1), min_size=1, max_size=20))
def test_div_k_quotient_bits(k, bits):
    task = get_task(f"Div_{k}").with_overrides(seq_len=len(bits))
    out = oracle_eval(task, bits)
    n = int("".join(map(str, bits)), 2)
    q = int("".join(map(str, out)), 2)
    assert q * k <= n < q * k + k


@given(st.lists(st.integers(0, 15), min_size=20, max_size=20))
def test_dithering_error_stays_bounded(seq):
    out = oracle_eval(get_task("Dithering"), seq)
    err = np.cumsum(seq) - 15 * np.cumsum(out)
    assert np.all(np.abs(err) <= 15)
