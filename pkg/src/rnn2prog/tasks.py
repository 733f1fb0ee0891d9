"""Benchmark of 62 integer sequence-to-sequence tasks.

Each task maps one or two integer sequences of equal length to an output
sequence of the same length.  Oracles are vectorised over a batch axis:
``inputs`` has shape ``(batch, num_inputs, seq_len)`` and the oracle
returns ``(batch, seq_len)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "TaskSpec",
    "Dataset",
    "list_tasks",
    "get_task",
    "oracle_eval",
    "oracle_batch",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "TaskInputError",
]


class TaskInputError(ValueError):
    """Raised when inputs do not match a task's arity, length or range."""


@dataclass(frozen=True)
class TaskSpec:
    id: int
    name: str
    num_inputs: int
    element_kind: str  # "bit" or "int"
    element_range: tuple[int, int]
    seq_len: int
    oracle_id: str
    description: str = ""

    def with_overrides(self, **kw) -> "TaskSpec":
        if "element_range" in kw:
            kw["element_range"] = tuple(int(v) for v in kw["element_range"])
        return replace(self, **kw)


@dataclass
class Dataset:
    task_id: int
    inputs: np.ndarray  # (count, num_inputs, seq_len)
    targets: np.ndarray  # (count, seq_len)
    seed: int

    @property
    def count(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def seq_len(self) -> int:
        return int(self.inputs.shape[2])


# --------------------------------------------------------------------------
# oracles; every one takes (batch, k, L) int64 and returns (batch, L) int64


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    """x delayed by k steps along the last axis, zero-filled."""
    out = np.zeros_like(x)
    if k < x.shape[-1]:
        out[..., k:] = x[..., : x.shape[-1] - k]
    return out


def _base_add(base: int):
    def run(x):
        a, b = x[:, 0], x[:, 1]
        out = np.zeros_like(a)
        carry = np.zeros(a.shape[0], dtype=np.int64)
        for t in range(a.shape[1]):
            s = a[:, t] + b[:, t] + carry
            out[:, t] = s % base
            carry = s // base
        return out

    return run


def _parity_last(k: int):
    def run(x):
        x = x[:, 0]
        acc = np.zeros_like(x)
        for j in range(k):
            acc = acc + _shift(x, j)
        return acc % 2

    return run


def _sum_last(k: int):
    def run(x):
        x = x[:, 0]
        acc = np.zeros_like(x)
        for j in range(k):
            acc = acc + _shift(x, j)
        return acc

    return run


def _prev(k: int):
    return lambda x: _shift(x[:, 0], k)


def _majority(top: int):
    def run(x):
        x = x[:, 0]
        counts = np.zeros((x.shape[0], top + 1), dtype=np.int64)
        out = np.zeros_like(x)
        rows = np.arange(x.shape[0])
        for t in range(x.shape[1]):
            counts[rows, x[:, t]] += 1
            # argmax returns the smallest value among ties
            out[:, t] = np.argmax(counts, axis=1)
        return out

    return run


def _alternating(k: int):
    def run(x):
        x = x[:, 0]
        ok = np.ones_like(x)
        for j in range(k - 1):
            ok &= (_shift(x, j) != _shift(x, j + 1)).astype(np.int64)
        return ok

    return run


def _div(k: int):
    def run(x):
        x = x[:, 0]
        out = np.zeros_like(x)
        r = np.zeros(x.shape[0], dtype=np.int64)
        for t in range(x.shape[1]):
            r = 2 * r + x[:, t]
            q = (r >= k).astype(np.int64)
            out[:, t] = q
            r = r - k * q
        return out

    return run


def _add_mod(k: int):
    return lambda x: np.cumsum(x[:, 0], axis=1) % k


def _palindrome(x):
    x = x[:, 0]
    out = np.zeros_like(x)
    for t in range(x.shape[1]):
        pre = x[:, : t + 1]
        out[:, t] = np.all(pre == pre[:, ::-1], axis=1)
    return out


def _balanced(x):
    # bit 1 opens, bit 0 closes; once the depth goes negative it stays unbalanced
    x = x[:, 0]
    depth = np.zeros(x.shape[0], dtype=np.int64)
    broken = np.zeros(x.shape[0], dtype=bool)
    out = np.zeros_like(x)
    for t in range(x.shape[1]):
        depth = depth + 2 * x[:, t] - 1
        broken |= depth < 0
        out[:, t] = (~broken) & (depth == 0)
    return out


def _evens_counter(x):
    return np.cumsum((x[:, 0] % 2 == 0).astype(np.int64), axis=1)


def _perfect_square(x):
    x = x[:, 0]
    r = np.floor(np.sqrt(np.maximum(x, 0))).astype(np.int64)
    return ((x >= 0) & (r * r == x)).astype(np.int64)


def _dither(x):
    x = x[:, 0]
    err = np.zeros(x.shape[0], dtype=np.int64)
    out = np.zeros_like(x)
    for t in range(x.shape[1]):
        err = err + x[:, t]
        on = err >= 8
        out[:, t] = on
        err = err - 15 * on
    return out


def _newton(force: Callable[[np.ndarray, np.ndarray], np.ndarray]):
    def run(x):
        inp = x[:, 0]
        pos = np.zeros(inp.shape[0], dtype=np.int64)
        vel = np.zeros_like(pos)
        out = np.zeros_like(inp)
        for t in range(inp.shape[1]):
            vel = vel + force(inp[:, t], pos)
            pos = pos + vel
            out[:, t] = pos
        return out

    return run


def _newton_magnetic(x):
    i1, i2 = x[:, 0], x[:, 1]
    px = np.zeros(i1.shape[0], dtype=np.int64)
    py = np.zeros_like(px)
    vx = np.zeros_like(px)
    vy = np.zeros_like(px)
    out = np.zeros_like(i1)
    for t in range(i1.shape[1]):
        fx = i1[:, t] - vy
        fy = i2[:, t] + vx
        vx, vy = vx + fx, vy + fy
        px, py = px + vx, py + vy
        out[:, t] = px
    return out


_ORACLES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "base_add_2": _base_add(2),
    "xor": lambda x: x[:, 0] ^ x[:, 1],
    "or": lambda x: x[:, 0] | x[:, 1],
    "and": lambda x: x[:, 0] & x[:, 1],
    "not": lambda x: 1 - x[:, 0],
    "parity_all": lambda x: np.cumsum(x[:, 0], axis=1) % 2,
    "parity_zeros": lambda x: np.cumsum(1 - x[:, 0], axis=1) % 2,
    "evens_counter": _evens_counter,
    "sum_all": lambda x: np.cumsum(x[:, 0], axis=1),
    "prev_equals_current": lambda x: (x[:, 0] == _shift(x[:, 0], 1)).astype(np.int64),
    "diff_last2": lambda x: x[:, 0] - _shift(x[:, 0], 1),
    "abs_diff": lambda x: np.abs(x[:, 0] - _shift(x[:, 0], 1)),
    "abs_current": lambda x: np.abs(x[:, 0]),
    "diff_abs_values": lambda x: np.abs(x[:, 0]) - np.abs(_shift(x[:, 0], 1)),
    "min_seen": lambda x: np.minimum.accumulate(x[:, 0], axis=1),
    "max_seen": lambda x: np.maximum.accumulate(x[:, 0], axis=1),
    "evens_detector": lambda x: (x[:, 0] % 2 == 0).astype(np.int64),
    "perfect_square": _perfect_square,
    "palindrome": _palindrome,
    "balanced": _balanced,
    "count_mod2": lambda x: (np.arange(x.shape[2])[None, :] + 1 + 0 * x[:, 0]) % 2,
    "bit_dot_mod2": lambda x: np.cumsum(x[:, 0] * x[:, 1], axis=1) % 2,
    "dithering": _dither,
    "newton_freebody": _newton(lambda inp, pos: inp),
    "newton_gravity": _newton(lambda inp, pos: inp - 1),
    "newton_spring": _newton(lambda inp, pos: inp - pos),
    "newton_magnetic": _newton_magnetic,
}
for _k in range(3, 8):
    _ORACLES[f"base_add_{_k}"] = _base_add(_k)
for _k in range(2, 5):
    _ORACLES[f"parity_last{_k}"] = _parity_last(_k)
for _k in range(1, 8):
    _ORACLES[f"sum_last{_k}"] = _sum_last(_k)
for _k in range(1, 6):
    _ORACLES[f"prev{_k}"] = _prev(_k)
for _k in range(1, 4):
    _ORACLES[f"majority_{_k}"] = _majority(_k)
for _k in (3, 4):
    _ORACLES[f"alternating_last{_k}"] = _alternating(_k)
for _k in (3, 5, 7):
    _ORACLES[f"div_{_k}"] = _div(_k)
for _k in range(3, 9):
    _ORACLES[f"add_mod_{_k}"] = _add_mod(_k)


# (id, name, num_inputs, kind, oracle_id, range override, description)
_TABLE = [
    (1, "Binary_Addition", 2, "bit", "base_add_2", None, "Binary addition of two bit strings"),
    (2, "Base_3_Addition", 2, "int", "base_add_3", (0, 2), "Ternary addition of two digit strings"),
    (3, "Base_4_Addition", 2, "int", "base_add_4", (0, 3), "Base 4 addition of two digit strings"),
    (4, "Base_5_Addition", 2, "int", "base_add_5", (0, 4), "Base 5 addition of two digit strings"),
    (5, "Base_6_Addition", 2, "int", "base_add_6", (0, 5), "Base 6 addition of two digit strings"),
    (6, "Base_7_Addition", 2, "int", "base_add_7", (0, 6), "Base 7 addition of two digit strings"),
    (7, "Bitwise_Xor", 2, "bit", "xor", None, "Bitwise XOR"),
    (8, "Bitwise_Or", 2, "bit", "or", None, "Bitwise OR"),
    (9, "Bitwise_And", 2, "bit", "and", None, "Bitwise AND"),
    (10, "Bitwise_Not", 1, "bit", "not", None, "Bitwise NOT"),
    (11, "Parity_Last2", 1, "bit", "parity_last2", None, "Parity of last 2 bits"),
    (12, "Parity_Last3", 1, "bit", "parity_last3", None, "Parity of last 3 bits"),
    (13, "Parity_Last4", 1, "bit", "parity_last4", None, "Parity of last 4 bits"),
    (14, "Parity_All", 1, "bit", "parity_all", None, "Parity of all bits seen so far"),
    (15, "Parity_Zeros", 1, "bit", "parity_zeros", None, "Parity of number of zeros seen so far"),
    (16, "Evens_Counter", 1, "int", "evens_counter", None, "Cumulative number of even numbers"),
    (17, "Sum_All", 1, "int", "sum_all", None, "Cumulative sum"),
    (18, "Sum_Last2", 1, "int", "sum_last2", None, "Sum of last 2 numbers"),
    (19, "Sum_Last3", 1, "int", "sum_last3", None, "Sum of last 3 numbers"),
    (20, "Sum_Last4", 1, "int", "sum_last4", None, "Sum of last 4 numbers"),
    (21, "Sum_Last5", 1, "int", "sum_last5", None, "Sum of last 5 numbers"),
    (22, "Sum_Last6", 1, "int", "sum_last6", None, "Sum of last 6 numbers"),
    (23, "Sum_Last7", 1, "int", "sum_last7", None, "Sum of last 7 numbers"),
    (24, "Current_Number", 1, "int", "sum_last1", None, "Current number"),
    (25, "Prev1", 1, "int", "prev1", None, "Number 1 step back"),
    (26, "Prev2", 1, "int", "prev2", None, "Number 2 steps back"),
    (27, "Prev3", 1, "int", "prev3", None, "Number 3 steps back"),
    (28, "Prev4", 1, "int", "prev4", None, "Number 4 steps back"),
    (29, "Prev5", 1, "int", "prev5", None, "Number 5 steps back"),
    (30, "Previous_Equals_Current", 1, "int", "prev_equals_current", None, "1 if last two numbers are equal"),
    (31, "Diff_Last2", 1, "int", "diff_last2", None, "current - previous"),
    (32, "Abs_Diff", 1, "int", "abs_diff", None, "|current - previous|"),
    (33, "Abs_Current", 1, "int", "abs_current", None, "|current|"),
    (34, "Diff_Abs_Values", 1, "int", "diff_abs_values", None, "|current| - |previous|"),
    (35, "Min_Seen", 1, "int", "min_seen", None, "Minimum of numbers seen so far"),
    (36, "Max_Seen", 1, "int", "max_seen", None, "Maximum of integers seen so far"),
    (37, "Majority_0_1", 1, "int", "majority_1", (0, 1), "Integer in 0-1 with highest frequency"),
    (38, "Majority_0_2", 1, "int", "majority_2", (0, 2), "Integer in 0-2 with highest frequency"),
    (39, "Majority_0_3", 1, "int", "majority_3", (0, 3), "Integer in 0-3 with highest frequency"),
    (40, "Evens_Detector", 1, "int", "evens_detector", None, "1 if even, otherwise 0"),
    (41, "Perfect_Square_Detector", 1, "int", "perfect_square", None, "1 if perfect square, otherwise 0"),
    (42, "Bit_Palindrome", 1, "bit", "palindrome", None, "1 if bit string seen so far is a palindrome"),
    (43, "Balanced_Parenthesis", 1, "bit", "balanced", None, "1 if parentheses balanced so far, else 0"),
    (44, "Parity_Bits_Mod2", 1, "bit", "count_mod2", None, "Number of bits seen so far mod 2"),
    (45, "Alternating_Last3", 1, "bit", "alternating_last3", None, "1 if last 3 bits alternate"),
    (46, "Alternating_Last4", 1, "bit", "alternating_last4", None, "1 if last 4 bits alternate"),
    (47, "Bit_Shift_Right", 1, "bit", "prev1", None, "bit shift to right (same as prev1)"),
    (48, "Bit_Dot_Prod_Mod2", 2, "bit", "bit_dot_mod2", None, "Cumulative dot product of bits mod 2"),
    (49, "Div_3", 1, "bit", "div_3", None, "Binary division by 3"),
    (50, "Div_5", 1, "bit", "div_5", None, "Binary division by 5"),
    (51, "Div_7", 1, "bit", "div_7", None, "Binary division by 7"),
    (52, "Add_Mod_3", 1, "int", "add_mod_3", None, "Cumulative addition modulo 3"),
    (53, "Add_Mod_4", 1, "int", "add_mod_4", None, "Cumulative addition modulo 4"),
    (54, "Add_Mod_5", 1, "int", "add_mod_5", None, "Cumulative addition modulo 5"),
    (55, "Add_Mod_6", 1, "int", "add_mod_6", None, "Cumulative addition modulo 6"),
    (56, "Add_Mod_7", 1, "int", "add_mod_7", None, "Cumulative addition modulo 7"),
    (57, "Add_Mod_8", 1, "int", "add_mod_8", None, "Cumulative addition modulo 8"),
    (58, "Dithering", 1, "int", "dithering", (0, 15), "1D dithering, 4-bit to 1-bit"),
    (59, "Newton_Freebody", 1, "int", "newton_freebody", (-3, 3), "Euler steps with F = input"),
    (60, "Newton_Gravity", 1, "int", "newton_gravity", (-3, 3), "Euler steps with F = input - 1"),
    (61, "Newton_Spring", 1, "int", "newton_spring", (-3, 3), "Euler steps with F = input - x"),
    (62, "Newton_Magnetic", 2, "int", "newton_magnetic", (-3, 3), "Euler steps in a magnetic field"),
]

DEFAULT_INT_RANGE = (-10, 10)


def _build() -> list[TaskSpec]:
    specs = []
    for tid, name, k, kind, oid, rng, desc in _TABLE:
        if kind == "bit":
            rng = (0, 1)
        elif rng is None:
            rng = DEFAULT_INT_RANGE
        seq_len = 10 if k == 2 else 20
        specs.append(TaskSpec(tid, name, k, kind, rng, seq_len, oid, desc))
    return specs


_TASKS = _build()
_BY_NAME = {t.name: t for t in _TASKS}


def list_tasks() -> list[TaskSpec]:
    return list(_TASKS)


def get_task(key: int | str) -> TaskSpec:
    """Look a task up by id (1-62) or by name."""
    if isinstance(key, str) and key.isdigit():
        key = int(key)
    if isinstance(key, int):
        if not 1 <= key <= len(_TASKS):
            raise KeyError(f"no task with id {key}")
        return _TASKS[key - 1]
    try:
        return _BY_NAME[key]
    except KeyError:
        raise KeyError(f"unknown task {key!r}") from None


def _check(task: TaskSpec, x: np.ndarray) -> None:
    if x.ndim != 3 or x.shape[1] != task.num_inputs:
        raise TaskInputError(
            f"{task.name} expects {task.num_inputs} input sequence(s), got shape {x.shape}"
        )
    if x.shape[2] != task.seq_len:
        raise TaskInputError(f"{task.name} expects length {task.seq_len}, got {x.shape[2]}")
    lo, hi = task.element_range
    if x.size and (x.min() < lo or x.max() > hi):
        raise TaskInputError(f"{task.name} elements must lie in [{lo}, {hi}]")


def oracle_batch(task: TaskSpec, inputs: np.ndarray, check: bool = True) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.int64)
    if check:
        _check(task, x)
    return np.asarray(_ORACLES[task.oracle_id](x), dtype=np.int64)


def oracle_eval(task: TaskSpec, inputs: Sequence[Sequence[int]]) -> list[int]:
    """Reference output for one example; ``inputs`` holds one list per input string."""
    x = np.asarray(inputs, dtype=np.int64)
    if x.ndim == 1:
        x = x[None, :]
    return oracle_batch(task, x[None])[0].tolist()


def sample_inputs(task: TaskSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = task.element_range
    return rng.integers(lo, hi + 1, size=(count, task.num_inputs, task.seq_len), dtype=np.int64)


def generate_dataset(task: TaskSpec, count: int, seed: int) -> Dataset:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    x = sample_inputs(task, count, rng)
    return Dataset(task.id, x, oracle_batch(task, x, check=False), seed)


# --------------------------------------------------------------------------
# line-delimited JSON dataset files


def save_dataset(ds: Dataset, path, task: TaskSpec | None = None) -> None:
    task = task or get_task(ds.task_id)
    with open(path, "w") as fh:
        header = {"task_id": ds.task_id, "task": task.name, "seq_len": ds.seq_len,
                  "seed": ds.seed, "count": ds.count}
        fh.write(json.dumps(header) + "\n")
        for x, y in zip(ds.inputs, ds.targets):
            rec = {"x1": x[0].tolist()}
            if x.shape[0] > 1:
                rec["x2"] = x[1].tolist()
            rec["y"] = y.tolist()
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        xs, ys = [], []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            xs.append([rec["x1"]] + ([rec["x2"]] if "x2" in rec else []))
            ys.append(rec["y"])
    return Dataset(header["task_id"], np.asarray(xs, dtype=np.int64),
                   np.asarray(ys, dtype=np.int64), header["seed"])
