"""Program assembly, text emission, interpretation and verification.

Programs follow one fixed template: hidden variables initialised on one
line, a loop reading one element per input, simultaneous ``next_`` updates,
then the readout appended to ``ys``.
"""

from __future__ import annotations

import ast as pyast
import string
from dataclasses import dataclass, field

import numpy as np

from .expr import Binary, Expr, Names, Var, evaluate, from_pyast, to_source, variables
from .tasks import TaskSpec, generate_dataset

RESERVED = frozenset("fistxy")
INDENT = "    "


class ProgramError(ValueError):
    pass


def variable_names(count: int, skip: frozenset = RESERVED, start: int = 0) -> list[str]:
    """a, b, c, ... (skipping reserved letters), then aa, ab, ..."""
    letters = [c for c in string.ascii_lowercase if c not in skip]
    out, i = [], start
    while len(out) < count:
        q, r = divmod(i, len(letters))
        out.append(letters[r] if q == 0 else letters[q - 1] + letters[r])
        i += 1
    return out


def program_names(n_hidden: int, num_inputs: int) -> tuple[list[str], list[str]]:
    """Hidden names, then input names: ``x`` alone, or the alphabet continued."""
    hidden = variable_names(n_hidden)
    if num_inputs == 1:
        return hidden, ["x"]
    return hidden, variable_names(num_inputs, start=n_hidden)


@dataclass
class ProgramAst:
    hidden: tuple[str, ...]
    initial: tuple[int, ...]
    inputs: tuple[str, ...]
    seq_len: int
    updates: tuple[Expr, ...]
    output: Expr
    bits: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        self.initial = tuple(int(v) for v in self.initial)
        self.inputs = tuple(self.inputs)
        self.updates = tuple(self.updates)
        self.bits = frozenset(self.bits)
        if len(self.updates) != len(self.hidden) or len(self.initial) != len(self.hidden):
            raise ProgramError("need one initial value and one update per hidden variable")
        known = set(self.hidden) | set(self.inputs)
        for e in self.updates + (self.output,):
            free = variables(e) - known
            if free:
                raise ProgramError(f"expression uses unknown variables {sorted(free)}")

    @property
    def names(self) -> Names:
        return Names(self.hidden + self.inputs, frozenset(self.inputs), self.bits)


def build_program(updates, output: Expr, initial, seq_len: int, num_inputs: int,
                  bits=()) -> ProgramAst:
    """Program over hidden variables a, b, ... named by code component order."""
    updates = list(updates)
    if output is None or any(u is None for u in updates):
        raise ProgramError("missing expression")
    hidden, inputs = program_names(len(updates), num_inputs)
    return ProgramAst(tuple(hidden), tuple(initial), tuple(inputs), seq_len, tuple(updates),
                      output, frozenset(bits))


def emit_text(prog: ProgramAst) -> str:
    names = prog.names
    args = ",".join("st"[: len(prog.inputs)]) if len(prog.inputs) <= 2 else ",".join(
        f"s{i}" for i in range(len(prog.inputs)))
    streams = args.split(",")
    lines = [f"def f({args}):"]
    if prog.hidden:
        lines.append(INDENT + "".join(f"{h} = {v};" for h, v in zip(prog.hidden, prog.initial)))
    lines.append(INDENT + "ys = []")
    lines.append(INDENT + f"for i in range({prog.seq_len}):")
    body = INDENT * 2
    if len(prog.inputs) == 1:
        lines.append(body + f"{prog.inputs[0]} = {streams[0]}[i]")
    else:
        lines.append(body + " ".join(f"{v} = {s}[i];" for v, s in zip(prog.inputs, streams)))
    for h, e in zip(prog.hidden, prog.updates):
        lines.append(body + f"next_{h} = {to_source(e, names)}")
    if prog.hidden:
        lines.append(body + "".join(f"{h} = next_{h};" for h in prog.hidden))
    lines.append(body + f"y = {to_source(prog.output, names)}")
    lines.append(body + "ys.append(y)")
    lines.append(INDENT + "return ys")
    return "\n".join(lines) + "\n"


def _xor_vars(node) -> set[str]:
    out = set()
    for sub in pyast.walk(node):
        if isinstance(sub, pyast.BinOp) and isinstance(sub.op, pyast.BitXor):
            for side in (sub.left, sub.right):
                if isinstance(side, pyast.Name):
                    out.add(side.id)
    return out


def parse_program(text: str) -> ProgramAst:
    """Inverse of :func:`emit_text` for programs in the template."""
    mod = pyast.parse(text)
    fn = mod.body[0]
    if not isinstance(fn, pyast.FunctionDef):
        raise ProgramError("expected a function definition")
    streams = [a.arg for a in fn.args.args]
    hidden, initial, loop, bits = [], [], None, set()
    for st in fn.body:
        if isinstance(st, pyast.Assign) and isinstance(st.value, pyast.Constant) \
                and isinstance(st.targets[0], pyast.Name) and st.targets[0].id != "ys":
            hidden.append(st.targets[0].id)
            initial.append(int(st.value.value))
        elif isinstance(st, pyast.Assign) and isinstance(st.value, pyast.UnaryOp):
            hidden.append(st.targets[0].id)
            initial.append(int(pyast.literal_eval(st.value)))
        elif isinstance(st, pyast.For):
            loop = st
    if loop is None:
        raise ProgramError("no loop found")
    seq_len = int(loop.iter.args[0].value)
    inputs, updates, output = [], {}, None
    for st in loop.body:
        if not isinstance(st, pyast.Assign):
            continue
        target = st.targets[0].id
        if isinstance(st.value, pyast.Subscript) and getattr(st.value.value, "id", None) in streams:
            inputs.append(target)
        elif target.startswith("next_"):
            updates[target[5:]] = from_pyast(st.value)
            bits |= _xor_vars(st.value)
        elif target == "y":
            output = from_pyast(st.value)
            bits |= _xor_vars(st.value)
    if output is None:
        raise ProgramError("no output assignment")
    return ProgramAst(tuple(hidden), tuple(initial), tuple(inputs), seq_len,
                      tuple(updates[h] for h in hidden), output, frozenset(bits))


# ---------------------------------------------------------------------------
# interpretation


_SAFE = 1 << 20


def _run(prog: ProgramAst, x: np.ndarray, dtype) -> np.ndarray:
    B, k, L = x.shape
    env = {h: np.full(B, v, dtype=dtype) for h, v in zip(prog.hidden, prog.initial)}
    ys = np.empty((B, L), dtype=dtype)
    for t in range(L):
        for name, j in zip(prog.inputs, range(k)):
            env[name] = x[:, j, t].astype(dtype)
        new = {h: np.broadcast_to(np.asarray(evaluate(e, env), dtype=dtype), (B,))
               for h, e in zip(prog.hidden, prog.updates)}
        env.update(new)
        y = np.broadcast_to(np.asarray(evaluate(prog.output, env), dtype=dtype), (B,))
        ys[:, t] = y
        if dtype is not object:
            big = max([np.abs(v).max(initial=0) for v in new.values()] + [np.abs(y).max(initial=0)])
            if big > _SAFE:
                raise OverflowError
    return ys


def interpret(prog: ProgramAst, inputs) -> np.ndarray:
    """Exact integer outputs (batch, L) for inputs (batch, k, L).

    Runs in int64 and falls back to Python integers once values grow large
    enough that int64 products could overflow.
    """
    x = np.asarray(inputs, dtype=np.int64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1] != len(prog.inputs):
        raise ProgramError(f"program takes {len(prog.inputs)} inputs, got {x.shape[1]}")
    try:
        try:
            return _run(prog, x, np.int64)
        except OverflowError:
            out = _run(prog, x.astype(object), object)
            return out
    except ZeroDivisionError as exc:
        raise ProgramError("modulo by zero") from exc


def run_text(text: str, inputs) -> list[list[int]]:
    """Execute emitted source text with the host interpreter, one sequence at a time."""
    ns: dict = {}
    exec(compile(text, "<program>", "exec"), ns)
    fn = ns["f"]
    x = np.asarray(inputs, dtype=np.int64)
    if x.ndim == 2:
        x = x[None]
    return [[int(v) for v in fn(*[row.tolist() for row in seq])] for seq in x]


@dataclass
class VerifyResult:
    accuracy: float
    solved: bool
    count: int
    seed: int


def verify(prog: ProgramAst, task: TaskSpec, count: int = 65536, seed: int = 0,
           chunk: int = 16384) -> VerifyResult:
    """Accuracy of the program against fresh oracle data; solved iff exactly 1."""
    data = generate_dataset(task, count, seed)
    hits = 0
    for s in range(0, count, chunk):
        try:
            out = interpret(prog, data.inputs[s:s + chunk])
        except ProgramError:
            continue
        hits += int(np.sum(out == data.targets[s:s + chunk]))
    acc = hits / data.targets.size if data.targets.size else 1.0
    return VerifyResult(acc, acc == 1.0, count, seed)


def ripple_adder_program() -> ProgramAst:
    """The ripple-carry adder in template form (sum bit ``a``, carry ``b``)."""
    from .expr import Const, Linear, Unary
    xor = Binary("%", Linear((("b", 1), ("c", 1), ("d", 1)), 0), Const(2))
    carry = Unary("H", Linear((("b", 1), ("c", 1), ("d", 1)), -1))
    return ProgramAst(("a", "b"), (0, 0), ("c", "d"), 10, (xor, carry), Var("a"),
                      frozenset("abcd"))
