"""Shared generators for the test suite."""

from functools import lru_cache

import numpy as np
from scipy.linalg import block_diag

from rnn2prog.nnet import Arch, RnnModel, TrainConfig, init_model, train
from rnn2prog.tasks import get_task


def jordan_block(lam: float, size: int) -> np.ndarray:
    return lam * np.eye(size) + np.eye(size, k=1)


def rotation_block(a: float, b: float, size: int = 1) -> np.ndarray:
    r = np.array([[a, -b], [b, a]])
    out = np.kron(np.eye(size), r)
    if size > 1:
        out += np.kron(np.eye(size, k=1), np.eye(2))
    return out


def random_structured_matrix(rng: np.random.Generator, n: int, max_cond: float = 30.0):
    """``P J P^-1`` with a random mix of real, repeated, nilpotent and rotation blocks."""
    blocks, left = [], n
    palette = [0.0, 1.0, -0.5, 2.0]
    while left:
        kind = rng.choice(["real", "repeat", "nilpotent", "rotation"])
        if kind == "rotation" and left >= 2:
            size = 2 if left >= 4 and rng.random() < 0.2 else 1
            blocks.append(rotation_block(rng.uniform(-1, 1), rng.uniform(0.3, 1.5), size))
            left -= 2 * size
            continue
        size = int(rng.integers(1, min(left, 3) + 1))
        if kind == "nilpotent":
            blocks.append(jordan_block(0.0, size))
        elif kind == "repeat":
            blocks.append(jordan_block(float(rng.choice(palette)), size))
        else:
            blocks.append(np.diag(rng.uniform(-2, 2, size)))
        left -= size
    J = block_diag(*blocks)
    while True:
        P = rng.normal(size=(n, n))
        if np.linalg.cond(P) < max_cond:
            return P @ J @ np.linalg.inv(P)


def random_lattice_instance(rng: np.random.Generator, D: int, n: int | None = None,
                            noise: float = 1e-3, max_cond: float = 20.0):
    """Affine image of a subsampled integer box; returns (points, codes, A, c)."""
    n = n or D
    grid = np.array(np.meshgrid(*[np.arange(-5, 6)] * D, indexing="ij")).reshape(D, -1).T
    keep = rng.random(len(grid)) < rng.uniform(0.3, 0.8)
    # the origin and unit vectors make the kept codes generate all of Z^D
    keep |= (np.abs(grid).sum(axis=1) <= 1) & ((grid >= 0).all(axis=1))
    codes = grid[keep]
    while True:
        A = rng.normal(size=(n, D))
        s = np.linalg.svd(A, compute_uv=False)
        if s[0] / s[-1] <= max_cond:
            break
    c = rng.normal(size=n)
    X = codes @ A.T + c + rng.normal(0, noise, size=(len(codes), n))
    return X, codes, A, c


@lru_cache(maxsize=None)
def trained_model(task: str, arch: str, steps: int, seed: int = 0, lr: float = 3e-3,
                  batch: int = 512) -> RnnModel:
    return train(Arch.parse(arch), get_task(task), steps, seed,
                 TrainConfig(lr=lr, batch_size=batch))


def random_model(arch, num_inputs: int, seed: int) -> RnnModel:
    return init_model(Arch(*arch), num_inputs, np.random.default_rng(seed))


def random_expr(rng: np.random.Generator, names, leaves: int = 4):
    """Random expression tree over ``names`` with at most ``leaves`` leaves."""
    from rnn2prog.expr import BINARY_OPS, UNARY_OPS, Binary, Const, Linear, Unary, Var

    if leaves <= 1 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.55:
            return Var(str(rng.choice(names)))
        if r < 0.8:
            return Const(int(rng.integers(-3, 4)))
        picks = rng.choice(names, size=min(len(names), int(rng.integers(1, 4))), replace=False)
        return Linear(tuple((str(v), int(rng.choice([-2, -1, 1, 2]))) for v in sorted(picks)),
                      int(rng.integers(-3, 4)))
    if rng.random() < 0.3:
        return Unary(str(rng.choice(UNARY_OPS)), random_expr(rng, names, leaves - 1))
    split = int(rng.integers(1, leaves))
    return Binary(str(rng.choice(BINARY_OPS)), random_expr(rng, names, split),
                  random_expr(rng, names, leaves - split))


def random_program(rng: np.random.Generator, bits: bool = False):
    """Random template program; with ``bits`` every variable is a 0/1 bit."""
    from rnn2prog.emit import build_program, program_names
    from rnn2prog.expr import Binary, Const, Unary

    n_hidden = int(rng.integers(0, 4))
    k = int(rng.integers(1, 4))
    hidden, inputs = program_names(n_hidden, k)
    names = hidden + inputs
    updates = [random_expr(rng, names) for _ in hidden]
    out = random_expr(rng, names)
    if bits:
        # keep bit variables bits: parity or threshold of any expression
        wrap = lambda e: Binary("%", e, Const(2)) if rng.random() < 0.5 else Unary("H", e)
        updates = [wrap(e) for e in updates]
        initial = rng.integers(0, 2, size=n_hidden)
    else:
        initial = rng.integers(-3, 4, size=n_hidden)
    prog = build_program(updates, out, initial, int(rng.integers(1, 8)), k,
                         bits=names if bits else ())
    lo, hi = (0, 2) if bits else (-4, 5)
    x = rng.integers(lo, hi, size=(int(rng.integers(1, 5)), k, prog.seq_len))
    return prog, x
