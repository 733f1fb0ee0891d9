"""Two-MLP recurrent network ``h_i = f(h_{i-1}, x_i)``, ``y_i = g(h_i)``.

Everything is plain numpy in float64: forward pass, backprop through time,
Adam.  ``f`` consumes the concatenation ``[h, x]``; ``g`` consumes ``h`` and
emits one scalar per step.  All layers but the last of each MLP use ReLU.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .tasks import Dataset, TaskSpec, oracle_batch, sample_inputs

log = logging.getLogger(__name__)

Layer = tuple[np.ndarray, np.ndarray]  # (weight (out, in), bias (out,))


class Arch(NamedTuple):
    n: int
    w_f: int
    d_f: int
    w_g: int
    d_g: int

    @classmethod
    def parse(cls, text: str) -> "Arch":
        parts = [int(p) for p in str(text).replace(" ", "").strip("()").split(",")]
        if len(parts) != 5:
            raise ValueError(f"architecture needs 5 integers, got {text!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return ",".join(str(v) for v in self)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RnnModel:
    arch: Arch
    num_inputs: int
    f_layers: list[Layer]
    g_layers: list[Layer]

    def __post_init__(self):
        self.arch = Arch(*self.arch)

    @property
    def n(self) -> int:
        return self.arch.n

    def copy(self) -> "RnnModel":
        cp = lambda ls: [(w.copy(), b.copy()) for w, b in ls]
        return RnnModel(self.arch, self.num_inputs, cp(self.f_layers), cp(self.g_layers))

    # affine views, meaningful when d_f == 1
    @property
    def W(self) -> np.ndarray:
        return self.f_layers[0][0][:, : self.n]

    @property
    def V(self) -> np.ndarray:
        return self.f_layers[0][0][:, self.n:]

    @property
    def b(self) -> np.ndarray:
        return self.f_layers[-1][1]

    @property
    def U(self) -> np.ndarray:
        return self.g_layers[0][0]

    @property
    def c(self) -> np.ndarray:
        return self.g_layers[0][1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in self.f_layers + self.g_layers:
            out += [w, b]
        return out

    def to_dict(self) -> dict:
        enc = lambda ls: [{"shape": list(w.shape), "weight": w.ravel().tolist(),
                           "bias": b.tolist()} for w, b in ls]
        return {"format": "rnn2prog.model/1", "arch": list(self.arch),
                "num_inputs": self.num_inputs, "f": enc(self.f_layers), "g": enc(self.g_layers)}

    @classmethod
    def from_dict(cls, d: dict) -> "RnnModel":
        dec = lambda ls: [(np.asarray(l["weight"], dtype=float).reshape(l["shape"]),
                           np.asarray(l["bias"], dtype=float)) for l in ls]
        return cls(Arch(*d["arch"]), d["num_inputs"], dec(d["f"]), dec(d["g"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "RnnModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _mlp_shapes(d_in: int, width: int, depth: int, d_out: int) -> list[tuple[int, int]]:
    dims = [d_in] + [width] * (depth - 1) + [d_out]
    return [(dims[i + 1], dims[i]) for i in range(depth)]


def init_model(arch, num_inputs: int, rng: np.random.Generator) -> RnnModel:
    """Uniform init in +-1/sqrt(fan_in) for weights and biases."""
    arch = Arch(*arch)

    def make(shapes):
        layers = []
        for out_dim, in_dim in shapes:
            bound = 1.0 / np.sqrt(in_dim)
            w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
            b = rng.uniform(-bound, bound, size=out_dim)
            layers.append((w, b))
        return layers

    f = make(_mlp_shapes(arch.n + num_inputs, arch.w_f, arch.d_f, arch.n))
    g = make(_mlp_shapes(arch.n, arch.w_g, arch.d_g, 1))
    return RnnModel(arch, num_inputs, f, g)


def _mlp(layers: list[Layer], z: np.ndarray, cache: list | None = None) -> np.ndarray:
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        a = z @ w.T + b
        if cache is not None:
            cache.append((z, a))
        z = a if i == last else np.maximum(a, 0.0)
    return z


def _mlp_back(layers: list[Layer], cache: list, dout: np.ndarray, grads: list) -> np.ndarray:
    """Backprop through one MLP call; accumulates into ``grads`` [(dW, db), ...]."""
    d = dout
    for i in range(len(layers) - 1, -1, -1):
        z_in, a = cache[i]
        if i != len(layers) - 1:
            d = d * (a > 0)
        w, _ = layers[i]
        grads[i][0] += d.T @ z_in
        grads[i][1] += d.sum(axis=0)
        d = d @ w
    return d


def f_step(model: RnnModel, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _mlp(model.f_layers, np.concatenate([h, x], axis=1))


def g_step(model: RnnModel, h: np.ndarray) -> np.ndarray:
    return _mlp(model.g_layers, h)[:, 0]


def rnn_forward(model: RnnModel, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Run the network over ``inputs`` of shape (batch, num_inputs, L).

    Returns real outputs (batch, L) and the hidden trace (batch, L, n).
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1] != model.num_inputs:
        raise ValueError(f"model takes {model.num_inputs} inputs, got {x.shape[1]}")
    B, _, L = x.shape
    h = np.zeros((B, model.n))
    ys = np.empty((B, L))
    trace = np.empty((B, L, model.n))
    for t in range(L):
        h = f_step(model, h, x[:, :, t])
        trace[:, t] = h
        ys[:, t] = g_step(model, h)
    return ys, trace


def loss(pred, target):
    """Elementwise 0.5*log(1 + (pred - target)**2)."""
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return 0.5 * np.log1p(d * d)


def loss_grad(pred, target):
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return d / (1.0 + d * d)


def batch_loss(pred, target) -> float:
    return float(np.mean(loss(pred, target)))


def loss_and_grads(model: RnnModel, inputs: np.ndarray, targets: np.ndarray,
                   l1: float = 0.0) -> tuple[float, list[np.ndarray]]:
    """Mean loss over batch x sequence and gradients ordered like ``parameters()``."""
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    B, _, L = x.shape
    n = model.n
    h = np.zeros((B, n))
    f_caches, g_caches, preds = [], [], np.empty((B, L))
    for t in range(L):
        fc: list = []
        h = _mlp(model.f_layers, np.concatenate([h, x[:, :, t]], axis=1), fc)
        gc: list = []
        preds[:, t] = _mlp(model.g_layers, h, gc)[:, 0]
        f_caches.append(fc)
        g_caches.append(gc)

    value = float(np.mean(loss(preds, y)))
    dpred = loss_grad(preds, y) / (B * L)

    fg = [[np.zeros_like(w), np.zeros_like(b)] for w, b in model.f_layers]
    gg = [[np.zeros_like(w), np.zeros_like(b)] for w, b in model.g_layers]
    dh = np.zeros((B, n))
    for t in range(L - 1, -1, -1):
        dh = dh + _mlp_back(model.g_layers, g_caches[t], dpred[:, t:t + 1], gg)
        dz = _mlp_back(model.f_layers, f_caches[t], dh, fg)
        dh = dz[:, :n]

    grads = []
    for (w, _), (dw, db) in zip(model.f_layers + model.g_layers, fg + gg):
        if l1:
            dw = dw + l1 * np.sign(w)
        grads += [dw, db]
    if l1:
        value += l1 * sum(float(np.abs(w).sum()) for w, _ in model.f_layers + model.g_layers)
    return value, grads


class Adam:
    def __init__(self, params: list[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 4096
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    l1: float = 0.0
    log_every: int = 0
    history: list = field(default_factory=list, repr=False)


def train(arch, task: TaskSpec, steps: int = 10000, seed: int = 0,
          config: TrainConfig | None = None, init: RnnModel | None = None) -> RnnModel:
    """Adam on fresh random batches; deterministic for a given seed.

    Per-step losses are appended to ``config.history``.  A non-finite loss
    raises :class:`TrainingDiverged`.
    """
    cfg = config or TrainConfig()
    rng = np.random.default_rng([seed, task.id])
    model = init.copy() if init is not None else init_model(arch, task.num_inputs, rng)
    opt = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    for step in range(steps):
        x = sample_inputs(task, cfg.batch_size, rng)
        y = oracle_batch(task, x, check=False)
        value, grads = loss_and_grads(model, x, y, cfg.l1)
        if not np.isfinite(value):
            raise TrainingDiverged(f"{task.name} seed {seed}: loss {value} at step {step}")
        opt.step(grads)
        cfg.history.append(value)
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("%s arch=%s seed=%d step=%d loss=%.3e", task.name, arch, seed, step, value)
    return model


def predict(model: RnnModel, inputs) -> np.ndarray:
    return np.rint(rnn_forward(model, inputs)[0]).astype(np.int64)


def accuracy(model: RnnModel, dataset: Dataset, chunk: int = 16384) -> float:
    """Fraction of output elements whose rounded value equals the target."""
    hits = 0
    for s in range(0, dataset.count, chunk):
        pred = predict(model, dataset.inputs[s:s + chunk])
        hits += int(np.sum(pred == dataset.targets[s:s + chunk]))
    return hits / dataset.targets.size
