"""Lookup tables for the transition and readout of a discretised RNN."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nnet import RnnModel, rnn_forward


class FsmConflict(ValueError):
    """One table key observed with two different values."""


class MissingKey(KeyError):
    pass


Code = tuple[int, ...]


@dataclass
class FsmTables:
    f_table: dict[tuple[Code, Code], Code]  # (state, inputs) -> next state
    g_table: dict[Code, int]  # state -> output
    initial: Code
    kind: str = "int"  # "bits" | "int"
    num_inputs: int = 1
    notes: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.initial)

    @property
    def states(self) -> list[Code]:
        seen = {self.initial} | {k[0] for k in self.f_table} | set(self.f_table.values())
        return sorted(seen)

    # -- text dump ---------------------------------------------------------

    def to_text(self) -> str:
        fmt = lambda t: ",".join(str(v) for v in t)
        lines = [f"# fsm kind={self.kind} dim={self.dim} inputs={self.num_inputs} "
                 f"initial={fmt(self.initial)}"]
        for (s, x), s2 in sorted(self.f_table.items()):
            lines.append(f"{fmt(s)} , {fmt(x)} -> {fmt(s2)} ; {self.g_table[s2]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FsmTables":
        parse = lambda t: tuple(int(v) for v in t.split(",")) if t.strip() else ()
        header, *rows = [ln for ln in text.splitlines() if ln.strip()]
        meta = dict(kv.split("=", 1) for kv in header.lstrip("# ").split()[1:])
        f, g = {}, {}
        for ln in rows:
            lhs, rhs = ln.split("->")
            s, x = lhs.split(" , ")
            s2, y = rhs.split(";")
            f[(parse(s), parse(x))] = parse(s2)
            g[parse(s2)] = int(y)
        return cls(f, g, parse(meta.get("initial", "")), meta.get("kind", "int"),
                   int(meta.get("inputs", 1)))

    # -- execution ---------------------------------------------------------

    def replay(self, inputs) -> np.ndarray:
        """Table-driven run over (batch, k, L) integer inputs."""
        x = np.asarray(inputs, dtype=np.int64)
        if x.ndim == 2:
            x = x[None]
        B, k, L = x.shape
        if B == 0 or L == 0:
            return np.zeros((B, L), dtype=np.int64)
        states = self.states
        sid = {s: i for i, s in enumerate(states)}
        out_of = np.array([self.g_table.get(s, 0) for s in states], dtype=np.int64)
        has_out = np.array([s in self.g_table for s in states])
        cur = np.full(B, sid[self.initial], dtype=np.int64)
        ys = np.empty((B, L), dtype=np.int64)
        for t in range(L):
            keys = np.column_stack([cur, x[:, :, t]])
            uniq, inv = np.unique(keys, axis=0, return_inverse=True)
            nxt = np.empty(len(uniq), dtype=np.int64)
            for j, row in enumerate(uniq):
                key = (states[row[0]], tuple(int(v) for v in row[1:]))
                if key not in self.f_table:
                    raise MissingKey(f"no transition for state {key[0]} on input {key[1]}")
                nxt[j] = sid[self.f_table[key]]
            cur = nxt[inv.ravel()]
            if not has_out[cur].all():
                raise MissingKey("reached a state without an output")
            ys[:, t] = out_of[cur]
        return ys


def _initial_code(codec, h0: np.ndarray, on_codec: bool, first_codes: np.ndarray,
                  first_inputs: np.ndarray, f_table: dict) -> Code:
    if on_codec:
        return tuple(int(v) for v in codec.encode(h0[None])[0])
    # h0 is off the codec: pick the state whose transitions agree with the
    # observed first steps
    firsts: dict[Code, Code] = {}
    for code, xin in zip(map(tuple, first_codes.tolist()), map(tuple, first_inputs.tolist())):
        firsts.setdefault(xin, code)
    states = sorted({k[0] for k in f_table})
    for s in states:
        if all(f_table.get((s, xin), c) == c for xin, c in firsts.items()):
            return s
    raise FsmConflict("initial hidden state matches no extracted state")


def on_codec(codec, points, tol_factor: float = 2.0) -> np.ndarray:
    """Whether each point is represented by the codec as well as the trace is."""
    X = np.atleast_2d(points)
    if hasattr(codec, "basis"):
        C = codec.coords(X)
        return np.abs(C - np.rint(C)).max(axis=1) < 0.25
    from .bits import Clusters
    cl = Clusters(codec.centers, 0.0)
    d = np.sqrt(((X - codec.centers[cl.assign(X)]) ** 2).sum(-1))
    spread = np.min([np.linalg.norm(a - b) for i, a in enumerate(codec.centers)
                     for b in codec.centers[i + 1:]] or [np.inf])
    return d < min(0.25 * spread, 0.5)


def _merge_unique(keys: np.ndarray, values: np.ndarray, what: str) -> dict:
    rows = np.unique(np.column_stack([keys, values]), axis=0)
    kcols = keys.shape[1]
    k_unique, counts = np.unique(rows[:, :kcols], axis=0, return_counts=True)
    if np.any(counts > 1):
        bad = k_unique[np.argmax(counts > 1)]
        raise FsmConflict(f"{what} key {tuple(bad.tolist())} has {counts.max()} different values")
    return {tuple(r[:kcols].tolist()): tuple(r[kcols:].tolist()) for r in rows}


def extract_tables(model: RnnModel, inputs, codec, kind: str | None = None,
                   targets=None) -> FsmTables:
    """Build lookup tables from the encoded hidden trace on ``inputs``.

    The readout table records the model's rounded output.  Any key seen with
    two values raises :class:`FsmConflict`.  If ``targets`` are given, a
    replay through the tables must reproduce them exactly.
    """
    x = np.asarray(inputs)
    ys, trace = rnn_forward(model, x.astype(float))
    yr = np.rint(ys).astype(np.int64)
    B, L, n = trace.shape
    codes = codec.encode(trace.reshape(-1, n)).reshape(B, L, -1)
    D = codes.shape[2]
    h0 = np.zeros(n)
    h0_ok = bool(on_codec(codec, h0[None])[0])
    xi = x.astype(np.int64)
    # transitions from step t-1 to t, t >= 1
    if L > 1:
        prev = codes[:, :-1].reshape(-1, D)
        xin = np.transpose(xi[:, :, 1:], (0, 2, 1)).reshape(-1, x.shape[1])
        nxt = codes[:, 1:].reshape(-1, D)
        f_table = _merge_unique(np.column_stack([prev, xin]), nxt, "transition")
        f_table = {(k[:D], k[D:]): v for k, v in f_table.items()}
    else:
        f_table = {}
    initial = _initial_code(codec, h0, h0_ok, codes[:, 0], xi[:, :, 0], f_table)
    first = _merge_unique(np.column_stack([np.tile(initial, (B, 1)), xi[:, :, 0]]),
                          codes[:, 0], "transition")
    for k, v in first.items():
        key = (k[:D], k[D:])
        if f_table.setdefault(key, v) != v:
            raise FsmConflict(f"transition key {key} has 2 different values")
    g = _merge_unique(codes.reshape(-1, D), yr.reshape(-1, 1), "readout")
    g_table = {k: int(v[0]) for k, v in g.items()}
    kind = kind or ("bits" if hasattr(codec, "codes") else "int")
    tables = FsmTables(f_table, g_table, initial, kind, x.shape[1])
    if not h0_ok:
        tables.notes.append("initial state inferred from first transitions")
    if targets is not None:
        rep = tables.replay(xi)
        if not np.array_equal(rep, np.asarray(targets)):
            acc = float(np.mean(rep == np.asarray(targets)))
            raise FsmConflict(f"table replay reproduces only {acc:.4f} of the targets")
    return tables
