"""Behaviour-preserving rewrites of a trained RNN's weights.

Every rewrite except quantisation is a change of hidden basis ``h -> A h``:
the last layer of ``f`` is multiplied by ``A`` on the output side and every
layer reading ``h`` (first layers of ``f`` and ``g``) by ``A^-1``.  That keeps
the input-output map identical for any depth of ``f``.

Order: whitening, Jordan normal form, Toeplitz, de-bias, quantisation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .jordan import JnfError, eps_kernel, jordan_normal_form, jordan_structure
from .nnet import RnnModel, rnn_forward

log = logging.getLogger(__name__)

HAMMERS = ("whiten", "jnf", "toeplitz", "debias", "quantize")


@dataclass
class NormalizerConfig:
    whiten_eps: float = 0.1
    jnf_eps: float = 0.7
    toeplitz_eps: float = 1e-4
    debias_eps: float = 0.1
    quant_eps: float = 0.01
    # accept a JNF only if T^-1 W T is this close to J (relative to 1+|J|)
    jnf_tol: float = 0.05
    # hammers before quantisation are reverted when outputs move more than this
    max_dev: float = 1e-3
    trace_sequences: int = 2048

    def __post_init__(self):
        for k in ("whiten_eps", "jnf_eps", "toeplitz_eps", "debias_eps", "quant_eps"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


@dataclass
class HiddenTransform:
    A: np.ndarray
    A_inv: np.ndarray

    @classmethod
    def of(cls, A) -> "HiddenTransform":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("hidden transform must be square")
        if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e12:
            raise np.linalg.LinAlgError("hidden transform is singular")
        A_inv = np.linalg.inv(A)
        return cls(A, A_inv)

    @classmethod
    def identity(cls, n: int) -> "HiddenTransform":
        return cls(np.eye(n), np.eye(n))

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.A))


def apply_hidden_transform(model: RnnModel, t: HiddenTransform) -> RnnModel:
    """Model whose hidden state is ``A h`` of the original's."""
    n = model.n
    if t.A.shape != (n, n):
        raise ValueError(f"transform is {t.A.shape}, hidden size is {n}")
    out = model.copy()
    w, b = out.f_layers[0]
    w = w.copy()
    w[:, :n] = w[:, :n] @ t.A_inv
    out.f_layers[0] = (w, b)
    w, b = out.f_layers[-1]
    out.f_layers[-1] = (t.A @ w, t.A @ b)
    w, b = out.g_layers[0]
    out.g_layers[0] = (w @ t.A_inv, b)
    return out


def hidden_trace(model: RnnModel, inputs) -> np.ndarray:
    """All hidden states visited on ``inputs`` as a (points, n) array."""
    return rnn_forward(model, inputs)[1].reshape(-1, model.n)


def max_deviation(a: RnnModel, b: RnnModel, inputs) -> float:
    return float(np.max(np.abs(rnn_forward(a, inputs)[0] - rnn_forward(b, inputs)[0])))


# ---------------------------------------------------------------------------
# individual hammers


def whitening_transform(trace: np.ndarray, eps: float = 0.1) -> HiddenTransform:
    """Symmetric ``C^-1/2`` on directions with covariance >= eps, identity elsewhere."""
    h = np.asarray(trace, dtype=float).reshape(-1, np.shape(trace)[-1])
    if len(h) == 0:
        raise ValueError("empty hidden trace")
    C = h.T @ h / len(h)
    s, Q = np.linalg.eigh(C)
    scale = np.where(s >= eps, 1.0 / np.sqrt(np.maximum(s, eps)), 1.0)
    A = (Q * scale) @ Q.T
    A_inv = (Q / scale) @ Q.T
    return HiddenTransform(A, A_inv)


def whiten(model: RnnModel, trace, eps: float = 0.1) -> RnnModel:
    return apply_hidden_transform(model, whitening_transform(trace, eps))


@dataclass
class Linearization:
    """Affine description ``f(h, x) ~= W h + V x + b`` and its max residual."""

    W: np.ndarray
    V: np.ndarray
    b: np.ndarray
    residual: float = 0.0


def _step_pairs(model: RnnModel, inputs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Previous states, inputs and next states for every visited step."""
    x = np.asarray(inputs, dtype=float)
    _, trace = rnn_forward(model, x)
    B, L, n = trace.shape
    prev = np.concatenate([np.zeros((B, 1, n)), trace[:, :-1]], axis=1).reshape(-1, n)
    xs = np.transpose(x, (0, 2, 1)).reshape(-1, x.shape[1])
    return prev, xs, trace.reshape(-1, n)


def linearize(model: RnnModel, inputs=None) -> Linearization:
    """Exact weights for an affine ``f``; otherwise a least-squares affine fit
    of ``f`` on the states visited while reading ``inputs``."""
    n = model.n
    if model.arch.d_f == 1:
        w, b = model.f_layers[0]
        return Linearization(w[:, :n].copy(), w[:, n:].copy(), b.copy())
    if inputs is None:
        raise ValueError("a deep f needs inputs to be fitted affinely")
    prev, xs, nxt = _step_pairs(model, inputs)
    Z = np.column_stack([prev, xs, np.ones(len(prev))])
    coef, *_ = np.linalg.lstsq(Z, nxt, rcond=None)
    resid = float(np.max(np.abs(Z @ coef - nxt)))
    M = coef.T
    return Linearization(M[:, :n].copy(), M[:, n:-1].copy(), M[:, -1].copy(), resid)


def jnf_transform(W: np.ndarray, eps: float = 0.7, tol: float = 0.05):
    """Largest eps on a decade ladder whose JNF fits ``W``; returns (transform, J, eps)."""
    e = eps
    last_err: Exception | None = None
    while e >= 1e-10:
        try:
            T, J = jordan_normal_form(W, e)
            if np.linalg.cond(T) < 1e8:
                fit = np.linalg.solve(T, W @ T)
                if np.max(np.abs(fit - J)) <= tol * (1.0 + np.max(np.abs(J))):
                    return HiddenTransform.of(np.linalg.inv(T)), J, e
        except (JnfError, np.linalg.LinAlgError) as exc:
            last_err = exc
        e /= 10.0
    raise JnfError(f"no Jordan form found down to eps=1e-10 ({last_err})")


def jordan_transform(model: RnnModel, eps: float = 0.7, inputs=None) -> tuple[RnnModel, np.ndarray]:
    t, J, _ = jnf_transform(linearize(model, inputs).W, eps)
    return apply_hidden_transform(model, t), J


def _complex_toeplitz(z: np.ndarray) -> np.ndarray:
    """Upper-triangular Toeplitz ``M`` with ``M e_last = z``."""
    s = len(z)
    M = np.zeros((s, s), dtype=z.dtype)
    for k in range(s):
        M += z[s - 1 - k] * np.eye(s, k=k)
    return M


def toeplitz_transform(W: np.ndarray, V: np.ndarray, eps: float = 1e-4,
                       structure=None) -> HiddenTransform:
    """Per Jordan block, one-hot the input column with the largest bottom entry.

    ``structure`` lists ``(start, stop, complex)`` blocks; by default it is
    read off ``W``.  Complex (rotation) blocks are treated as complex Jordan
    blocks acting on coordinate pairs.
    """
    n = W.shape[0]
    blocks = structure if structure is not None else jordan_structure(W, 1e-6)
    A = np.eye(n)
    for start, stop, cplx in blocks:
        Vb = V[start:stop]
        if Vb.shape[1] == 0:
            continue
        if cplx:
            z = Vb[0::2] + 1j * Vb[1::2]
        else:
            z = Vb.astype(float)
        stab = np.abs(z[-1])
        j = int(np.argmax(stab))
        if stab[j] <= eps:
            continue
        Minv = np.linalg.inv(_complex_toeplitz(z[:, j]))
        if cplx:
            s = len(z)
            R = np.zeros((2 * s, 2 * s))
            R[0::2, 0::2] = Minv.real
            R[0::2, 1::2] = -Minv.imag
            R[1::2, 0::2] = Minv.imag
            R[1::2, 1::2] = Minv.real
            A[start:stop, start:stop] = R
        else:
            A[start:stop, start:stop] = Minv
    return HiddenTransform.of(A)


def toeplitz_simplify(model: RnnModel, eps: float = 1e-4, structure=None,
                      inputs=None) -> RnnModel:
    lin = linearize(model, inputs)
    return apply_hidden_transform(model, toeplitz_transform(lin.W, lin.V, eps, structure))


def debias(model: RnnModel, eps: float = 0.1, inputs=None) -> RnnModel:
    """Move the part of ``b`` lying in ``W``'s eps-nullspace into ``g``'s bias."""
    lin = linearize(model, inputs)
    K = eps_kernel(lin.W, eps)
    if K.shape[1] == 0:
        return model.copy()
    delta = K @ (K.T @ lin.b)
    out = model.copy()
    w, b = out.f_layers[-1]
    if len(out.f_layers) == 1:
        out.f_layers[-1] = (w, b - delta)
    else:
        # the shifted state also feeds the first layer; compensate there
        out.f_layers[-1] = (w, b - delta)
        w1, b1 = out.f_layers[0]
        out.f_layers[0] = (w1, b1 + w1[:, : model.n] @ delta)
    u, c = out.g_layers[0]
    out.g_layers[0] = (u, c + u @ delta)
    return out


def chain_reversal(structure) -> np.ndarray:
    """Permutation reversing the coordinate order inside each Jordan block."""
    n = structure[-1][1] if structure else 0
    order = []
    for start, stop, cplx in structure:
        step = 2 if cplx else 1
        for k in range(stop - step, start - 1, -step):
            order += list(range(k, k + step))
    return np.eye(n)[order]


def quantize(model: RnnModel, eps: float = 0.01) -> RnnModel:
    """Snap every weight and bias within ``eps`` of an integer."""
    def snap(a):
        r = np.rint(a)
        return np.where(np.abs(a - r) <= eps, r, a) + 0.0  # no negative zeros

    out = model.copy()
    out.f_layers = [(snap(w), snap(b)) for w, b in out.f_layers]
    out.g_layers = [(snap(w), snap(b)) for w, b in out.g_layers]
    return out


# ---------------------------------------------------------------------------
# driver


@dataclass
class HammerReport:
    name: str
    applied: bool
    reason: str = ""
    cond: float = 1.0
    max_dev: float = 0.0

    def line(self) -> str:
        state = "applied" if self.applied else "skipped"
        extra = f" ({self.reason})" if self.reason else ""
        return f"{self.name:9s} {state:7s} cond={self.cond:.3g} max_dev={self.max_dev:.3g}{extra}"


@dataclass
class NormalizeResult:
    model: RnnModel
    reports: list[HammerReport] = field(default_factory=list)
    jordan: np.ndarray | None = None

    def report_text(self) -> str:
        return "\n".join(r.line() for r in self.reports)


def normalize_all(model: RnnModel, inputs, config: NormalizerConfig | None = None,
                  skip=()) -> NormalizeResult:
    """Apply the five hammers in order to a copy of ``model``.

    ``inputs`` is an input batch (sequences, k, L) used for the whitening
    statistics and the behavioural checks.  Linear-algebra hammers need an
    affine ``f``; for deeper ``f`` they run only when dropping the rectifiers
    changes ``f`` by less than ``max_dev`` on the visited states.
    """
    cfg = config or NormalizerConfig()
    x = np.asarray(inputs, dtype=float)[: cfg.trace_sequences]
    res = NormalizeResult(model.copy())
    unknown = set(skip) - set(HAMMERS)
    if unknown:
        raise ValueError(f"unknown hammers: {sorted(unknown)}")

    def attempt(name, fn):
        if name in skip:
            res.reports.append(HammerReport(name, False, "skipped by request"))
            return
        before = res.model
        try:
            after, cond = fn(before)
        except (JnfError, np.linalg.LinAlgError, ValueError) as exc:
            log.info("%s: %s", name, exc)
            res.reports.append(HammerReport(name, False, str(exc)))
            return
        dev = max_deviation(before, after, x)
        if name != "quantize" and not dev < cfg.max_dev:
            log.info("%s reverted: output deviation %.3g", name, dev)
            res.reports.append(HammerReport(name, False, "output deviation too large", cond, dev))
            return
        res.model = after
        res.reports.append(HammerReport(name, True, "", cond, dev))

    def do_whiten(m):
        t = whitening_transform(hidden_trace(m, x), cfg.whiten_eps)
        return apply_hidden_transform(m, t), t.cond

    attempt("whiten", do_whiten)

    lin_err = linearize(res.model, x).residual
    linear_ok = lin_err < cfg.max_dev
    for name in ("jnf", "toeplitz", "debias"):
        if not linear_ok and name not in skip:
            log.info("%s skipped: f is not affine on the visited states (%.3g)", name, lin_err)
            res.reports.append(HammerReport(name, False, f"nonlinear f ({lin_err:.3g})"))
            continue
        if name == "jnf":
            def do_jnf(m):
                t, J, _ = jnf_transform(linearize(m, x).W, cfg.jnf_eps, cfg.jnf_tol)
                res.jordan = J
                return apply_hidden_transform(m, t), t.cond
            attempt("jnf", do_jnf)
        elif name == "toeplitz":
            def do_toeplitz(m):
                lin = linearize(m, x)
                structure = jordan_structure(res.jordan) if res.jordan is not None else None
                t = toeplitz_transform(lin.W, lin.V, cfg.toeplitz_eps, structure)
                return apply_hidden_transform(m, t), t.cond
            attempt("toeplitz", do_toeplitz)
        else:
            attempt("debias", lambda m: (debias(m, cfg.debias_eps, x), 1.0))

    if res.jordan is not None and any(r.name == "jnf" and r.applied for r in res.reports):
        # present chains with the input entering the first variable of each block
        perm = chain_reversal(jordan_structure(res.jordan))
        res.model = apply_hidden_transform(res.model, HiddenTransform(perm, perm.T))
    attempt("quantize", lambda m: (quantize(m, cfg.quant_eps), 1.0))
    return res
