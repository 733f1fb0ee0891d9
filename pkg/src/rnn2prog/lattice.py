"""Integer lattice codes for hidden-state clouds.

A cloud of points ``x_j`` is a lattice cloud if ``x_j ~= A k_j + c`` with
integer codes ``k_j``.  Two finders are provided: a GCD finder working only
from the points (a multi-dimensional relaxed Euclid), and a linear finder
that reads candidate basis vectors off an affine recurrence.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import ConvexHull, QhullError

log = logging.getLogger(__name__)

EPS_DL = 1e-4


class NotALattice(ValueError):
    pass


class DegenerateCloud(ValueError):
    pass


# ---------------------------------------------------------------------------
# scalar gcd


def relaxed_gcd(a: float, b: float, eps: float) -> float:
    """Euclid on reals, stopping once the remainder drops below ``eps``."""
    a, b = abs(float(a)), abs(float(b))
    for _ in range(200):
        if b < eps:
            return a
        a, b = b, abs(a - round(a / b) * b)
    return a


def gcd_scalar(values, eps: float = 1e-6) -> float:
    vals = [abs(float(v)) for v in np.ravel(values) if abs(float(v)) >= eps]
    if not vals:
        raise ValueError("gcd of an all-zero list")
    g = vals[0]
    for v in vals[1:]:
        g = relaxed_gcd(g, v, eps)
    return g


# ---------------------------------------------------------------------------
# lattice model


@dataclass
class LatticeModel:
    basis: np.ndarray  # (n, D), columns are basis vectors
    offset: np.ndarray  # (n,)
    residual: float = 0.0  # max |A k + c - x| over the fitted points

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float).reshape(len(self.offset), -1)
        self.offset = np.asarray(self.offset, dtype=float)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def coords(self, points) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        return (X - self.offset) @ np.linalg.pinv(self.basis).T

    def encode(self, points) -> np.ndarray:
        return np.rint(self.coords(points)).astype(np.int64)

    def decode(self, codes) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(codes, dtype=float)).reshape(-1, self.dim)
        return Z @ self.basis.T + self.offset

    def to_dict(self) -> dict:
        return {"kind": "lattice", "dim": self.dim, "basis": self.basis.tolist(),
                "offset": self.offset.tolist(), "residual": self.residual}

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeModel":
        return cls(np.array(d["basis"], dtype=float), np.array(d["offset"], dtype=float),
                   float(d.get("residual", 0.0)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "LatticeModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class DlScore:
    eps_gcd: float
    p: float
    total_dl: float


def description_length(model: LatticeModel, points, eps_dl: float = EPS_DL) -> float:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    Z = model.encode(X)
    resid = (model.decode(Z) - X) / eps_dl
    return float(np.sum(np.log1p(np.sum(Z.astype(float) ** 2, axis=1)))
                 + np.sum(np.log1p(resid ** 2)))


# ---------------------------------------------------------------------------
# basis reduction


def _int_det(U: list[list[int]]) -> int:
    """Exact determinant of a small integer matrix (fraction elimination)."""
    M = [[Fraction(v) for v in row] for row in U]
    n, det = len(M), Fraction(1)
    for i in range(n):
        piv = next((r for r in range(i, n) if M[r][i] != 0), None)
        if piv is None:
            return 0
        if piv != i:
            M[i], M[piv] = M[piv], M[i]
            det = -det
        det *= M[i][i]
        for r in range(i + 1, n):
            f = M[r][i] / M[i][i]
            M[r] = [a - f * b for a, b in zip(M[r], M[i])]
    return int(det)


def basis_simplify(basis, return_unimodular: bool = False, max_rounds: int = 1000):
    """Integer project-and-subtract between columns until no norm can shrink.

    The accumulated column operations form an integer matrix ``U`` with
    ``det U = +-1`` (checked exactly), so the lattice and ``|det|`` are kept.
    """
    B = np.array(basis, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    D = B.shape[1]
    U = [[int(i == j) for j in range(D)] for i in range(D)]
    for _ in range(max_rounds):
        changed = False
        for i, j in itertools.permutations(range(D), 2):
            bj = B[:, j]
            nj = bj @ bj
            if nj == 0:
                continue
            q = int(round((B[:, i] @ bj) / nj))
            if q == 0:
                continue
            cand = B[:, i] - q * bj
            if cand @ cand < B[:, i] @ B[:, i] * (1 - 1e-12):
                B[:, i] = cand
                for r in range(D):
                    U[r][i] -= q * U[r][j]
                changed = True
        if not changed:
            break
    if abs(_int_det(U)) != 1:
        raise AssertionError("basis reduction produced a non-unimodular transform")
    return (B, np.array(U, dtype=np.int64)) if return_unimodular else B


def orient(basis: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    B = np.array(basis, dtype=float)
    for j in range(B.shape[1]):
        col = B[:, j]
        k = int(np.argmax(np.abs(col) - 1e-12 * np.arange(len(col))))
        if col[k] < 0:
            B[:, j] = -col
    return B


# ---------------------------------------------------------------------------
# GCD finder


def affine_span(X: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and orthonormal directions (n, D) along which the cloud spreads
    by more than ``tol`` (RMS)."""
    mu = X.mean(axis=0)
    if len(X) < 2:
        return mu, np.zeros((X.shape[1], 0))
    _, s, vh = np.linalg.svd(X - mu, full_matrices=False)
    rms = s / math.sqrt(len(X))
    return mu, vh[rms > tol].T


def _initial_basis(diffs: np.ndarray, D: int) -> np.ndarray:
    """Greedy max-volume choice of D difference vectors."""
    chosen = []
    R = diffs.copy()
    for _ in range(D):
        norms = np.linalg.norm(R, axis=1)
        k = int(np.argmax(norms))
        v = diffs[k]
        chosen.append(v)
        u = R[k] / norms[k]
        R = R - np.outer(R @ u, u)
    return np.column_stack(chosen)


def _euclid_basis(diffs: np.ndarray, D: int, eps: float, max_steps: int = 10000) -> np.ndarray:
    """Basis of the lattice generated by ``diffs`` (rows, in D-dim coordinates).

    Each difference not yet representable is reduced modulo the current
    basis; if a coordinate remainder exceeds ``eps`` the vector replaces that
    basis vector and the displaced vector is processed next, exactly as in
    the scalar Euclid step ``(a, b) -> (b, a mod b)``.
    """
    B = _initial_basis(diffs, D)
    steps = 0
    while True:
        Z = diffs @ np.linalg.inv(B).T
        frac = np.abs(Z - np.rint(Z)).max(axis=1)
        bad = np.flatnonzero(frac >= eps)
        if len(bad) == 0:
            return B
        d = diffs[bad[0]].copy()
        while True:
            steps += 1
            if steps > max_steps:
                raise NotALattice("relaxed Euclid did not terminate")
            z = np.linalg.solve(B, d)
            r = z - np.rint(z)
            d = B @ r
            i = int(np.argmax(np.abs(r)))
            if abs(r[i]) < eps:
                break
            B[:, i], d = d, B[:, i].copy()
        if abs(np.linalg.det(B)) < 1e-12:
            raise NotALattice("lattice basis collapsed")


def unit_volume(diffs: np.ndarray, D: int, eps: float, samples: int = 64,
                seed: int = 0) -> float:
    """GCD of the volumes of D-tuples of difference vectors."""
    if D == 0:
        return 1.0
    rng = np.random.default_rng(seed)
    vols = []
    idx = np.arange(len(diffs))
    for _ in range(samples):
        pick = rng.choice(idx, size=D, replace=len(idx) < D)
        vols.append(abs(np.linalg.det(diffs[pick].T.reshape(D, D))))
    scale = max(vols) if vols else 1.0
    return gcd_scalar(vols, eps * max(scale, 1e-12)) if scale > 0 else 0.0


def gcd_lattice_find(points, eps_gcd: float = 0.01, span_tol: float | None = None,
                     max_resid: float = 0.25) -> LatticeModel:
    """Fit ``x ~= A k + c`` with the coarsest lattice consistent with the points.

    ``eps_gcd`` is the Euclid termination threshold in units of the current
    basis.  The basis is then reduced, oriented, refit by least squares on
    the codes, and the offset moved into the unit cell of the basis.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if len(X) == 0:
        raise DegenerateCloud("no points")
    tol = span_tol if span_tol is not None else max(1e-9, 1e-3 * eps_gcd)
    mu, P = affine_span(X, tol)
    D = P.shape[1]
    if D == 0:
        raise DegenerateCloud("all points coincide")
    Y = (X - mu) @ P
    ref = Y[0]
    diffs = Y - ref
    diffs = diffs[np.linalg.norm(diffs, axis=1) > 0]
    B = _euclid_basis(diffs, D, eps_gcd)
    B = basis_simplify(B)
    Z = np.rint((Y - ref) @ np.linalg.inv(B).T)
    coord_resid = float(np.abs((Y - ref) @ np.linalg.inv(B).T - Z).max())
    if coord_resid > max_resid:
        raise NotALattice(f"points sit {coord_resid:.3f} cells off the fitted lattice")
    return _refit(X, Z)


def _refit(X: np.ndarray, Z: np.ndarray) -> LatticeModel:
    """Least-squares ``A``, ``c`` for known codes, then canonical offset/orientation."""
    D = Z.shape[1]
    M = np.column_stack([Z, np.ones(len(Z))])
    coef, *_ = np.linalg.lstsq(M, X, rcond=None)
    A, c = coef[:D].T, coef[D]
    # orient basis vectors
    for j in range(D):
        col = A[:, j]
        k = int(np.argmax(np.abs(col) - 1e-12 * np.arange(len(col))))
        if col[k] < 0:
            A[:, j] = -col
            Z[:, j] = -Z[:, j]
    # shift the offset into the unit cell
    shift = np.floor(np.linalg.pinv(A) @ c + 1e-9)
    c = c - A @ shift
    Z = Z + shift
    resid = float(np.abs(Z @ A.T + c - X).max())
    return LatticeModel(A, c, resid)


def _subsample(X: np.ndarray, cap: int) -> np.ndarray:
    """Deduplicate, sort lexicographically, keep at most ``cap`` evenly spaced rows."""
    X = np.unique(np.round(X, 9), axis=0)
    if len(X) > cap:
        X = X[np.linspace(0, len(X) - 1, cap).round().astype(int)]
    return X


def code_volume(Z: np.ndarray) -> float:
    """Convex hull volume of integer codes, in lattice cells.

    Unimodular basis changes preserve it, unlike a bounding box.
    """
    Z = np.unique(np.asarray(Z, dtype=float), axis=0)
    if Z.shape[1] == 1:
        return float(np.ptp(Z)) + 1.0
    try:
        return float(ConvexHull(Z).volume) + 1.0
    except QhullError:  # codes on a lower-dimensional slice
        return float(len(Z))


def noise_sweep(points, eps_grid=None, p_grid=None, cap: int = 4000,
                eps_dl: float = EPS_DL, max_unique_frac: float = 0.5,
                bad_frac: float = 0.01, min_density: float = 0.05
                ) -> tuple[LatticeModel, DlScore]:
    """Grid search over Euclid threshold and core fraction; minimum description length wins.

    Each setting fits on the ``p`` percent of points nearest the centroid
    and is scored on all points.  A winner that gives most points their own
    code, or leaves more than ``bad_frac`` of points over a quarter cell off
    the lattice, is rejected as not a lattice.  A code set that fills at
    least ``min_density`` of its convex hull counts as compressed even
    when every point has its own code.
    """
    eps_grid = np.logspace(-3, 0, 13) if eps_grid is None else np.asarray(eps_grid)
    p_grid = np.logspace(-1, 2, 8) if p_grid is None else np.asarray(p_grid)
    raw = np.atleast_2d(np.asarray(points, dtype=float))
    X = _subsample(raw, cap)
    if len(X) < 2:
        raise DegenerateCloud("fewer than two distinct points")
    order = np.argsort(np.linalg.norm(X - X.mean(axis=0), axis=1), kind="stable")
    best: tuple[float, LatticeModel, DlScore] | None = None
    for p in p_grid:
        m = max(2, int(math.ceil(len(X) * p / 100.0)))
        core = X[np.sort(order[:m])]
        for eps in eps_grid:
            try:
                model = gcd_lattice_find(core, float(eps))
            except (NotALattice, DegenerateCloud, np.linalg.LinAlgError):
                continue
            dl = description_length(model, X, eps_dl)
            if best is None or dl < best[0]:
                best = (dl, model, DlScore(float(eps), float(p), dl))
    if best is None:
        raise NotALattice("no setting produced a lattice")
    _, model, score = best
    C = model.coords(X)
    off = np.abs(C - np.rint(C)).max(axis=1)
    if np.mean(off > 0.25) > bad_frac:
        raise NotALattice(f"{np.mean(off > 0.25):.1%} of points sit off the best lattice")
    Z = np.rint(C)
    uniq = len(np.unique(Z, axis=0))
    if uniq > max_unique_frac * len(raw) and uniq < min_density * code_volume(Z):
        raise NotALattice(f"best lattice does not compress the cloud "
                          f"({uniq} codes for {len(raw)} points)")
    return model, score


# ---------------------------------------------------------------------------
# linear finder


def linear_lattice_find(model, inputs=None, steps: int | None = None,
                        dim: int | None = None, trace=None) -> LatticeModel:
    """Basis from the input directions propagated through the recurrence.

    Candidates are ``W^m v`` for every input column ``v`` of ``V`` and
    ``m = 0 .. steps-1``.  The ``dim`` largest-norm linearly independent
    candidates form the basis, ``dim`` defaulting to the affine dimension of
    the hidden trace.  The offset is the circular mean of the fractional
    lattice coordinates of the trace.
    """
    from .normalize import linearize
    from .nnet import rnn_forward

    lin = linearize(model, inputs)
    if lin.residual > 1e-3:
        raise NotALattice(f"f is not affine on the visited states ({lin.residual:.3g})")
    if trace is None:
        if inputs is None:
            raise ValueError("need inputs or a trace")
        trace = rnn_forward(model, np.asarray(inputs, dtype=float))[1]
    H = np.asarray(trace, dtype=float).reshape(-1, model.n)
    if steps is None:
        steps = np.shape(inputs)[-1] if inputs is not None else model.n
    if dim is None:
        dim = affine_span(_subsample(H, 4000), 1e-6)[1].shape[1]
    if dim == 0:
        raise DegenerateCloud("hidden trace is a single point")
    cands, Wm = [], np.eye(model.n)
    for _ in range(steps):
        cands += [Wm @ lin.V[:, j] for j in range(lin.V.shape[1])]
        Wm = lin.W @ Wm
    cands.sort(key=lambda v: -float(np.linalg.norm(v)))
    basis: list[np.ndarray] = []
    for v in cands:
        if len(basis) == dim:
            break
        if np.linalg.norm(v) < 1e-9:
            continue
        M = np.column_stack(basis + [v])
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] > 1e-6 * s[0]:
            basis.append(v)
    if len(basis) < dim:
        raise NotALattice(f"only {len(basis)} independent input directions for dim {dim}")
    A = orient(np.column_stack(basis))
    coords = H @ np.linalg.pinv(A).T
    ang = 2 * np.pi * coords
    phase = np.arctan2(np.sin(ang).mean(axis=0), np.cos(ang).mean(axis=0)) / (2 * np.pi)
    Z = np.rint(coords - phase)
    c = (H - Z @ A.T).mean(axis=0)
    shift = np.floor(np.linalg.pinv(A) @ c + 1e-9)
    c = c - A @ shift
    Z = Z + shift
    return LatticeModel(A, c, float(np.abs(Z @ A.T + c - H).max()))
