"""Numerically tolerant real Jordan normal form.

Eigenvalues closer than ``2*sqrt(eps)`` are merged and treated as one
(possibly defective) eigenvalue; kernels are taken with singular-value
thresholding at ``eps``.  With ``eps=0.7`` this maps ``[[0,1],[d,0]]`` to the
nilpotent shift for every ``|d| < 0.7``, since its eigenvalues ``+-sqrt(d)``
then fall inside one group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag


class JnfError(ValueError):
    pass


def eps_kernel(X: np.ndarray, eps: float) -> np.ndarray:
    """Orthonormal columns spanning the right singular vectors with sigma < eps."""
    _, s, vh = np.linalg.svd(X)
    s_full = np.zeros(X.shape[1])
    s_full[: len(s)] = s
    return vh[s_full < eps].conj().T


def corrected(X: np.ndarray, eps: float) -> np.ndarray:
    """X with singular values below eps set to zero."""
    u, s, vh = np.linalg.svd(X)
    s = np.where(s < eps, 0.0, s)
    return (u[:, : len(s)] * s) @ vh[: len(s)]


def orth(X: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    if X.size == 0:
        return X.reshape(X.shape[0], 0)
    u, s, _ = np.linalg.svd(X, full_matrices=False)
    return u[:, s > tol * max(1.0, s[0] if len(s) else 0.0)]


def group_eigenvalues(lams: np.ndarray, tol: float) -> list[list[int]]:
    """Connected components of the ``|li - lj| <= tol`` graph, checked transitive."""
    n = len(lams)
    close = np.abs(lams[:, None] - lams[None, :]) <= tol
    seen, groups = set(), []
    for i in range(n):
        if i in seen:
            continue
        comp, stack = [], [i]
        seen.add(i)
        while stack:
            j = stack.pop()
            comp.append(j)
            for k in np.flatnonzero(close[j]):
                if int(k) not in seen:
                    seen.add(int(k))
                    stack.append(int(k))
        comp.sort()
        if not close[np.ix_(comp, comp)].all():
            raise JnfError(f"eigenvalue grouping is not transitive at tolerance {tol:.3g}")
        groups.append(comp)
    return groups


def _fix_phase(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v) - 1e-12 * np.arange(len(v))))
    ph = v[i] / abs(v[i])
    return v / ph if np.iscomplexobj(v) else v * np.sign(v[i])


def _chains(W: np.ndarray, lam, m: int, eps: float) -> list[list[np.ndarray]]:
    """Jordan chains ``[v0, v1, ...]`` (v0 an eigenvector) for one eigenvalue group."""
    n = W.shape[0]
    N0 = W - lam * np.eye(n)
    N = corrected(N0, eps)
    eye = np.eye(n, dtype=N0.dtype)
    G = []
    prev = np.zeros((n, 0), dtype=N0.dtype)
    while True:
        P = prev @ prev.conj().T
        g = eps_kernel((eye - P) @ N, eps)
        if g.shape[1] <= prev.shape[1]:
            raise JnfError(f"generalized kernel stalled at dimension {prev.shape[1]} of {m}")
        if g.shape[1] > m:
            raise JnfError(f"kernel dimension {g.shape[1]} exceeds multiplicity {m}")
        G.append(g)
        prev = g
        if g.shape[1] == m:
            break
    dims = [0] + [g.shape[1] for g in G]
    inc = [dims[k + 1] - dims[k] for k in range(len(G))] + [0]
    if any(inc[k] < inc[k + 1] for k in range(len(G))):
        raise JnfError(f"kernel dimensions {dims[1:]} are not consistent with Jordan chains")
    projs = [g @ g.conj().T for g in G]

    chains: list[list[np.ndarray]] = []
    for k in range(len(G) - 1, -1, -1):
        count = inc[k] - inc[k + 1]
        # vectors already present at level k come from longer chains
        existing = [c[k] for c in chains]
        if count == 0:
            continue
        basis = [G[k - 1]] if k > 0 else []
        if existing:
            basis.append(np.column_stack(existing))
        Q = orth(np.hstack(basis)) if basis else np.zeros((n, 0), dtype=N0.dtype)
        M = G[k] - Q @ (Q.conj().T @ G[k])
        u, s, _ = np.linalg.svd(M, full_matrices=False)
        if len(s) < count or s[count - 1] < 1e-6:
            raise JnfError(f"cannot find {count} new chain tops at depth {k}")
        for j in range(count):
            top = _fix_phase(u[:, j])
            chain = [top]
            for i in range(k - 1, -1, -1):
                chain.append(projs[i] @ (N0 @ chain[-1]))
            chains.append(chain[::-1])
    return chains


@dataclass
class JordanBlock:
    lam: complex
    size: int  # chain length
    columns: np.ndarray  # real columns of T (n, size or 2*size)
    block: np.ndarray  # real block of J

    @property
    def dim(self) -> int:
        return self.block.shape[0]


def _real_block(lam: float, s: int) -> np.ndarray:
    return lam * np.eye(s) + np.eye(s, k=1)


def _rot_block(lam: complex, s: int) -> np.ndarray:
    a, b = lam.real, lam.imag
    R = np.array([[a, -b], [b, a]])
    return np.kron(np.eye(s), R) + np.kron(np.eye(s, k=1), np.eye(2))


def _group_blocks(W: np.ndarray, lam: complex, m: int, eps: float) -> list[JordanBlock]:
    """Blocks for one eigenvalue group; complex groups give rotation blocks."""
    out = []
    if lam.imag == 0.0:
        for ch in _chains(W, lam.real, m, eps):
            cols = np.column_stack([v.real for v in ch])
            out.append(JordanBlock(lam.real, len(ch), cols, _real_block(lam.real, len(ch))))
        return out
    for ch in _chains(W.astype(complex), lam, m, eps):
        cols = []
        for v in ch:
            cols += [np.sqrt(2.0) * v.real, -np.sqrt(2.0) * v.imag]
        out.append(JordanBlock(lam, len(ch), np.column_stack(cols), _rot_block(lam, len(ch))))
    return out


def _pair_groups(lams: np.ndarray, groups: list[list[int]], tol: float):
    """Yield ``(indices, lam)`` per real group and per conjugate pair of groups.

    For a pair, ``lam`` is the upper half-plane mean and ``indices`` covers
    both members.
    """
    done = set()
    for gi, comp in enumerate(groups):
        if gi in done:
            continue
        done.add(gi)
        vals = lams[comp]
        if all(np.any(np.abs(vals - np.conj(v)) <= tol) for v in vals):
            yield comp, complex(np.mean(vals.real))
            continue
        mate = next((j for j, other in enumerate(groups)
                     if j not in done and len(other) == len(comp) and
                     np.allclose(np.sort_complex(np.conj(lams[other])), np.sort_complex(vals),
                                 atol=tol)), None)
        if mate is None:
            raise JnfError("complex eigenvalue group without a conjugate partner")
        done.add(mate)
        lam = complex(np.mean(vals))
        if lam.imag < 0:
            lam = lam.conjugate()
        yield sorted(comp + groups[mate]), lam


def _blocks(W: np.ndarray, lams: np.ndarray, idx: list[int], tol: float,
            eps: float) -> list[JordanBlock]:
    groups = [[idx[i] for i in g] for g in group_eigenvalues(lams[idx], tol)]
    out: list[JordanBlock] = []
    scale = 1.0 + float(np.abs(W).max())
    for members, lam in _pair_groups(lams, groups, tol):
        # a group mean that is zero up to round-off is exactly zero
        if abs(lam.real) < 1e-12 * scale:
            lam = complex(0.0, lam.imag)
        m = len(members) if lam.imag == 0.0 else len(members) // 2
        try:
            merged, err = _group_blocks(W, lam, m, eps), None
        except JnfError as exc:
            merged, err = None, exc
        distinct = np.ptp(lams[members].real) > 0 or np.ptp(lams[members].imag) > 0
        # merging is only worth it when it reveals a defective structure;
        # a semisimple cluster of distinct eigenvalues is diagonalised apart
        semisimple = merged is not None and all(b.size == 1 for b in merged)
        if m > 1 and distinct and tol > 1e-10 and (merged is None or semisimple):
            try:
                out += _blocks(W, lams, members, tol / 4.0, eps)
                continue
            except JnfError:
                pass
        if merged is None:
            raise err
        out += merged
    return out


def jordan_blocks(W, eps: float = 0.7) -> list[JordanBlock]:
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if W.shape != (n, n):
        raise ValueError("W must be square")
    if n == 0:
        return []
    lams = np.linalg.eigvals(W)
    blocks = _blocks(W, lams, list(range(n)), 2.0 * np.sqrt(eps), eps)
    blocks.sort(key=lambda b: (-b.dim, -abs(b.lam), float(np.angle(b.lam)), b.lam.real))
    return blocks


def jordan_normal_form(W, eps: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    """Real ``(T, J)`` with ``W ~= T @ J @ inv(T)``.

    ``J`` is block diagonal: real blocks ``lam*I + S`` and, for complex pairs,
    rotation-scaling 2x2 blocks with 2x2 identities on the block superdiagonal.
    Raises :class:`JnfError` when the grouping or the kernel dimensions are
    inconsistent at this ``eps``.
    """
    W = np.asarray(W, dtype=float)
    blocks = jordan_blocks(W, eps)
    if not blocks:
        return np.zeros((0, 0)), np.zeros((0, 0))
    T = np.hstack([b.columns for b in blocks])
    if T.shape != W.shape:
        raise JnfError(f"found {T.shape[1]} generalized eigenvectors for a {W.shape[0]}-dim matrix")
    if np.linalg.matrix_rank(T) < W.shape[0]:
        raise JnfError("generalized eigenvectors are linearly dependent")
    J = block_diag(*[b.block for b in blocks])
    return T, J


def block_spans(W_blocks: list[JordanBlock]) -> list[tuple[int, int, JordanBlock]]:
    out, start = [], 0
    for b in W_blocks:
        out.append((start, start + b.dim, b))
        start += b.dim
    return out


def jordan_structure(J: np.ndarray, tol: float = 1e-9) -> list[tuple[int, int, bool]]:
    """Split a matrix already in (real) Jordan form into ``(start, stop, complex)`` blocks."""
    n = J.shape[0]
    out, i = [], 0
    while i < n:
        cplx = i + 1 < n and abs(J[i + 1, i]) > tol
        step = 2 if cplx else 1
        j = i + step
        while j < n and abs(J[j - step, j] - 1) <= tol:
            j += step
        out.append((i, j, cplx))
        i = j
    return out
