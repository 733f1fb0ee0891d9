"""Boolean codes: hidden states that sit in ``2^b`` tight clusters."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

log = logging.getLogger(__name__)


class ContinuousRepresentation(ValueError):
    """Hidden states do not fall into well separated clusters."""


@dataclass
class Clusters:
    centers: np.ndarray  # (K, n), lexicographically sorted
    gap_ratio: float

    @property
    def count(self) -> int:
        return len(self.centers)

    def assign(self, points) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        d = ((X[:, None, :] - self.centers[None]) ** 2).sum(-1)
        return np.argmin(d, axis=1)

    def radius(self, points) -> float:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        return float(np.sqrt(((X - self.centers[self.assign(X)]) ** 2).sum(-1)).max())


def cluster_states(points, max_points: int = 2000, min_ratio: float = 5.0,
                   tight: float = 0.05, max_exact: int = 64) -> Clusters:
    """Single-linkage clustering cut at the largest relative jump in merge height.

    Points are deduplicated and sorted before any subsampling so the result
    does not depend on input order.  A cloud whose every merge is below
    ``tight`` is one cluster; otherwise a largest jump under ``min_ratio``
    means there is no clear cluster structure.  At most ``max_exact``
    distinct points (after rounding to 1e-9) are each their own cluster.
    """
    X = np.unique(np.round(np.atleast_2d(np.asarray(points, dtype=float)), 9), axis=0)
    if len(X) == 0:
        raise ValueError("no points to cluster")
    if len(X) > max_points:
        X = X[np.linspace(0, len(X) - 1, max_points).round().astype(int)]
    if len(X) == 1:
        return Clusters(X.copy(), float("inf"))
    Z = linkage(X, method="single")
    h = Z[:, 2]
    if h[-1] <= tight:
        return Clusters(X.mean(axis=0, keepdims=True), float("inf"))
    if len(X) <= max_exact:
        # every merge joins distinct points: cut wherever the jump is largest,
        # counting the jump from exact coincidence to the first merge
        h = np.concatenate([[1e-9], h])
        ratios = h[1:] / h[:-1]
        best = int(np.argmax(ratios))
        if ratios[best] < min_ratio:
            raise ContinuousRepresentation(f"largest merge-height jump is only {ratios[best]:.2f}x")
        labels = fcluster(Z, t=len(X) - best, criterion="maxclust")
        return _centers(X, labels, float(ratios[best]))
    floor = max(h[-1] * 1e-12, 1e-15)
    ratios = h[1:] / np.maximum(h[:-1], floor)
    best = int(np.argmax(ratios)) if len(ratios) else -1
    ratio = float(ratios[best]) if best >= 0 else 1.0
    # a jump from "nothing" to the first merge: every point its own cluster
    if ratio < min_ratio:
        raise ContinuousRepresentation(f"largest merge-height jump is only {ratio:.2f}x")
    k = len(X) - (best + 1)
    labels = fcluster(Z, t=k, criterion="maxclust")
    return _centers(X, labels, ratio)


def _centers(X: np.ndarray, labels: np.ndarray, ratio: float) -> Clusters:
    centers = np.array([X[labels == lab].mean(axis=0) for lab in np.unique(labels)])
    centers = centers[np.lexsort(centers.T[::-1])]
    return Clusters(centers, ratio)


@dataclass
class BitCodebook:
    centers: np.ndarray  # (2^b, n)
    codes: list[tuple[int, ...]]  # bit tuple per center, a bijection onto {0,1}^b

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.codes = [tuple(int(v) for v in c) for c in self.codes]
        if len(set(self.codes)) != len(self.codes) or len(self.codes) != len(self.centers):
            raise ValueError("codebook assignment is not a bijection")

    @property
    def bits(self) -> int:
        return len(self.codes[0]) if self.codes else 0

    def encode(self, points) -> np.ndarray:
        idx = Clusters(self.centers, 0.0).assign(points)
        return np.array(self.codes, dtype=np.int64).reshape(len(self.codes), -1)[idx]

    def decode(self, bits) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.codes)}
        B = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        return self.centers[[lookup[tuple(int(v) for v in row)] for row in B]]

    def to_dict(self) -> dict:
        return {"kind": "bits", "bits": self.bits, "centers": self.centers.tolist(),
                "codes": [list(c) for c in self.codes]}

    @classmethod
    def from_dict(cls, d: dict) -> "BitCodebook":
        return cls(np.array(d["centers"], dtype=float), [tuple(c) for c in d["codes"]])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "BitCodebook":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def bit_tuple(value: int, b: int) -> tuple[int, ...]:
    """Most significant bit first, so bit 0 becomes the first variable."""
    return tuple((value >> (b - 1 - i)) & 1 for i in range(b))


def boolean_assign(clusters: Clusters, scorer: Callable[[BitCodebook], float | None],
                   b_max: int = 3, max_rounds: int = 20) -> tuple[BitCodebook, float]:
    """Cheapest cluster-to-bit-string bijection.

    ``scorer`` returns a program length (or ``None`` when the codebook gives
    no usable program).  Up to ``b_max`` bits every permutation is visited
    in lexicographic order and only a strictly better score replaces the
    incumbent.  Beyond that the search is a heuristic: start from the
    identity assignment and apply the best improving pairwise swap until
    none improves or ``max_rounds`` is reached.
    """
    K = clusters.count
    b = K.bit_length() - 1
    if K != 1 << b:
        raise ValueError(f"{K} clusters is not a power of two")

    def score(perm) -> tuple[float, BitCodebook]:
        book = BitCodebook(clusters.centers, [bit_tuple(v, b) for v in perm])
        s = scorer(book)
        return (float("inf") if s is None else s), book

    best: tuple[float, BitCodebook] | None = None
    if b <= b_max:
        for perm in itertools.permutations(range(K)):
            cand = score(perm)
            if best is None or cand[0] < best[0]:
                best = cand
    else:
        log.info("%d bits: greedy swap search instead of all %d! assignments", b, K)
        perm = list(range(K))
        best = score(perm)
        for _ in range(max_rounds):
            step = None
            for i, j in itertools.combinations(range(K), 2):
                trial = perm.copy()
                trial[i], trial[j] = trial[j], trial[i]
                cand = score(trial)
                if cand[0] < (step or best)[0]:
                    step, swap = cand, trial
            if step is None:
                break
            best, perm = step, swap
    if best is None or best[0] == float("inf"):
        raise ValueError("no bit assignment produced a program")
    return best[1], best[0]
