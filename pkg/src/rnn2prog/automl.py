"""Ordered architecture search for the smallest network that learns a task.

Architectures are ranked lexicographically by ``(d_g, d_f, n, w_g, w_f)``.
The search sweeps ranks upward geometrically from a start tuple until some
seed reaches perfect test accuracy, then bisects down to the lowest rank
that still succeeds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .nnet import Arch, RnnModel, TrainConfig, TrainingDiverged, accuracy, train
from .tasks import TaskSpec, generate_dataset

log = logging.getLogger(__name__)

RANGES = {"n": 128, "w_f": 256, "d_f": 3, "w_g": 256, "d_g": 3}
_KEY = ("d_g", "d_f", "n", "w_g", "w_f")  # most significant first
SPACE_SIZE = math.prod(RANGES.values())
START = Arch(1, 1, 2, 1, 1)
STEP = 2 ** 0.25


class SearchExhausted(RuntimeError):
    pass


def rank_of(arch) -> int:
    arch = Arch(*arch)
    r = 0
    for name in _KEY:
        v = getattr(arch, name)
        if not 1 <= v <= RANGES[name]:
            raise ValueError(f"{name}={v} outside [1, {RANGES[name]}]")
        r = r * RANGES[name] + (v - 1)
    return r + 1


def tuple_at(rank: int) -> Arch:
    if not 1 <= rank <= SPACE_SIZE:
        raise ValueError(f"rank {rank} outside [1, {SPACE_SIZE}]")
    r = rank - 1
    vals = {}
    for name in reversed(_KEY):
        r, v = divmod(r, RANGES[name])
        vals[name] = v + 1
    return Arch(**vals)


@dataclass
class ProbeRecord:
    rank: int
    arch: Arch
    accuracies: list[float]

    @property
    def success(self) -> bool:
        return any(a == 1.0 for a in self.accuracies)

    def to_dict(self) -> dict:
        return {"rank": self.rank, "arch": list(self.arch), "accuracies": self.accuracies,
                "success": self.success}


@dataclass
class SearchResult:
    best_arch: Arch
    best_model: RnnModel | None
    probes: list[ProbeRecord] = field(default_factory=list)

    @property
    def best_rank(self) -> int:
        return rank_of(self.best_arch)


# a prober trains one architecture and returns per-seed accuracies + best model
Prober = Callable[[Arch], tuple[list[float], RnnModel | None]]


def training_prober(task: TaskSpec, steps: int = 10000, seeds: Sequence[int] = range(5),
                    config: TrainConfig | None = None, test_count: int = 65536,
                    test_seed: int = 1) -> Prober:
    test = generate_dataset(task, test_count, test_seed)

    def probe(arch: Arch):
        accs, best, best_acc = [], None, -1.0
        for s in seeds:
            cfg = TrainConfig(**{k: v for k, v in vars(config).items() if k != "history"}) \
                if config else TrainConfig()
            try:
                model = train(arch, task, steps, s, cfg)
                acc = accuracy(model, test)
            except TrainingDiverged:
                model, acc = None, 0.0
            accs.append(acc)
            if acc > best_acc:
                best, best_acc = model, acc
            if acc == 1.0:
                break
        return accs, best

    return probe


def search(prober: Prober, start=START, max_rank: int = SPACE_SIZE) -> SearchResult:
    """Geometric upward sweep from ``start``, then bisection below the first success."""
    probes: list[ProbeRecord] = []
    cache: dict[int, tuple[bool, RnnModel | None]] = {}

    def run(rank: int) -> bool:
        if rank not in cache:
            arch = tuple_at(rank)
            accs, model = prober(arch)
            rec = ProbeRecord(rank, arch, [float(a) for a in accs])
            probes.append(rec)
            log.info("probe rank=%d arch=%s acc=%s", rank, arch, rec.accuracies)
            cache[rank] = (rec.success, model)
        return cache[rank][0]

    i = rank_of(start)
    lo = 0
    while True:
        if run(i):
            break
        lo = i
        if i >= max_rank:
            raise SearchExhausted(f"no architecture up to rank {max_rank} succeeded")
        i = min(max_rank, max(i + 1, math.ceil(i * STEP)))
    hi = i
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if run(mid):
            hi = mid
        else:
            lo = mid
    return SearchResult(tuple_at(hi), cache[hi][1], probes)
