"""End-to-end runs: train, normalise, discretise, regress, emit, verify.

Every stage writes its artifact into a per-task directory so a run can be
inspected (and its report rebuilt) from disk alone.  Wall-clock timings go
to ``timings.json`` and are kept out of every other artifact so that two
runs with the same configuration produce identical files.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .automl import SearchExhausted, search, training_prober
from .bits import BitCodebook, Clusters, ContinuousRepresentation, boolean_assign, cluster_states
from .emit import ProgramAst, build_program, emit_text, program_names, verify
from .expr import to_rpn, to_source
from .fsm import FsmConflict, FsmTables, MissingKey, extract_tables
from .lattice import DegenerateCloud, LatticeModel, NotALattice, linear_lattice_find, noise_sweep
from .nnet import Arch, RnnModel, TrainConfig, TrainingDiverged, accuracy, batch_loss, \
    rnn_forward, train
from .normalize import NormalizerConfig, normalize_all
from .symreg import Fit, RegressionProblem, regress
from .tasks import TaskSpec, generate_dataset, get_task, save_dataset

log = logging.getLogger(__name__)

# smallest architectures reported to reach perfect accuracy, by task id
REFERENCE_ARCHS: dict[int, tuple[int, int, int, int, int]] = {
    1: (2, 1, 1, 4, 2), 2: (2, 1, 1, 5, 2), 3: (2, 1, 1, 5, 2), 4: (2, 1, 1, 5, 2),
    5: (2, 1, 1, 6, 2), 6: (2, 1, 1, 10, 2), 7: (1, 1, 1, 2, 2), 8: (1, 1, 1, 1, 1),
    9: (1, 1, 1, 1, 1), 10: (1, 1, 1, 1, 1), 11: (1, 1, 1, 229, 2), 12: (2, 1, 1, 5, 2),
    13: (3, 1, 1, 29, 2), 14: (1, 1, 1, 2, 2), 15: (1, 1, 1, 2, 2), 16: (4, 1, 1, 73, 3),
    17: (1, 1, 1, 1, 1), 18: (2, 1, 1, 1, 1), 19: (3, 1, 1, 1, 1), 20: (4, 1, 1, 1, 1),
    21: (5, 1, 1, 1, 1), 22: (6, 1, 1, 1, 1), 23: (7, 1, 1, 1, 1), 24: (1, 1, 1, 1, 1),
    25: (2, 1, 1, 1, 1), 26: (3, 1, 1, 1, 1), 27: (4, 1, 1, 1, 1), 28: (5, 1, 1, 1, 1),
    29: (6, 1, 1, 1, 1), 30: (2, 1, 1, 5, 2), 31: (2, 1, 1, 1, 1), 32: (2, 2, 2, 1, 1),
    33: (1, 1, 1, 2, 2), 34: (2, 1, 1, 4, 2), 35: (1, 1, 1, 2, 2), 36: (1, 1, 1, 2, 2),
    37: (1, 1, 1, 63, 2), 38: (4, 1, 1, 98, 2), 39: (21, 1, 1, 132, 3), 40: (5, 1, 1, 163, 2),
    41: (48, 1, 1, 100, 2), 42: (18, 1, 1, 86, 2), 43: (1, 1, 1, 16, 2), 44: (1, 1, 1, 1, 1),
    45: (2, 1, 1, 3, 2), 46: (2, 1, 1, 3, 2), 47: (2, 1, 1, 1, 1), 48: (1, 1, 1, 3, 2),
    49: (2, 1, 1, 59, 2), 50: (4, 1, 1, 76, 2), 51: (4, 1, 1, 103, 2), 52: (1, 1, 1, 149, 2),
    53: (2, 1, 1, 33, 2), 54: (3, 1, 1, 43, 2), 55: (4, 1, 1, 108, 2), 56: (4, 1, 1, 199, 2),
    57: (67, 1, 1, 134, 2), 58: (81, 1, 1, 166, 2), 59: (2, 1, 1, 1, 1), 60: (2, 1, 1, 1, 1),
    61: (2, 1, 1, 1, 1), 62: (4, 1, 1, 1, 1),
}

BENCH_TASKS = ("Binary_Addition", "Bitwise_Xor", "Bitwise_Or", "Bitwise_And", "Bitwise_Not",
               "Parity_All", "Parity_Zeros", "Sum_All", "Sum_Last2", "Sum_Last3",
               "Current_Number", "Prev1", "Prev2", "Diff_Last2", "Bit_Dot_Prod_Mod2")

FAILURE_TAGS = ("noise-nonlinearity", "continuous", "search-exhausted", "regression-budget")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    steps: int = 10000
    retry_steps: int = 20000
    seeds: int = 5
    batch_size: int = 4096
    lr: float = 1e-3
    l1: float = 0.0
    search: bool = False
    archs: dict = field(default_factory=dict)  # task name -> "n,wf,df,wg,dg"
    extract_count: int = 4096
    test_count: int = 65536
    verify_count: int = 65536
    arbitrate_count: int = 4096
    codec: str = "auto"  # auto | bits | lattice | linear
    b_max: int = 3
    max_len: int = 6
    budget: int = 10 ** 7
    constants: tuple = (0, 1, 2, 3)
    whiten_eps: float = 0.1
    jnf_eps: float = 0.7
    toeplitz_eps: float = 1e-4
    debias_eps: float = 0.1
    quant_eps: float = 0.01
    seed_salt: str = "rnn2prog"

    def normalizer(self) -> NormalizerConfig:
        return NormalizerConfig(self.whiten_eps, self.jnf_eps, self.toeplitz_eps,
                                self.debias_eps, self.quant_eps)

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["pipeline"] = {k: json.dumps(v) for k, v in dataclasses.asdict(self).items()}
        lines = ["[pipeline]"] + [f"{k} = {v}" for k, v in cp["pipeline"].items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read_string(text)
        known = {f.name for f in dataclasses.fields(cls)}
        kw = {}
        for k, v in cp["pipeline"].items():
            if k not in known:
                raise ValueError(f"unknown config key {k!r}")
            kw[k] = json.loads(v)
        if "constants" in kw:
            kw["constants"] = tuple(kw["constants"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def stable_seed(*parts) -> int:
    """Seed derived from a hash of its parts; identical across runs and machines."""
    h = hashlib.sha256("/".join(str(p) for p in parts).encode()).hexdigest()
    return int(h[:8], 16)


# ---------------------------------------------------------------------------
# discretised program synthesis


class _IndexCodec:
    """Cluster index as a one-component code."""

    def __init__(self, clusters: Clusters):
        self.centers = clusters.centers
        self.codes = [(i,) for i in range(clusters.count)]

    def encode(self, points):
        return Clusters(self.centers, 0.0).assign(points)[:, None]


@dataclass
class Synthesis:
    codec_kind: str
    codec: object
    tables: FsmTables
    fits: list[Fit]
    program: ProgramAst
    text: str

    @property
    def exact(self) -> bool:
        return all(f.verified for f in self.fits)


class RegressionCache:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.store: dict = {}

    def __call__(self, p: RegressionProblem) -> Fit:
        key = (p.names, p.kinds, p.out_kind, tuple(sorted(p.inputs)), p.X.shape,
               p.X.tobytes(), p.y.tobytes())
        if key not in self.store:
            self.store[key] = regress(p, self.cfg.max_len, self.cfg.constants, self.cfg.budget)
        return self.store[key]


def synthesize_from_tables(tables: FsmTables, task: TaskSpec, codec_kind: str, codec,
                           reg: RegressionCache) -> Synthesis:
    D = tables.dim
    hidden, inputs = program_names(D, task.num_inputs)
    in_kind = "bit" if tuple(task.element_range) == (0, 1) else "int"
    st_kind = "bit" if tables.kind == "bits" else "int"
    kinds = (st_kind,) * D + (in_kind,) * task.num_inputs
    keys = sorted(tables.f_table)
    X = np.array([list(s) + list(x) for s, x in keys], dtype=np.int64).reshape(len(keys), -1)
    fits = []
    for j in range(D):
        y = np.array([tables.f_table[k][j] for k in keys], dtype=np.int64)
        prob = RegressionProblem(X, y, tuple(hidden + inputs), kinds, frozenset(inputs), st_kind)
        fits.append(reg(prob))
    states = sorted(tables.g_table)
    Xg = np.array(states, dtype=np.int64).reshape(len(states), D)
    yg = np.array([tables.g_table[s] for s in states], dtype=np.int64)
    out_kind = "bit" if task.element_kind == "bit" else "int"
    fits.append(reg(RegressionProblem(Xg, yg, tuple(hidden), kinds[:D], frozenset(), out_kind)))
    bits = set(hidden) if st_kind == "bit" else set()
    if in_kind == "bit":
        bits |= set(inputs)
    prog = build_program([f.expr for f in fits[:-1]], fits[-1].expr, tables.initial,
                         task.seq_len, task.num_inputs, bits)
    return Synthesis(codec_kind, codec, tables, fits, prog, emit_text(prog))


def expressions_text(s: Synthesis) -> str:
    """One line per regressed component: infix, RPN, method, verification."""
    names = s.program.names
    lines = []
    for var, fit in zip([f"next_{h}" for h in s.program.hidden] + ["y"], s.fits):
        lines.append(f"{var} = {to_source(fit.expr, names)} | rpn {to_rpn(fit.expr)} | "
                     f"{fit.method} | {'verified' if fit.verified else 'unverified'}")
    return "\n".join(lines) + "\n"


def _program_score(s: Synthesis) -> float:
    return len(s.text) + (0 if s.exact else 10 ** 6)


def bits_synthesis(model: RnnModel, task: TaskSpec, inputs, trace, cfg: PipelineConfig,
                   reg: RegressionCache) -> Synthesis:
    clusters = cluster_states(trace)
    K = clusters.count
    if K & (K - 1):
        raise ContinuousRepresentation(f"{K} clusters is not a power of two")
    id_tables = extract_tables(model, inputs, _IndexCodec(clusters), kind="bits")
    cache: dict = {}

    def relabel(book: BitCodebook) -> FsmTables:
        c = book.codes
        f = {(c[s[0]], x): c[v[0]] for (s, x), v in id_tables.f_table.items()}
        g = {c[s[0]]: y for s, y in id_tables.g_table.items()}
        return FsmTables(f, g, c[id_tables.initial[0]], "bits", id_tables.num_inputs)

    def scorer(book: BitCodebook):
        key = tuple(book.codes)
        if key not in cache:
            cache[key] = synthesize_from_tables(relabel(book), task, "bits", book, reg)
        return _program_score(cache[key])

    book, _ = boolean_assign(clusters, scorer, cfg.b_max)
    return cache[tuple(book.codes)]


def axis_ordered(lat: LatticeModel) -> LatticeModel:
    """Basis columns ordered by the hidden coordinate each one mostly occupies."""
    perm = np.argsort(np.argmax(np.abs(lat.basis), axis=0), kind="stable")
    return LatticeModel(lat.basis[:, perm], lat.offset, lat.residual)


def lattice_synthesis(model, task, inputs, trace, cfg, reg, linear: bool = False) -> Synthesis:
    if linear:
        lat = linear_lattice_find(model, inputs, steps=task.seq_len, trace=trace)
    else:
        lat, _ = noise_sweep(trace)
    lat = axis_ordered(lat)
    tables = extract_tables(model, inputs, lat, kind="int")
    return synthesize_from_tables(tables, task, "linear" if linear else "lattice", lat, reg)


@dataclass
class SynthesisOutcome:
    candidates: list  # (Synthesis, arbitration accuracy) in codec order
    errors: dict  # codec kind -> reason it produced no program

    @property
    def best(self) -> Synthesis | None:
        """Correct beats incorrect, exact regression beats fallback, then shorter text."""
        if not self.candidates:
            return None
        order = range(len(self.candidates))
        key = lambda i: (self.candidates[i][1] < 1.0, not self.candidates[i][0].exact,
                         len(self.candidates[i][0].text), i)
        return self.candidates[min(order, key=key)][0]

    def summary(self) -> str:
        return "; ".join(f"{s.codec_kind}: len={len(s.text)} exact={s.exact} acc={a:.4f}"
                         for s, a in self.candidates)

    def failure_tag(self) -> str:
        reasons = list(self.errors.values())
        if reasons and all(r.startswith("continuous") for r in reasons):
            return "continuous"
        return "noise-nonlinearity"


def synthesize_program(model: RnnModel, task: TaskSpec, inputs, cfg: PipelineConfig,
                       arb_seed: int = 0) -> SynthesisOutcome:
    """Try each codec on the hidden trace and score the resulting programs."""
    x = np.asarray(inputs)
    trace = rnn_forward(model, x.astype(float))[1].reshape(-1, model.n)
    reg = RegressionCache(cfg)
    kinds = ("bits", "lattice", "linear") if cfg.codec == "auto" else (cfg.codec,)
    cands, errors = [], {}
    for kind in kinds:
        try:
            if kind == "bits":
                s = bits_synthesis(model, task, x, trace, cfg, reg)
            else:
                s = lattice_synthesis(model, task, x, trace, cfg, reg, kind == "linear")
        except (ContinuousRepresentation, NotALattice, DegenerateCloud) as exc:
            errors[kind] = f"continuous: {exc}"
            continue
        except (FsmConflict, MissingKey) as exc:
            errors[kind] = f"conflict: {exc}"
            continue
        except ValueError as exc:
            errors[kind] = f"error: {exc}"
            continue
        cands.append((s, verify(s.program, task, cfg.arbitrate_count, arb_seed).accuracy))
    return SynthesisOutcome(cands, errors)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineResult:
    task: str
    task_id: int
    arch: Arch | None = None
    stages: dict = field(default_factory=dict)
    accuracy: float = 0.0
    solved: bool = False
    codec: str = ""
    program_path: str = ""
    failure: str = ""
    train_loss: float | None = None
    test_loss: float | None = None
    notes: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("timings")
        d["arch"] = list(self.arch) if self.arch else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineResult":
        d = dict(d)
        d["arch"] = Arch(*d["arch"]) if d.get("arch") else None
        return cls(**d)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _train_fixed(task: TaskSpec, arch: Arch, cfg: PipelineConfig, test, probes: list):
    best = None
    for steps in dict.fromkeys(s for s in (cfg.steps, cfg.retry_steps) if s):
        for i in range(cfg.seeds):
            seed = stable_seed(cfg.seed_salt, task.name, str(arch), steps, i) % (2 ** 31)
            tc = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, l1=cfg.l1)
            try:
                model = train(arch, task, steps, seed, tc)
                acc = accuracy(model, test)
            except TrainingDiverged:
                probes.append({"steps": steps, "seed": seed, "accuracy": 0.0, "diverged": True})
                continue
            probes.append({"steps": steps, "seed": seed, "accuracy": acc,
                           "final_loss": tc.history[-1]})
            if best is None or acc > best[1]:
                best = (model, acc, tc.history[-1])
            if acc == 1.0:
                return best
    return best


def run_pipeline(task, cfg: PipelineConfig | None = None, outdir=".",
                 model: RnnModel | None = None) -> PipelineResult:
    """Run every stage for one task; failures are recorded, never raised."""
    cfg = cfg or PipelineConfig()
    task = get_task(task) if not isinstance(task, TaskSpec) else task
    d = Path(outdir) / task.name
    d.mkdir(parents=True, exist_ok=True)
    res = PipelineResult(task.name, task.id)
    clock = time.perf_counter
    t_start = clock()

    def stage(name, status):
        res.stages[name] = status

    extract = generate_dataset(task, cfg.extract_count, stable_seed(cfg.seed_salt, task.name, "extract"))
    test = generate_dataset(task, cfg.test_count, stable_seed(cfg.seed_salt, task.name, "test"))
    save_dataset(extract, d / "dataset.jsonl")

    # -- train -------------------------------------------------------------
    t0 = clock()
    probes: list = []
    if model is not None:
        res.arch = model.arch
        acc = accuracy(model, test)
        stage("train", "given")
        trained = (model, acc, None)
    elif cfg.search:
        try:
            sr = search(training_prober(task, cfg.steps, [stable_seed(cfg.seed_salt, task.name, i)
                                                           % (2 ** 31) for i in range(cfg.seeds)],
                                        TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, l1=cfg.l1),
                                        cfg.test_count, stable_seed(cfg.seed_salt, task.name, "test")))
            probes = [p.to_dict() for p in sr.probes]
            res.arch = sr.best_arch
            trained = (sr.best_model, 1.0, None)
        except SearchExhausted:
            trained = None
    else:
        arch = Arch.parse(cfg.archs[task.name]) if task.name in cfg.archs else \
            Arch(*REFERENCE_ARCHS[task.id])
        res.arch = arch
        trained = _train_fixed(task, arch, cfg, test, probes)
    res.timings["train"] = clock() - t0
    with open(d / "probes.jsonl", "w") as fh:
        for p in probes:
            fh.write(json.dumps(p, sort_keys=True) + "\n")
    if trained is None or trained[1] < 1.0:
        stage("train", f"imperfect ({trained[1]:.4f})" if trained else "failed")
        res.failure = "search-exhausted"
        if trained is not None:
            trained[0].save(d / "model.json")
        return _finish(res, d, t_start)
    model, _, last_loss = trained
    model.save(d / "model.json")
    res.stages.setdefault("train", "perfect")
    res.train_loss = float(last_loss) if last_loss is not None else None
    res.test_loss = float(batch_loss(rnn_forward(model, test.inputs[:8192])[0],
                                     test.targets[:8192]))

    # -- normalise ---------------------------------------------------------
    t0 = clock()
    norm = normalize_all(model, extract.inputs, cfg.normalizer())
    nm = norm.model
    if accuracy(nm, test) < 1.0:
        res.notes.append("quantization lowered accuracy; kept the unquantized model")
        norm = normalize_all(model, extract.inputs, cfg.normalizer(), skip=("quantize",))
        nm = norm.model
    nm.save(d / "normalized.json")
    (d / "normalize.txt").write_text(norm.report_text() + "\n")
    stage("normalize", ",".join(r.name for r in norm.reports if r.applied))
    res.timings["normalize"] = clock() - t0

    # -- codecs + arbitration --------------------------------------------------
    t0 = clock()
    out = synthesize_program(nm, task, extract.inputs, cfg,
                             stable_seed(cfg.seed_salt, task.name, "arbitrate"))
    stage("codec", "; ".join(f"{k}: {v}" for k, v in out.errors.items()) or "ok")
    res.timings["codec"] = clock() - t0
    if out.best is None:
        res.failure = out.failure_tag()
        return _finish(res, d, t_start)
    t0 = clock()
    best = out.best
    res.codec = best.codec_kind
    stage("candidates", out.summary())
    _dump(d / "codec.json", {"kind": best.codec_kind, **best.codec.to_dict()})
    (d / "tables.txt").write_text(best.tables.to_text())
    (d / "expressions.txt").write_text(expressions_text(best))
    (d / "program.py.txt").write_text(best.text)
    res.program_path = str((d / "program.py.txt").relative_to(Path(outdir)))
    stage("regress", "exact" if best.exact else "fallback")
    vr = verify(best.program, task, cfg.verify_count,
                stable_seed(cfg.seed_salt, task.name, "verify"))
    _dump(d / "verify.json", dataclasses.asdict(vr))
    res.accuracy = vr.accuracy
    res.solved = vr.solved
    stage("verify", f"{vr.accuracy:.6f}")
    res.timings["verify"] = clock() - t0
    if not res.solved:
        res.failure = "regression-budget" if not best.exact else "noise-nonlinearity"
    return _finish(res, d, t_start)


def _finish(res: PipelineResult, d: Path, t_start: float) -> PipelineResult:
    res.timings["total"] = time.perf_counter() - t_start
    _dump(d / "result.json", res.to_dict())
    _dump(d / "timings.json", res.timings)
    return res


# ---------------------------------------------------------------------------
# benchmark + report


def _fmt_loss(v) -> str:
    return "-" if v is None else f"{v:.3g}"


def report_text(results: Sequence[PipelineResult]) -> str:
    if not results:
        return "no tasks\n"
    w = max(len(r.task) for r in results) + 2
    out = ["Solved tasks", f"{'#':>3}  {'task':{w}}{'solved':>6}  failure"]
    for r in results:
        out.append(f"{r.task_id:>3}  {r.task:{w}}{int(r.solved):>6}  {r.failure}")
    out.append(f"Total solved: {sum(r.solved for r in results)}/{len(results)}")
    out.append("")
    out.append("Architectures")
    out.append(f"{'#':>3}  {'task':{w}}{'n':>4}{'w_f':>5}{'d_f':>5}{'w_g':>5}{'d_g':>5}"
               f"{'train loss':>12}{'test loss':>12}")
    for r in results:
        a = r.arch or ("-",) * 5
        out.append(f"{r.task_id:>3}  {r.task:{w}}{a[0]:>4}{a[1]:>5}{a[2]:>5}{a[3]:>5}{a[4]:>5}"
                   f"{_fmt_loss(r.train_loss):>12}{_fmt_loss(r.test_loss):>12}")
    return "\n".join(out) + "\n"


def write_report(results: Sequence[PipelineResult], outdir) -> str:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    text = report_text(results)
    (outdir / "report.txt").write_text(text)
    with open(outdir / "records.jsonl", "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    _dump(outdir / "timings.json", {r.task: r.timings for r in results})
    return text


def bench(tasks: Sequence[str] = BENCH_TASKS, cfg: PipelineConfig | None = None,
          outdir="bench_out") -> list[PipelineResult]:
    results = []
    for name in tasks:
        try:
            results.append(run_pipeline(name, cfg, outdir))
        except Exception as exc:  # a crash in one task must not stop the run
            log.exception("task %s crashed", name)
            t = get_task(name)
            results.append(PipelineResult(t.name, t.id, failure="noise-nonlinearity",
                                          notes=[f"crash: {type(exc).__name__}: {exc}"]))
    write_report(results, outdir)
    return results


def load_results(outdir) -> list[PipelineResult]:
    """Results reconstructed from the per-task ``result.json`` files."""
    outdir = Path(outdir)
    found = []
    for p in sorted(outdir.glob("*/result.json")):
        r = PipelineResult.from_dict(json.loads(p.read_text()))
        t = outdir / r.task / "timings.json"
        if t.exists():
            r.timings = json.loads(t.read_text())
        found.append(r)
    found.sort(key=lambda r: r.task_id)
    return found
