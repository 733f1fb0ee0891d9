"""Command line entry point: ``python -m rnn2prog <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import automl, pipeline
from .emit import parse_program, verify
from .fsm import FsmTables
from .nnet import Arch, RnnModel, TrainConfig, accuracy, train
from .normalize import HAMMERS, normalize_all
from .symreg import RegressionProblem, regress
from .tasks import generate_dataset, get_task, list_tasks, load_dataset, save_dataset


def _config(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.load(args.config) if getattr(args, "config", None) \
        else pipeline.PipelineConfig()
    return cfg


def cmd_gen(args) -> int:
    task = get_task(args.task)
    save_dataset(generate_dataset(task, args.count, args.seed), args.out, task)
    print(f"wrote {args.count} {task.name} sequences to {args.out}")
    return 0


def cmd_train(args) -> int:
    task = get_task(args.task)
    tc = TrainConfig(lr=args.lr, batch_size=args.batch_size, l1=args.l1)
    model = train(Arch.parse(args.arch), task, args.steps, args.seed, tc)
    model.save(args.out)
    acc = accuracy(model, generate_dataset(task, args.test_count, args.seed + 1))
    print(f"{task.name} arch={args.arch} final loss={tc.history[-1]:.3e} test accuracy={acc:.6f}")
    print(f"model written to {args.out}")
    return 0


def cmd_search(args) -> int:
    task = get_task(args.task)
    prober = automl.training_prober(task, args.steps, list(range(args.seeds)),
                                    TrainConfig(batch_size=args.batch_size), args.test_count)
    log_fh = open(args.log, "w") if args.log else sys.stdout
    try:
        result = automl.search(prober, max_rank=args.max_rank)
    except automl.SearchExhausted as exc:
        print(f"search exhausted: {exc}")
        return 1
    for p in result.probes:
        log_fh.write(json.dumps(p.to_dict()) + "\n")
    if args.log:
        log_fh.close()
    a = result.best_arch
    print(f"{task.id} {task.name} n={a.n} w_f={a.w_f} d_f={a.d_f} w_g={a.w_g} d_g={a.d_g} "
          f"rank={result.best_rank}")
    if args.out and result.best_model is not None:
        result.best_model.save(args.out)
    return 0


def cmd_normalize(args) -> int:
    model = RnnModel.load(args.model)
    data = load_dataset(args.data)
    skip = tuple(s for s in (args.skip or "").split(",") if s)
    bad = set(skip) - set(HAMMERS)
    if bad:
        print(f"unknown hammer(s): {sorted(bad)}; choose from {', '.join(HAMMERS)}")
        return 2
    res = normalize_all(model, data.inputs, _config(args).normalizer(), skip=skip)
    res.model.save(args.out)
    print(res.report_text())
    return 0


def _synthesis(args):
    model = RnnModel.load(args.model)
    data = load_dataset(args.data)
    task = get_task(data.task_id)
    cfg = _config(args)
    if getattr(args, "codec", None):
        cfg.codec = args.codec
    return task, pipeline.synthesize_program(model, task, data.inputs, cfg)


def cmd_extract(args) -> int:
    task, out = _synthesis(args)
    for kind, why in out.errors.items():
        print(f"{kind}: {why}")
    best = out.best
    if best is None:
        return 1
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "codec.json").write_text(json.dumps({"kind": best.codec_kind, **best.codec.to_dict()},
                                             indent=1, sort_keys=True) + "\n")
    (d / "tables.txt").write_text(best.tables.to_text())
    print(f"{best.codec_kind} codec with {len(best.tables.states)} states; "
          f"codec.json and tables.txt written to {d}")
    return 0


def cmd_synthesize(args) -> int:
    task, out = _synthesis(args)
    best = out.best
    if best is None:
        for kind, why in out.errors.items():
            print(f"{kind}: {why}")
        return 1
    Path(args.out).write_text(best.text)
    print(pipeline.expressions_text(best), end="")
    print(best.text, end="")
    return 0


def _read_table(path: Path) -> list[tuple[str, RegressionProblem]]:
    """A tables.txt dump (one problem per component) or a CSV with a header row."""
    text = path.read_text()
    if text.startswith("# fsm"):
        from .emit import program_names
        t = FsmTables.from_text(text)
        hidden, inputs = program_names(t.dim, t.num_inputs)
        kind = "bit" if t.kind == "bits" else "int"
        keys = sorted(t.f_table)
        X = np.array([list(s) + list(x) for s, x in keys], dtype=np.int64).reshape(len(keys), -1)
        in_kind = "bit" if np.isin(X[:, t.dim:], (0, 1)).all() else "int"
        kinds = (kind,) * len(hidden) + (in_kind,) * len(inputs)
        probs = [(f"next_{h}", RegressionProblem(X, [t.f_table[k][j] for k in keys],
                                                 tuple(hidden + inputs), kinds,
                                                 frozenset(inputs), kind))
                 for j, h in enumerate(hidden)]
        states = sorted(t.g_table)
        probs.append(("y", RegressionProblem(np.array(states).reshape(len(states), t.dim),
                                             [t.g_table[s] for s in states], tuple(hidden),
                                             (kind,) * len(hidden))))
        return probs
    rows = [ln.split(",") for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    header = [h.strip() for h in rows[0]]
    body = np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64)
    bits = bool(np.isin(body, (0, 1)).all())
    kinds = tuple("bit" if bits else "int" for _ in header[:-1])
    return [(header[-1], RegressionProblem(body[:, :-1], body[:, -1], tuple(header[:-1]), kinds,
                                           out_kind="bit" if bits else "int"))]


def cmd_symreg(args) -> int:
    from .expr import to_rpn
    code = 0
    for target, prob in _read_table(Path(args.table)):
        fit = regress(prob, args.max_len, tuple(args.constants), args.budget)
        print(f"{target} = {fit.source(prob.render_names())}")
        print(f"  rpn: {to_rpn(fit.expr)}  method: {fit.method}  "
              f"{'verified' if fit.verified else 'UNVERIFIED'}")
        code |= 0 if fit.verified else 1
    return code


def cmd_verify(args) -> int:
    prog = parse_program(Path(args.prog).read_text())
    task = get_task(args.task)
    res = verify(prog, task, args.count, args.seed)
    print(f"{task.name}: accuracy {res.accuracy:.6f} on {res.count} sequences "
          f"(seed {res.seed}) -> {'solved' if res.solved else 'not solved'}")
    return 0 if res.solved else 1


def cmd_bench(args) -> int:
    cfg = _config(args)
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()] if args.tasks is not None \
        else list(pipeline.BENCH_TASKS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.ini")
    results = pipeline.bench(tasks, cfg, out)
    print(pipeline.report_text(results), end="")
    return 0


def cmd_report(args) -> int:
    results = pipeline.load_results(args.dir)
    print(pipeline.write_report(results, args.dir), end="")
    return 0


def cmd_tasks(args) -> int:
    for t in list_tasks():
        print(f"{t.id:>3} {t.name:<26} inputs={t.num_inputs} {t.element_kind:<3} "
              f"range={t.element_range} L={t.seq_len}  {t.description}")
    return 0


def cmd_config(args) -> int:
    print(pipeline.PipelineConfig().to_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rnn2prog", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="generate a dataset file")
    p.add_argument("--task", required=True)
    p.add_argument("--count", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train one architecture")
    p.add_argument("--task", required=True)
    p.add_argument("--arch", required=True, help="n,wf,df,wg,dg")
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=4096)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--test-count", type=int, default=65536)
    p.add_argument("--out", default="model.json")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("search", help="find the smallest architecture that learns a task")
    p.add_argument("--task", required=True)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=4096)
    p.add_argument("--test-count", type=int, default=65536)
    p.add_argument("--max-rank", type=int, default=automl.SPACE_SIZE)
    p.add_argument("--log", help="probe log file (default: stdout)")
    p.add_argument("--out", help="save the best model here")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("normalize", help="canonicalize a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip", help=f"comma separated subset of {','.join(HAMMERS)}")
    p.add_argument("--config")
    p.set_defaults(fn=cmd_normalize)

    for verb, fn, hlp in (("extract", cmd_extract, "fit a codec and build lookup tables"),
                          ("synthesize", cmd_synthesize, "emit a program from a model")):
        p = sub.add_parser(verb, help=hlp)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--codec", choices=("auto", "bits", "lattice", "linear"), default="auto")
        p.add_argument("--out", required=True)
        p.add_argument("--config")
        p.set_defaults(fn=fn)

    p = sub.add_parser("symreg", help="regress a formula for a lookup table")
    p.add_argument("--table", required=True)
    p.add_argument("--max-len", type=int, default=6)
    p.add_argument("--constants", type=int, nargs="*", default=[0, 1, 2, 3])
    p.add_argument("--budget", type=int, default=10 ** 7)
    p.set_defaults(fn=cmd_symreg)

    p = sub.add_parser("verify", help="check a program against the task oracle")
    p.add_argument("--prog", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--count", type=int, default=65536)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="run the pipeline over a task subset")
    p.add_argument("--tasks", help="comma separated names (default: the 15-task subset)")
    p.add_argument("--config")
    p.add_argument("--out", default="bench_out")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("report", help="rebuild the report from a bench directory")
    p.add_argument("--dir", default="bench_out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("tasks", help="list the task catalogue")
    p.set_defaults(fn=cmd_tasks)

    p = sub.add_parser("config", help="print the default pipeline configuration")
    p.set_defaults(fn=cmd_config)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
