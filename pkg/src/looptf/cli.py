"""Command-line front end: ``python -m looptf <verb> ...``.

Verbs: train, eval, stopcurve, oracle-check, sweep. Outputs default to
``$LOOPTF_OUT`` (``runs`` when unset). Exit codes: 0 ok, 1 config or input
error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from looptf.checkpoint import CheckpointError, load_checkpoint
from looptf.experiments import (DEFAULT_SAMPLES, EVAL_SEED, ResultRow, aggregate_csv, evaluate_lengths,
                                output_root, rows_csv)
from looptf.inference import MaxConfidence, Oracle, Threshold, default_t_max, exact_match, stopping_curve
from looptf.plot import accuracy_svg, stopping_curve_svg
from looptf.programs import LOOP_PROGRAMS, TaskId, task_oracle
from looptf.tasks import fixed_length_batch, steps_for
from looptf.train import ConfigError, TrainConfig, eval_batch, run_training
from looptf.verify import check_task
from looptf.vocab import VOCAB_SIZE

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2
log = logging.getLogger("looptf")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors; 2 is reserved for failed verification
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_lengths(text: str) -> list[int]:
    """``"9-16"``, ``"8,12,16"`` or a mix like ``"1-3,8"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise CliError(f"bad length list {text!r}") from None
    if not out or min(out) < 1:
        raise CliError("lengths must be a nonempty list of integers >= 1")
    return out


# --- train ------------------------------------------------------------------

def _config_flags(ap: argparse.ArgumentParser) -> None:
    for f in fields(TrainConfig):
        ap.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="V",
                        help=f"override {f.name}")


def resolve_config(path, args) -> TrainConfig:
    d = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise CliError(f"config file not found: {p}")
        d = TrainConfig.from_file(p).to_dict()
    for f in fields(TrainConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            d[f.name] = v
    return TrainConfig.from_dict(d)


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args)
    if args.dry_run:
        sys.stdout.write(cfg.to_text())
        return EXIT_OK
    name = Path(args.config).stem if args.config else cfg.task
    out = Path(args.out) if args.out else output_root() / f"{name}-seed{cfg.seed}"
    resume = out / "model.ckpt" if args.resume else None
    if resume is not None and not resume.exists():
        raise CliError(f"nothing to resume: {resume} does not exist")
    _, report = run_training(cfg, out_dir=out, resume_from=resume, stop_at=args.stop_at)
    print(f"trained {len(report.rows)} steps -> {out}")
    return EXIT_OK


# --- eval -------------------------------------------------------------------

def _load(path):
    model, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])
    if model.config.vocab_size != VOCAB_SIZE:
        raise CliError(f"checkpoint vocab size {model.config.vocab_size} != {VOCAB_SIZE}")
    return model, cfg


def _criterion(args, n, task):
    t_max = args.t_max or default_t_max(steps_for(task, n, len1=2))
    if args.criterion == "oracle":
        return Oracle()
    if args.criterion == "maxconf":
        return MaxConfidence(t_max)
    return Threshold(args.tau, t_max)


def reference_accuracy(task, n: int, samples: int, seed: int) -> float:
    """Exact match of the looped reference program (direct oracle where none exists)."""
    task = TaskId.parse(task)
    hits = 0
    for inst in fixed_length_batch(task, n, samples, seed, schedule="proposition").instances:
        if task in LOOP_PROGRAMS:
            pred = LOOP_PROGRAMS[task](inst.input, inst.steps)
        else:
            pred = task_oracle(task, inst.input)
        hits += exact_match(pred, inst)
    return hits / samples


def cmd_eval(args) -> int:
    lengths = parse_lengths(args.lengths)
    out_rows = []
    if args.reference:
        if not args.task:
            raise CliError("--reference needs --task")
        task = TaskId.parse(args.task)
        for n in lengths:
            out_rows.append(ResultRow(task.value, "reference", 0, n,
                                      reference_accuracy(task, n, args.samples, args.seed)))
        meta = {"source": "reference", "seed": args.seed, "samples": args.samples}
        ceiling = None
    else:
        if not args.checkpoint:
            raise CliError("eval needs a checkpoint (or --reference)")
        model, cfg = _load(args.checkpoint)
        if args.task and TaskId.parse(args.task) is not cfg.task_id:
            raise CliError(f"checkpoint was trained on {cfg.task_id.value}, not {TaskId.parse(args.task).value}")
        for n in lengths:
            crit = _criterion(args, n, cfg.task)
            out_rows += evaluate_lengths(model, cfg, [n], args.samples, args.seed, crit)
        ceiling = cfg.ceiling
        meta = {"config_hash": cfg.hash(), "seed": cfg.seed, "eval_seed": args.seed, "samples": args.samples,
                "criterion": args.criterion, "train_ceiling": cfg.ceiling}
    text = rows_csv(out_rows, meta)
    _emit(args.out, text)
    if args.svg and ceiling is not None:
        Path(args.svg).write_text(accuracy_svg([r.length for r in out_rows], [r.exact_match for r in out_rows],
                                               ceiling, f"{out_rows[0].task} exact match by length"))
    return EXIT_OK


def _emit(path, text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --- stopcurve --------------------------------------------------------------

def cmd_stopcurve(args) -> int:
    model, cfg = _load(args.checkpoint)
    n = args.length
    t_max = args.t_max or default_t_max(steps_for(cfg.task, n, len1=2))
    batch = eval_batch(cfg, n, args.samples, args.seed)
    curve = stopping_curve(model, batch, t_max)
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.hash()} seed={cfg.seed} eval_seed={args.seed} length={n} "
              f"t_max={t_max} chosen_step={curve.chosen_step}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "self_ce", "exact_match"])
    for s, c, a in curve.rows():
        w.writerow([s, repr(float(c)), repr(float(a))])
    out = Path(args.out) if args.out else output_root() / f"stopcurve-{cfg.task}-n{n}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(buf.getvalue())
    svg = out.with_suffix(".svg")
    svg.write_text(stopping_curve_svg(curve.steps, curve.self_ce, curve.exact_match, curve.chosen_step,
                                      f"{cfg.task}, length {n}"))
    print(f"chosen step {curve.chosen_step} -> {out}, {svg}")
    return EXIT_OK


# --- oracle-check -----------------------------------------------------------

def cmd_oracle_check(args) -> int:
    if args.n_max < 1:
        raise CliError("--n-max must be >= 1")
    tasks = list(LOOP_PROGRAMS) if args.task == "all" else [TaskId.parse(args.task)]
    status = EXIT_OK
    for task in tasks:
        res = check_task(task, args.n_max, seed=args.seed)
        counts = " ".join(f"n={n}:{c}" for n, c in res.by_length.items())
        if res.ok:
            print(f"{task.value}: {res.cases} cases pass ({counts})")
        else:
            query, got, want = res.counterexample
            print(f"{task.value}: MISMATCH after {res.cases} cases\n  query   {query}\n"
                  f"  program {got}\n  oracle  {want}")
            status = EXIT_VERIFY
    return status


# --- sweep ------------------------------------------------------------------

def read_sweep(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"sweep file not found: {p}")
    spec = {}
    for line in p.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            if "=" not in line:
                raise CliError(f"bad sweep line {line!r}")
            k, v = line.split("=", 1)
            spec[k.strip()] = v.strip()
    unknown = set(spec) - {"configs", "seeds", "lengths", "samples", "out"}
    if unknown:
        raise CliError(f"unknown sweep key {sorted(unknown)[0]}")
    if not spec.get("configs"):
        raise CliError("sweep needs configs=")
    configs = [p.parent / c.strip() for c in spec["configs"].split(",") if c.strip()]
    return {
        "configs": configs,
        "seeds": [int(s) for s in spec.get("seeds", "0").split(",")],
        "lengths": parse_lengths(spec.get("lengths", "1-8")),
        "samples": int(spec.get("samples", DEFAULT_SAMPLES)),
        "out": spec.get("out"),
    }


def cmd_sweep(args) -> int:
    spec = read_sweep(args.spec)
    root = Path(args.out or spec["out"] or output_root() / Path(args.spec).stem)
    rows = []
    for path in spec["configs"]:
        if not path.exists():
            raise CliError(f"config file not found: {path}")
        base = TrainConfig.from_file(path)
        for seed in spec["seeds"]:
            cfg = TrainConfig.from_dict({**base.to_dict(), "seed": seed})
            run = root / path.stem / f"seed{seed}"
            done = run / "model.ckpt"
            if done.exists() and load_checkpoint(done)[1]["config"] == cfg.to_dict():
                model, _ = load_checkpoint(done)
            else:
                model, _ = run_training(cfg, out_dir=run)
            rows += evaluate_lengths(model, cfg, spec["lengths"], spec["samples"], EVAL_SEED)
    meta = {"spec": Path(args.spec).name, "eval_seed": EVAL_SEED, "samples": spec["samples"]}
    (root / "results.csv").write_text(rows_csv(rows, meta))
    (root / "summary.csv").write_text(aggregate_csv(rows, meta))
    sys.stdout.write((root / "summary.csv").read_text())
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="looptf", description="Looped transformer length-generalization experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one config")
    p.add_argument("config", nargs="?", help="key=value config file")
    p.add_argument("--out", help="run directory (default $LOOPTF_OUT/<config>-seed<k>)")
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    p.add_argument("--resume", action="store_true", help="continue from <out>/model.ckpt")
    p.add_argument("--stop-at", type=int, help="stop (and checkpoint) at this step")
    _config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="exact match per test length")
    p.add_argument("checkpoint", nargs="?")
    p.add_argument("--task", help="expected task; must match the checkpoint")
    p.add_argument("--lengths", default="1-16")
    p.add_argument("--criterion", choices=["oracle", "maxconf", "threshold"], default="oracle")
    p.add_argument("--t-max", type=int, help="loop budget for confidence rules (default 2T+2)")
    p.add_argument("--tau", type=float, default=0.01, help="threshold for --criterion threshold")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--seed", type=int, default=EVAL_SEED)
    p.add_argument("--reference", action="store_true", help="score the reference program instead of a model")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--svg", help="also write an accuracy-by-length plot")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("stopcurve", help="self cross-entropy and accuracy per loop step")
    p.add_argument("checkpoint")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--t-max", type=int)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--seed", type=int, default=EVAL_SEED)
    p.add_argument("--out", help="CSV path; the SVG goes next to it")
    p.set_defaults(fn=cmd_stopcurve)

    p = sub.add_parser("oracle-check", help="reference programs vs direct oracles")
    p.add_argument("task", help="parity, copy, addition or all")
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_oracle_check)

    p = sub.add_parser("sweep", help="train configs x seeds and tabulate mean and stderr")
    p.add_argument("spec", help="key=value file: configs, seeds, lengths, samples, out")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ConfigError, CliError, CheckpointError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
