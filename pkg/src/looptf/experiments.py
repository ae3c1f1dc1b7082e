"""Per-length evaluation tables, seed aggregation and the acceptance targets."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from looptf.inference import Oracle
from looptf.train import TrainConfig, evaluate_model, run_training

log = logging.getLogger(__name__)

EVAL_SEED = 1_000_003  # disjoint from the (seed, step) streams used in training
DEFAULT_SAMPLES = 1024
CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def output_root(default="runs") -> Path:
    return Path(os.environ.get("LOOPTF_OUT", default))


@dataclass(frozen=True)
class ResultRow:
    task: str
    mode: str
    seed: int
    length: int
    exact_match: float


def evaluate_lengths(model, config: TrainConfig, lengths, samples: int = DEFAULT_SAMPLES,
                     seed: int = EVAL_SEED, criterion=Oracle()) -> list[ResultRow]:
    rows = []
    for n in lengths:
        acc = evaluate_model(model, config, n, samples, seed, criterion)
        rows.append(ResultRow(config.task, config.mode, config.seed, n, acc))
    return rows


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        raise ValueError("no values to aggregate")
    if len(v) == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def aggregate(rows: list[ResultRow]) -> list[tuple]:
    """(task, mode, length, mean, stderr, seeds) per (task, mode, length)."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r.task, r.mode, r.length), []).append(r.exact_match)
    out = []
    for (task, mode, n), vals in sorted(groups.items()):
        m, se = mean_stderr(vals)
        out.append((task, mode, n, m, se, len(vals)))
    return out


def rows_csv(rows: list[ResultRow], meta: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "mode", "seed", "length", "exact_match"])
    for r in rows:
        w.writerow([r.task, r.mode, r.seed, r.length, repr(float(r.exact_match))])
    return buf.getvalue()


def aggregate_csv(rows: list[ResultRow], meta: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "mode", "length", "mean", "stderr", "seeds"])
    for task, mode, n, m, se, k in aggregate(rows):
        w.writerow([task, mode, n, repr(m), repr(se), k])
    return buf.getvalue()


# --- acceptance targets -----------------------------------------------------

@dataclass(frozen=True)
class Target:
    name: str
    config: str         # file under configs/
    lengths: tuple
    threshold: float | None  # mean exact match needed; None records the score only
    seeds: tuple = (0, 1, 2)


TARGETS = {
    "parity": Target("parity", "parity_desk.cfg", tuple(range(9, 17)), 0.90),
    "copy": Target("copy", "copy_desk.cfg", tuple(range(9, 15)), 0.90),
    "parity_ntp": Target("parity_ntp", "parity_ntp_desk.cfg", (12,), None, seeds=(0,)),
}


def target_config(target: Target, seed: int) -> TrainConfig:
    base = TrainConfig.from_file(CONFIG_DIR / target.config)
    d = base.to_dict()
    d["seed"] = seed
    return TrainConfig.from_dict(d)


def run_dir(root, target: Target, seed: int) -> Path:
    return Path(root) / target.name / f"seed{seed}"


def run_target(target: Target, root, samples: int = 512, stop_on_pass: bool = True) -> list[dict]:
    """Train each seed (reusing finished runs) and score it on the target lengths."""
    summaries = []
    for seed in target.seeds:
        cfg = target_config(target, seed)
        out = run_dir(root, target, seed)
        summary_path = out / "summary.json"
        if summary_path.exists() and json.loads(summary_path.read_text())["config_hash"] == cfg.hash():
            summary = json.loads(summary_path.read_text())
            log.info("%s seed %d: cached, mean %.3f", target.name, seed, summary["mean"])
        else:
            model, report = run_training(cfg, out_dir=out, log_every=500)
            rows = evaluate_lengths(model, cfg, target.lengths, samples)
            accs = {r.length: r.exact_match for r in rows}
            summary = {"target": target.name, "seed": seed, "config_hash": cfg.hash(),
                       "samples": samples, "seconds": report.seconds,
                       "per_length": accs, "mean": float(np.mean(list(accs.values())))}
            summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
            log.info("%s seed %d: mean %.3f %s", target.name, seed, summary["mean"], accs)
        summaries.append(summary)
        if stop_on_pass and target.threshold is not None and summary["mean"] >= target.threshold:
            break
    return summaries
