"""Step-supervised looped training and the baseline training modes."""

from __future__ import annotations

import csv
import enum
import io
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from looptf import autodiff as ad
from looptf.checkpoint import config_hash, load_checkpoint, save_checkpoint
from looptf.inference import Oracle, accuracy, predict
from looptf.model import LoopedModel, ModelConfig
from looptf.optim import AdamW, cosine_lr
from looptf.programs import TaskId
from looptf.tasks import (Batch, EncodingMode, collate, curriculum_start, curriculum_tick,
                          fixed_length_batch, sample_batch, steps_for, steps_until_ceiling)
from looptf.vocab import VOCAB_SIZE

log = logging.getLogger(__name__)


class TrainMode(str, enum.Enum):
    LOOPED = "looped"
    LOOPED_NO_INJECTION = "looped_noinj"
    FAP = "fap"
    FAP_PAUSE = "fap_pause"
    NTP = "ntp"
    NTP_PAUSE = "ntp_pause"
    NTP_LOOP = "ntp_loop"

    @property
    def encoding(self) -> EncodingMode:
        return {
            TrainMode.FAP_PAUSE: EncodingMode.FAP_PAUSE,
            TrainMode.NTP: EncodingMode.NTP,
            TrainMode.NTP_LOOP: EncodingMode.NTP,
            TrainMode.NTP_PAUSE: EncodingMode.NTP_PAUSE,
        }.get(self, EncodingMode.FAP)

    @property
    def adaptive(self) -> bool:
        return self in (TrainMode.LOOPED, TrainMode.LOOPED_NO_INJECTION)

    @property
    def fixed_depth(self) -> bool:
        return self in (TrainMode.FAP, TrainMode.FAP_PAUSE, TrainMode.NTP, TrainMode.NTP_PAUSE)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    task: str = "parity"
    mode: str = "looped"
    dim: int = 64
    heads: int = 8
    block_depth: int = 1
    batch: int = 64
    steps: int = 20000
    interval: int = 250
    ceiling: int = 8
    seed: int = 0
    inject: bool = True
    pause_tokens: int = 20
    step_schedule: str = "paper"
    lr: float = 1e-4
    weight_decay: float = 0.01
    clip: float = 0.0  # 0 disables gradient-norm clipping
    depth_factor: int = 20  # fixed-depth baselines use depth_factor * block_depth layers
    ntp_loop_steps: int = 20
    eval_every: int = 500
    eval_samples: int = 256
    eval_lengths: str = ""  # comma list; empty means the ceiling
    checkpoint_every: int = 0  # 0 = only at the end

    def __post_init__(self):
        try:
            TaskId.parse(self.task)
            TrainMode(self.mode)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.dim % self.heads:
            raise ConfigError("dim must be divisible by heads")
        for k in ("block_depth", "batch", "interval", "ceiling"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be >= 1")

    @property
    def train_mode(self) -> TrainMode:
        return TrainMode(self.mode)

    @property
    def task_id(self) -> TaskId:
        return TaskId.parse(self.task)

    def probe_lengths(self) -> list[int]:
        if not self.eval_lengths:
            return [self.ceiling]
        return [int(x) for x in str(self.eval_lengths).split(",") if x.strip()]

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict()).hex()[:16]

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(f"unknown config key: {key}")
            kw[key] = _coerce(known[key].type, key, value)
        return cls(**kw)

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        d = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value")
            k, v = line.split("=", 1)
            d[k.strip()] = v.strip()
        return cls.from_dict(d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text())


def _fmt(v) -> str:
    return str(v).lower() if isinstance(v, bool) else str(v)


def _coerce(typ, key, value):
    if not isinstance(value, str):
        return value
    try:
        if typ in ("bool", bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ in ("int", int):
            return int(value)
        if typ in ("float", float):
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


# --- model / batch plumbing -------------------------------------------------

def model_config(config: TrainConfig) -> ModelConfig:
    mode = config.train_mode
    depth = config.block_depth * config.depth_factor if mode.fixed_depth else config.block_depth
    inject = config.inject and mode is not TrainMode.LOOPED_NO_INJECTION
    return ModelConfig(vocab_size=VOCAB_SIZE, embed_dim=config.dim, heads=config.heads,
                       block_depth=depth, input_injection=inject)


def build_model(config: TrainConfig) -> LoopedModel:
    return LoopedModel(model_config(config), seed=config.seed)


def loop_steps(config: TrainConfig, batch: Batch) -> np.ndarray:
    """Loop count per row used for this mode's forward pass."""
    mode = config.train_mode
    if mode.adaptive:
        return batch.steps
    k = config.ntp_loop_steps if mode is TrainMode.NTP_LOOP else 1
    return np.full(len(batch), k, dtype=np.int64)


def batch_loss(model: LoopedModel, batch: Batch, config: TrainConfig) -> ad.Tensor:
    if batch.steps.shape != (batch.inputs.shape[0],) or (batch.steps < 1).any():
        raise ValueError("batch step counts must give one positive T per row")
    steps = loop_steps(config, batch)
    if config.train_mode.adaptive:
        logits = model.forward_steps(batch.inputs, steps)
    else:
        logits = model.loop_forward(batch.inputs, int(steps[0])).logits
    return ad.cross_entropy_masked(logits, batch.targets, batch.mask)


def group_by_steps(batch: Batch) -> dict[int, Batch]:
    """Split a batch into sub-batches sharing one step count, keeping row order."""
    groups: dict[int, list] = {}
    for i, t in enumerate(batch.steps.tolist()):
        groups.setdefault(int(t), []).append(i)
    out = {}
    for t, idx in sorted(groups.items()):
        idx = np.array(idx)
        out[t] = Batch(batch.inputs[idx], batch.targets[idx], batch.mask[idx],
                       batch.steps[idx], batch.lengths[idx], [batch.instances[i] for i in idx])
    return out


def grouped_loss(model: LoopedModel, batch: Batch) -> ad.Tensor:
    """Masked cross-entropy computed group by group (one loop run per T).

    Per-group means are recombined with weights proportional to each
    group's supervised-position count, giving the batch mean.
    """
    total = float(batch.mask.sum())
    loss = None
    for t, sub in group_by_steps(batch).items():
        logits = model.loop_forward(sub.inputs, t).logits
        part = ad.cross_entropy_masked(logits, sub.targets, sub.mask) * (float(sub.mask.sum()) / total)
        loss = part if loss is None else loss + part
    return loss


def train_step(model: LoopedModel, optimizer: AdamW, batch: Batch, config: TrainConfig, lr: float) -> float:
    optimizer.zero_grad()
    loss = batch_loss(model, batch, config)
    loss.backward()
    optimizer.step(lr)
    return float(loss.data)


def make_batch(config: TrainConfig, step: int, max_length: int) -> Batch:
    return sample_batch(config.task, config.batch, max_length, config.seed, step,
                        mode=config.train_mode.encoding, pause_tokens=config.pause_tokens,
                        schedule=config.step_schedule)


def eval_batch(config: TrainConfig, n: int, count: int, seed: int) -> Batch:
    return fixed_length_batch(config.task, n, count, seed, mode=config.train_mode.encoding,
                              pause_tokens=config.pause_tokens, schedule=config.step_schedule)


def evaluate_model(model: LoopedModel, config: TrainConfig, n: int, count: int, seed: int,
                   criterion=Oracle()) -> float:
    batch = eval_batch(config, n, count, seed)
    mode = config.train_mode
    if mode.adaptive:
        pred = predict(model, batch, criterion)
    elif mode.encoding.is_ntp:
        pred = predict(model, batch, ntp=True, fixed_steps=int(loop_steps(config, batch)[0]))
    else:
        pred = predict(model, batch, fixed_steps=1)
    return accuracy(pred, batch)


# --- training loop ----------------------------------------------------------

@dataclass
class TrainReport:
    config: TrainConfig
    rows: list = field(default_factory=list)   # (step, loss, lr, cur_max_len)
    evals: list = field(default_factory=list)  # (step, length, exact_match)
    seconds: float = 0.0

    def header(self) -> str:
        return f"# config_hash={self.config.hash()} seed={self.config.seed}\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.header())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss", "lr", "cur_max_len"])
        for step, loss, lr, m in self.rows:
            w.writerow([step, repr(float(loss)), repr(float(lr)), m])
        return buf.getvalue()

    def evals_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.header())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "length", "exact_match"])
        for row in self.evals:
            w.writerow(row)
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "train_report.csv").write_text(self.to_csv())
        (out / "eval_report.csv").write_text(self.evals_csv())


def read_report_rows(path) -> list[tuple]:
    rows = []
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    for r in csv.DictReader(lines):
        rows.append((int(r["step"]), float(r["loss"]), float(r["lr"]), int(r["cur_max_len"])))
    return rows


def run_training(config: TrainConfig, out_dir=None, resume_from=None, stop_at: int | None = None,
                 log_every: int = 500) -> tuple[LoopedModel, TrainReport]:
    """Train under the length curriculum with cosine decay after the ceiling.

    ``resume_from`` continues from a checkpoint (parameters, optimizer and
    step); ``stop_at`` ends early at that step, checkpointing there. Data for
    step ``s`` depends only on ``(seed, s)``, so a resumed run reproduces the
    uninterrupted loss trace exactly.
    """
    report = TrainReport(config)
    start = 0
    if resume_from is not None:
        model, meta, opt = load_checkpoint(resume_from, with_optimizer=True)
        if meta["config"] != config.to_dict():
            raise ConfigError("checkpoint was written by a different config")
        start = meta["step"]
        report.rows = [tuple(r) for r in meta["extra"].get("rows", [])]
        report.evals = [tuple(r) for r in meta["extra"].get("evals", [])]
    else:
        model = build_model(config)
        opt = AdamW(model.parameters(), weight_decay=config.weight_decay,
                    clip_norm=config.clip or None)
    decay_start = steps_until_ceiling(config.interval, config.ceiling)
    cur = curriculum_start(config.interval, config.ceiling)
    end = config.steps if stop_at is None else min(stop_at, config.steps)
    t0 = time.time()
    for step in range(start, end):
        cur = curriculum_tick(cur, step)
        lr = cosine_lr(step, decay_start, config.steps, peak=config.lr)
        batch = make_batch(config, step, cur.current_max_length)
        loss = train_step(model, opt, batch, config, lr)
        report.rows.append((step, loss, lr, cur.current_max_length))
        if log_every and step % log_every == 0:
            log.info("step %d loss %.4f lr %.2e len %d", step, loss, lr, cur.current_max_length)
        done = step + 1
        if config.eval_every and done % config.eval_every == 0:
            for n in config.probe_lengths():
                acc = evaluate_model(model, config, n, config.eval_samples, seed=config.seed + 7919 * done)
                report.evals.append((done, n, acc))
                log.info("step %d eval n=%d exact_match %.3f", done, n, acc)
        if out_dir is not None and config.checkpoint_every and done % config.checkpoint_every == 0:
            _save(out_dir, model, config, opt, done, report)
    report.seconds = time.time() - t0
    if out_dir is not None:
        _save(out_dir, model, config, opt, end, report)
        report.write(out_dir)
        (Path(out_dir) / "config.txt").write_text(config.to_text())
    return model, report


def _save(out_dir, model, config, opt, step, report):
    extra = {"rows": [list(r) for r in report.rows], "evals": [list(r) for r in report.evals]}
    save_checkpoint(Path(out_dir) / "model.ckpt", model, config.to_dict(), opt, step, extra)


def step_coverage(config: TrainConfig, start: int, stop: int) -> set[int]:
    """Distinct ground-truth step counts seen in batches ``start..stop-1``."""
    seen: set[int] = set()
    cur = curriculum_start(config.interval, config.ceiling)
    for step in range(start, stop):
        cur = curriculum_tick(cur, step)
        seen.update(make_batch(config, step, cur.current_max_length).steps.tolist())
    return seen


def max_train_steps(config: TrainConfig) -> int:
    return steps_for(config.task, config.ceiling, len1=2, schedule=config.step_schedule)


__all__ = ["TrainConfig", "TrainMode", "TrainReport", "ConfigError", "build_model", "batch_loss",
           "group_by_steps", "grouped_loss", "train_step", "run_training", "evaluate_model",
           "collate", "model_config", "read_report_rows", "make_batch", "eval_batch", "loop_steps",
           "step_coverage", "max_train_steps"]
