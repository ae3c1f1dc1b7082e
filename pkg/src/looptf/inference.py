"""Adaptive-depth inference: stopping rules, exact match and stopping curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from looptf.autodiff import log_softmax, no_grad
from looptf.model import LoopedModel, decode_greedy
from looptf.tasks import Batch, TaskInstance
from looptf.vocab import IGNORE


@dataclass(frozen=True)
class Oracle:
    """Stop at the ground-truth step count carried by each instance."""


@dataclass(frozen=True)
class MaxConfidence:
    t_max: int

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")


@dataclass(frozen=True)
class Threshold:
    """Stop at the first step whose self cross-entropy falls below ``tau``."""
    tau: float
    t_max: int

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")


StopCriterion = Oracle | MaxConfidence | Threshold


def default_t_max(steps_at_test: int) -> int:
    return 2 * steps_at_test + 2


def self_consistency_ce(logits: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Per-row mean cross-entropy of logits against their own greedy decode.

    ``region`` ([B, L], 0/1) picks the answer positions that are scored.
    """
    lp = log_softmax(np.asarray(logits, dtype=np.float64))
    best = lp.max(axis=-1)
    region = np.asarray(region, dtype=np.float64)
    return -(best * region).sum(axis=-1) / np.maximum(region.sum(axis=-1), 1.0)


def exact_match(pred, target: TaskInstance) -> bool:
    pred = np.asarray(pred)
    if len(pred) != target.total_length:
        raise ValueError(f"prediction length {len(pred)} != target length {target.total_length}")
    on = target.loss_mask.astype(bool)
    return bool(np.array_equal(pred[on], target.target[on]))


def batch_exact_match(pred: np.ndarray, batch: Batch) -> np.ndarray:
    """Row-wise exact match over each row's own supervised positions."""
    on = batch.mask.astype(bool)
    return np.all((pred == batch.targets) | ~on, axis=-1)


def _answer_region(batch: Batch) -> np.ndarray:
    return batch.mask


@dataclass
class InferenceResult:
    decoded: np.ndarray   # [B, L]
    chosen_step: np.ndarray  # [B]
    self_ce: np.ndarray | None = None  # [T_max, B] for confidence rules


def infer(model: LoopedModel, batch: Batch, criterion: StopCriterion) -> InferenceResult:
    """Run the loop under ``criterion`` and greedy-decode at the chosen step."""
    with no_grad():
        if isinstance(criterion, Oracle):
            logits = model.forward_steps(batch.inputs, batch.steps).data
            return InferenceResult(decode_greedy(logits), batch.steps.copy())
        out = model.loop_forward(batch.inputs, criterion.t_max, step_outputs=True)
    step_logits = np.stack([lg.data for lg in out.step_logits])  # [T, B, L, V]
    ce = np.stack([self_consistency_ce(lg, _answer_region(batch)) for lg in step_logits])
    if isinstance(criterion, MaxConfidence):
        chosen = ce.argmin(axis=0)  # first minimum wins ties
    else:
        below = ce < criterion.tau
        chosen = np.where(below.any(axis=0), below.argmax(axis=0), criterion.t_max - 1)
    rows = np.arange(ce.shape[1])
    decoded = decode_greedy(step_logits[chosen, rows])
    return InferenceResult(decoded, chosen + 1, ce)


@dataclass
class StoppingCurve:
    steps: np.ndarray        # 1..T_max
    self_ce: np.ndarray      # mean self cross-entropy per step
    exact_match: np.ndarray  # accuracy per step
    chosen_step: int         # argmin of the mean self cross-entropy

    def rows(self):
        return list(zip(self.steps.tolist(), self.self_ce.tolist(), self.exact_match.tolist()))


def stopping_curve(model: LoopedModel, batch: Batch, t_max: int) -> StoppingCurve:
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    with no_grad():
        out = model.loop_forward(batch.inputs, t_max, step_outputs=True)
    ce, acc = [], []
    for lg in out.step_logits:
        ce.append(self_consistency_ce(lg.data, _answer_region(batch)).mean())
        acc.append(batch_exact_match(decode_greedy(lg), batch).mean())
    ce, acc = np.array(ce), np.array(acc)
    return StoppingCurve(np.arange(1, t_max + 1), ce, acc, int(ce.argmin()) + 1)


def generate_ntp(model: LoopedModel, batch: Batch, steps: int = 1) -> np.ndarray:
    """Greedy autoregressive decoding of each row's answer from its query prefix.

    Returns predictions laid out like ``batch.targets`` (``*`` before the
    answer) so ``batch_exact_match`` applies directly.
    """
    B, L = batch.inputs.shape
    pred = np.full((B, L), IGNORE, dtype=np.int64)
    groups: dict[tuple, list] = {}
    for i, inst in enumerate(batch.instances):
        groups.setdefault((inst.answer_start, inst.total_length), []).append(i)
    with no_grad():
        for (start, length), idx in groups.items():
            idx = np.array(idx)
            seq = batch.inputs[idx, :start + 1].copy()
            for j in range(start, length):
                logits = model.loop_forward(seq, steps).logits.data
                nxt = logits[:, -1].argmax(axis=-1)
                pred[idx, j] = nxt
                seq = np.concatenate([seq, nxt[:, None]], axis=1)
    return pred


def predict(model: LoopedModel, batch: Batch, criterion: StopCriterion = Oracle(),
            ntp: bool = False, fixed_steps: int | None = None) -> np.ndarray:
    """Decoded predictions for any training mode's evaluation layout."""
    if ntp:
        return generate_ntp(model, batch, fixed_steps or 1)
    if fixed_steps is not None:
        with no_grad():
            return decode_greedy(model.loop_forward(batch.inputs, fixed_steps).logits)
    return infer(model, batch, criterion).decoded


def accuracy(pred: np.ndarray, batch: Batch) -> float:
    return float(batch_exact_match(pred, batch).mean())
