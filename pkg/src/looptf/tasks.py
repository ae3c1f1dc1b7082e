"""Online synthetic data: instances, encodings, batches and the length curriculum."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from looptf.programs import TaskId, answer_tokens, parse_query, task_oracle
from looptf.vocab import EOQ, EOS, IGNORE, PAUSE, PLUS, TIMES, decode, encode

UNIQUE_ALPHABET = np.arange(2, 52)
DEFAULT_PAUSE_TOKENS = 20


class EncodingMode(str, enum.Enum):
    FAP = "fap"
    NTP = "ntp"
    FAP_PAUSE = "fap_pause"
    NTP_PAUSE = "ntp_pause"

    @property
    def is_ntp(self) -> bool:
        return self in (EncodingMode.NTP, EncodingMode.NTP_PAUSE)

    @property
    def has_pause(self) -> bool:
        return self in (EncodingMode.FAP_PAUSE, EncodingMode.NTP_PAUSE)


@dataclass(frozen=True)
class TaskInstance:
    task: TaskId
    n: int
    steps: int
    input: np.ndarray
    target: np.ndarray
    loss_mask: np.ndarray
    mode: EncodingMode = EncodingMode.FAP
    answer_start: int = 0  # first supervised position
    len1: int | None = None  # first operand length (multiplication only)

    @property
    def total_length(self) -> int:
        return len(self.input)

    def __post_init__(self):
        if not len(self.input) == len(self.target) == len(self.loss_mask):
            raise ValueError("input, target and loss_mask must share one length")


def steps_for(task, n: int, len1: int | None = None, schedule: str = "paper") -> int:
    """Ground-truth loop count for a problem of length ``n``.

    ``schedule="proposition"`` uses ``n + 1`` for addition (the step count of
    the looped reference program); ``"paper"`` uses ``n`` as in training.
    """
    task = TaskId.parse(task)
    if n < 1:
        raise ValueError("problem length must be >= 1")
    if task is TaskId.MULTIPLICATION:
        if len1 is None:
            raise ValueError("multiplication needs the first operand length")
        return len1 * n
    if task is TaskId.ADDITION and schedule == "proposition":
        return n + 1
    if schedule not in ("paper", "proposition"):
        raise ValueError(f"unknown step schedule {schedule!r}")
    return n


def max_answer_length(task, n: int, len1: int | None = None) -> int:
    task = TaskId.parse(task)
    return {
        TaskId.PARITY: 1,
        TaskId.COPY: n,
        TaskId.ADDITION: n + 1,
        TaskId.BINARY_SUM: max(1, n.bit_length()),
        TaskId.MULTIPLICATION: (len1 or 2) + n + 1,
        TaskId.UNIQUE_SET: n,
    }[task]


def padding_for(task, n: int, len1: int | None = None, slack: int = 0) -> int:
    """EOS count after EOQ: the minimum that fits any answer, plus ``slack``."""
    return max_answer_length(task, n, len1) - 1 + slack


def make_query(task, operands, padding: int) -> list[int]:
    task = TaskId.parse(task)
    if task is TaskId.ADDITION:
        x, y = operands
        body = list(x) + [PLUS] + list(y)
    elif task is TaskId.MULTIPLICATION:
        a, b = operands
        body = list(a) + [TIMES] + list(b)
    else:
        body = list(operands)
    return body + [EOQ] + [EOS] * padding


def _sample_operands(task: TaskId, n: int, rng: np.random.Generator, len1: int | None):
    bits = lambda k: rng.integers(0, 2, size=k).tolist()
    if task is TaskId.ADDITION:
        return bits(n), bits(n)
    if task is TaskId.MULTIPLICATION:
        return bits(len1), bits(n)
    if task is TaskId.UNIQUE_SET:
        return rng.choice(UNIQUE_ALPHABET, size=n).tolist()
    return bits(n)


def encode_query(task, query, mode=EncodingMode.FAP, pause_tokens: int = DEFAULT_PAUSE_TOKENS,
                 n: int | None = None, steps: int | None = None, len1: int | None = None,
                 schedule: str = "paper") -> TaskInstance:
    """Lay out a FAP query (``body > # ...``) in the requested encoding."""
    task = TaskId.parse(task)
    mode = EncodingMode(mode)
    query = np.asarray(query, dtype=np.int64)
    eoq = int(np.flatnonzero(query == EOQ)[0])
    n_pause = pause_tokens if mode.has_pause else 0
    start = eoq + n_pause
    if n is None:
        parsed = parse_query(task, query)
        n = parsed["n"]
        if task is TaskId.MULTIPLICATION:
            len1 = len(parsed["a"])
    if mode.is_ntp:
        ans = answer_tokens(task, query)
        full = np.concatenate([query[:eoq + 1], np.full(n_pause, PAUSE), ans, [EOS]]).astype(np.int64)
        inp = full[:-1]
        tgt = full[1:].copy()
        tgt[:start] = IGNORE
    else:
        tgt = task_oracle(task, query)
        inp = np.insert(query, eoq + 1, np.full(n_pause, PAUSE))
        tgt = np.insert(tgt, eoq, np.full(n_pause, IGNORE))
    loss_mask = (np.arange(len(inp)) >= start).astype(np.int64)
    return TaskInstance(task=task, n=n, steps=steps if steps is not None else steps_for(task, n, len1, schedule),
                        input=inp, target=tgt, loss_mask=loss_mask, mode=mode, answer_start=start, len1=len1)


def sample_instance(task, n: int, rng: np.random.Generator, mode=EncodingMode.FAP,
                    pause_tokens: int = DEFAULT_PAUSE_TOKENS, slack: int = 0,
                    schedule: str = "paper") -> TaskInstance:
    """Draw one problem of length ``n`` with uniformly random characters."""
    task = TaskId.parse(task)
    if n < 1:
        raise ValueError("problem length must be >= 1")
    len1 = int(rng.integers(1, 3)) if task is TaskId.MULTIPLICATION else None
    operands = _sample_operands(task, n, rng, len1)
    query = make_query(task, operands, padding_for(task, n, len1, slack))
    return encode_query(task, query, mode, pause_tokens, n=n,
                        steps=steps_for(task, n, len1, schedule), len1=len1)


def row_rng(seed: int, step: int, row: int) -> np.random.Generator:
    """Independent generator for one batch row; derived, never shared."""
    return np.random.default_rng(np.random.SeedSequence([seed, step, row]))


def draw_length(rng: np.random.Generator, max_length: int, min_length: int = 1) -> int:
    return int(rng.integers(min_length, max_length + 1))


@dataclass
class Batch:
    inputs: np.ndarray   # [B, L] int
    targets: np.ndarray  # [B, L] int
    mask: np.ndarray     # [B, L] 0/1
    steps: np.ndarray    # [B]
    lengths: np.ndarray  # [B] problem lengths
    instances: list

    def __len__(self):
        return len(self.instances)


def collate(instances: list[TaskInstance]) -> Batch:
    """Right-pad rows with EOS to a shared length.

    FAP rows supervise the extra EOS (trailing EOS are part of the answer
    layout); NTP rows stop supervising after their first EOS.
    """
    L = max(inst.total_length for inst in instances)
    B = len(instances)
    inputs = np.full((B, L), EOS, dtype=np.int64)
    targets = np.full((B, L), EOS, dtype=np.int64)
    mask = np.zeros((B, L), dtype=np.int64)
    for i, inst in enumerate(instances):
        k = inst.total_length
        inputs[i, :k] = inst.input
        targets[i, :k] = inst.target
        mask[i, :k] = inst.loss_mask
        if not inst.mode.is_ntp:
            mask[i, k:] = 1
    steps = np.array([inst.steps for inst in instances], dtype=np.int64)
    lengths = np.array([inst.n for inst in instances], dtype=np.int64)
    return Batch(inputs, targets, mask, steps, lengths, list(instances))


def sample_batch(task, batch_size: int, max_length: int, seed: int, step: int,
                 mode=EncodingMode.FAP, min_length: int = 1, **kw) -> Batch:
    rows = []
    for r in range(batch_size):
        rng = row_rng(seed, step, r)
        n = draw_length(rng, max_length, min_length)
        rows.append(sample_instance(task, n, rng, mode, **kw))
    return collate(rows)


def fixed_length_batch(task, n: int, count: int, seed: int, mode=EncodingMode.FAP, **kw) -> Batch:
    """Deterministic evaluation set of ``count`` problems of length ``n``."""
    rows = [sample_instance(task, n, row_rng(seed, n, r), mode, **kw) for r in range(count)]
    return collate(rows)


@dataclass(frozen=True)
class CurriculumState:
    current_max_length: int
    interval: int
    ceiling: int


def curriculum_tick(state: CurriculumState, global_step: int) -> CurriculumState:
    m = min(state.ceiling, 1 + global_step // state.interval)
    return replace(state, current_max_length=max(state.current_max_length, m))


def curriculum_start(interval: int, ceiling: int) -> CurriculumState:
    return CurriculumState(1, interval, ceiling)


def steps_until_ceiling(interval: int, ceiling: int) -> int:
    return (ceiling - 1) * interval


# --- instance dump ----------------------------------------------------------

def dump_instance(inst: TaskInstance) -> str:
    mask = " ".join(str(int(m)) for m in inst.loss_mask)
    return "\t".join([inst.task.value, str(inst.n), str(inst.steps),
                      decode(inst.input), decode(inst.target), mask])


def load_instance(line: str, mode=EncodingMode.FAP) -> TaskInstance:
    task, n, steps, inp, tgt, mask = line.rstrip("\n").split("\t")
    loss_mask = np.array([int(m) for m in mask.split()], dtype=np.int64)
    return TaskInstance(task=TaskId.parse(task), n=int(n), steps=int(steps),
                        input=np.array(encode(inp), dtype=np.int64),
                        target=np.array(encode(tgt), dtype=np.int64),
                        loss_mask=loss_mask, mode=EncodingMode(mode),
                        answer_start=int(np.argmax(loss_mask)))


def snapshot(task, lengths, per_length: int, seed: int, mode=EncodingMode.FAP, **kw) -> list[TaskInstance]:
    out = []
    for n in lengths:
        out.extend(fixed_length_batch(task, n, per_length, seed, mode, **kw).instances)
    return out
