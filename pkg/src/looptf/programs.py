"""Looped RASP-L reference programs and direct ground-truth oracles.

``parity_loop``, ``copy_loop`` and ``addition_loop`` repeat one RASP-L step
function a length-dependent number of times. ``task_oracle`` computes the
same targets (and those of the three tasks without a looped program)
directly with integer arithmetic, so the two routes can be cross-checked.
"""

from __future__ import annotations

import enum

import numpy as np

from looptf import rasp
from looptf.rasp import full, has_seen, mask, shift_right, where
from looptf.vocab import EOQ, EOS, IGNORE, PLUS, TIMES, N_VALUES


class TaskId(str, enum.Enum):
    PARITY = "parity"
    COPY = "copy"
    ADDITION = "addition"
    BINARY_SUM = "binary_sum"
    MULTIPLICATION = "multiplication"
    UNIQUE_SET = "unique_set"

    @classmethod
    def parse(cls, name) -> "TaskId":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("-", "_")
        aliases = {"binarysum": "binary_sum", "uniqueset": "unique_set", "sum": "binary_sum",
                   "mult": "multiplication", "add": "addition"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown task {name!r}") from None


def _xor(a, b):
    # A XOR B = (A OR B) AND NOT (A AND B), on 0/1 sequences
    return (a | b) & (1 - (a & b))


def _eoq_index(seq: np.ndarray) -> int:
    hits = np.flatnonzero(seq == EOQ)
    if len(hits) != 1:
        raise ValueError("malformed query: expected exactly one EOQ token")
    return int(hits[0])


def _hide_prompt(seq: np.ndarray, ans: np.ndarray) -> np.ndarray:
    # outputs before the EOQ position are unsupervised
    return where(has_seen(seq, full(seq, EOQ)), ans, full(seq, IGNORE))


# --- parity -----------------------------------------------------------------

def parity_step(partial_ans_seq, seq):
    seq = shift_right(seq, 1)
    partial_ans_seq = _xor(partial_ans_seq, seq)
    return partial_ans_seq, seq


def parity_loop(seq, num_step: int) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.int64)
    _eoq_index(seq)
    prompt_mask = 1 - has_seen(seq, full(seq, EOQ))
    body = mask(seq, prompt_mask)
    partial_ans_seq = full(seq, 0)
    end_seq = where(prompt_mask == 1, full(seq, 0), full(seq, EOS))
    for _ in range(num_step):
        partial_ans_seq, body = parity_step(partial_ans_seq, body)
    end_seq = shift_right(end_seq, 1)
    ans = where(end_seq == EOS, end_seq, partial_ans_seq)
    return _hide_prompt(seq, ans)


# --- copy -------------------------------------------------------------------

def copy_step(seq, end_seq):
    return shift_right(seq, 1), shift_right(end_seq, 1)


def copy_loop(seq, num_step: int) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.int64)
    q = _eoq_index(seq)
    if len(seq) - q - 1 < q - 1:
        raise ValueError(f"insufficient padding: copy of {q} symbols needs {q - 1} EOS tokens")
    end_mask = has_seen(seq, full(seq, EOQ))
    end_seq = where(end_mask == 0, full(seq, 0), full(seq, EOS))
    body = seq
    for _ in range(num_step):
        body, end_seq = copy_step(body, end_seq)
    ans = where(end_seq == EOS, end_seq, body)
    return _hide_prompt(seq, ans)


# --- addition ---------------------------------------------------------------

def addition_step(seq1, seq2, end_seq):
    end_seq = shift_right(end_seq, 1)
    carry_on = seq1 & seq2
    in_place = shift_right(_xor(seq1, seq2), 1)
    return in_place, carry_on, end_seq


def addition_preprocess(seq):
    """Split ``x + y > # ...`` into (x aligned under y, y, EOS-after-EOQ)."""
    seq = np.asarray(seq, dtype=np.int64)
    if (seq == PLUS).sum() != 1:
        raise ValueError("malformed query: expected exactly one '+' token")
    _eoq_index(seq)
    end_mask = has_seen(seq, full(seq, EOQ))
    end_seq = where(end_mask == 0, full(seq, 0), full(seq, EOS))
    seen_tok0 = has_seen(seq, full(seq, PLUS))
    seen_tok1 = has_seen(seq, full(seq, EOQ))
    mask1 = 1 - seen_tok0
    mask2 = seen_tok0 & (1 - seen_tok1)
    mask2 = mask2 & shift_right(mask2, 1)
    seq1 = mask(seq, mask1)
    seq2 = mask(seq, mask2)
    induct_num1 = rasp.cumsum(mask1)
    induct_num2 = rasp.cumsum(mask2)
    target_index = rasp.firsts(induct_num1, induct_num2, default=0)
    seq1 = rasp.index_select(seq1, target_index)
    seq1 = mask(seq1, mask2)
    return seq1, seq2, end_seq


def addition_loop(seq, num_step: int) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.int64)
    seq1, seq2, end_seq = addition_preprocess(seq)
    for _ in range(num_step):
        seq1, seq2, end_seq = addition_step(seq1, seq2, end_seq)
    ans = where(end_seq == EOS, end_seq, seq1)
    return _hide_prompt(seq, ans)


_STEPS = {
    TaskId.PARITY: parity_step,
    TaskId.COPY: copy_step,
    TaskId.ADDITION: addition_step,
}

LOOP_PROGRAMS = {
    TaskId.PARITY: parity_loop,
    TaskId.COPY: copy_loop,
    TaskId.ADDITION: addition_loop,
}


def step_functions(task):
    """Single loop body for tasks that have a looped RASP-L program."""
    task = TaskId.parse(task)
    try:
        return _STEPS[task]
    except KeyError:
        raise ValueError(f"no looped program for {task.value}") from None


# --- direct oracles ---------------------------------------------------------

def _bits_to_int(bits) -> int:
    v = 0
    for b in bits:
        v = 2 * v + int(b)
    return v


def _int_to_bits(v: int, width: int) -> list[int]:
    """MSB-first binary of ``v`` in exactly ``width`` digits."""
    return [(v >> (width - 1 - i)) & 1 for i in range(width)]


def _split(body: list[int], sep: int, name: str) -> tuple[list[int], list[int]]:
    if body.count(sep) != 1:
        raise ValueError(f"malformed query: expected exactly one {name!r}")
    i = body.index(sep)
    return body[:i], body[i + 1:]


def _check_values(vals, limit=2):
    if not vals or any(not 0 <= v < limit for v in vals):
        raise ValueError("malformed query: bad operand tokens")


def parse_query(task, query) -> dict:
    """Operands of a FAP query (``body > # ...``) plus its EOQ index."""
    task = TaskId.parse(task)
    seq = [int(t) for t in query]
    q = _eoq_index(np.asarray(seq))
    if any(t != EOS for t in seq[q + 1:]):
        raise ValueError("malformed query: non-EOS token after EOQ")
    body = seq[:q]
    out = {"eoq": q, "length": len(seq)}
    if task is TaskId.ADDITION:
        x, y = _split(body, PLUS, "+")
        _check_values(x), _check_values(y)
        if len(x) != len(y):
            raise ValueError("malformed query: summands differ in length")
        out.update(x=x, y=y, n=len(x))
    elif task is TaskId.MULTIPLICATION:
        a, b = _split(body, TIMES, "×")
        _check_values(a), _check_values(b)
        out.update(a=a, b=b, n=len(b))
    else:
        _check_values(body, N_VALUES if task is TaskId.UNIQUE_SET else 2)
        out.update(x=body, n=len(body))
    return out


def answer_tokens(task, query) -> list[int]:
    task = TaskId.parse(task)
    p = parse_query(task, query)
    if task is TaskId.PARITY:
        return [sum(p["x"]) % 2]
    if task is TaskId.COPY:
        return list(p["x"])
    if task is TaskId.ADDITION:
        return _int_to_bits(_bits_to_int(p["x"]) + _bits_to_int(p["y"]), p["n"] + 1)
    if task is TaskId.BINARY_SUM:
        s = sum(p["x"])
        return _int_to_bits(s, max(1, s.bit_length()))[::-1]
    if task is TaskId.MULTIPLICATION:
        width = len(p["a"]) + len(p["b"]) + 1
        return _int_to_bits(_bits_to_int(p["a"]) * _bits_to_int(p["b"]), width)[::-1]
    if task is TaskId.UNIQUE_SET:
        return list(dict.fromkeys(p["x"]))
    raise AssertionError(task)


def task_oracle(task, query) -> np.ndarray:
    """Full target for a FAP query: ``*`` before EOQ, answer from EOQ on, then EOS."""
    p = parse_query(task, query)
    ans = answer_tokens(task, query)
    q, length = p["eoq"], p["length"]
    if q + len(ans) > length:
        raise ValueError(f"insufficient padding: answer needs {len(ans) - 1} EOS tokens")
    out = np.full(length, EOS, dtype=np.int64)
    out[:q] = IGNORE
    out[q:q + len(ans)] = ans
    return out
