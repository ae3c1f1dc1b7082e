"""Equivalence of the looped RASP-L programs against the direct oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from looptf.programs import LOOP_PROGRAMS, TaskId, task_oracle
from looptf.tasks import make_query, padding_for, steps_for

EXHAUSTIVE_LIMIT = {TaskId.PARITY: 10, TaskId.COPY: 10, TaskId.ADDITION: 6}
RANDOM_CASES = 1000


@dataclass
class CheckResult:
    task: TaskId
    cases: int = 0
    by_length: dict = field(default_factory=dict)
    counterexample: tuple | None = None  # (query, program output, oracle output)

    @property
    def ok(self) -> bool:
        return self.counterexample is None


def _operands(task: TaskId, n: int, exhaustive: bool, rng):
    if task is TaskId.ADDITION:
        if exhaustive:
            for bits in itertools.product((0, 1), repeat=2 * n):
                yield list(bits[:n]), list(bits[n:])
        else:
            for _ in range(RANDOM_CASES):
                yield rng.integers(0, 2, n).tolist(), rng.integers(0, 2, n).tolist()
        return
    if exhaustive:
        for bits in itertools.product((0, 1), repeat=n):
            yield list(bits)
    else:
        for _ in range(RANDOM_CASES):
            yield rng.integers(0, 2, n).tolist()


def program_steps(task, n: int) -> int:
    return steps_for(task, n, schedule="proposition")


def check_task(task, n_max: int, seed: int = 0, slack: int = 0) -> CheckResult:
    """Run every case up to ``n_max``; exhaustive where cheap, 1000 random draws beyond."""
    task = TaskId.parse(task)
    if task not in LOOP_PROGRAMS:
        raise ValueError(f"no looped program for {task.value}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    program = LOOP_PROGRAMS[task]
    rng = np.random.default_rng(seed)
    result = CheckResult(task)
    for n in range(1, n_max + 1):
        exhaustive = n <= EXHAUSTIVE_LIMIT[task]
        count = 0
        for ops in _operands(task, n, exhaustive, rng):
            query = make_query(task, ops, padding_for(task, n, slack=slack))
            got = program(query, program_steps(task, n))
            want = task_oracle(task, query)
            count += 1
            if not np.array_equal(got, want):
                result.counterexample = (query, got.tolist(), want.tolist())
                result.cases += count
                result.by_length[n] = count
                return result
        result.by_length[n] = count
        result.cases += count
    return result
