"""RASP-L core library over integer sequences.

Every operation maps equal-length integer sequences to a sequence of the
same length and only looks at positions ``<= i`` when producing output
``i`` (except ``select(..., causal=False)``). Values are exact integers.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

IntSeq = np.ndarray
Predicate = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _seq(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64).reshape(-1)


def _same_length(*seqs: np.ndarray) -> None:
    n = len(seqs[0])
    for s in seqs[1:]:
        if len(s) != n:
            raise ValueError(f"length mismatch: {len(seqs[0])} vs {len(s)}")


def equals(key, query):
    return key == query


def full(x, const: int) -> IntSeq:
    return np.full(len(_seq(x)), const, dtype=np.int64)


def indices(x) -> IntSeq:
    return np.arange(len(_seq(x)), dtype=np.int64)


def select(k, q, pred: Predicate = equals, causal: bool = True) -> np.ndarray:
    """Boolean attention matrix with ``A[qi, kj] = pred(k[kj], q[qi])``.

    ``pred`` is applied elementwise on broadcast arrays, so any numpy
    comparison works.
    """
    k, q = _seq(k), _seq(q)
    _same_length(k, q)
    s = len(k)
    A = np.asarray(pred(k[None, :], q[:, None]), dtype=bool).reshape(s, s)
    if causal:
        A &= np.tri(s, dtype=bool)
    return A


def sel_width(A) -> IntSeq:
    A = np.asarray(A, dtype=bool)
    return A.sum(axis=-1).astype(np.int64) if A.size else np.zeros(len(A), np.int64)


def aggr_mean(A, v, default: int = 0) -> IntSeq:
    """Mean of selected values per row, truncated toward zero."""
    A = np.asarray(A, dtype=bool)
    v = _seq(v)
    if A.shape[0] != len(v):
        raise ValueError(f"attention rows {A.shape[0]} != values {len(v)}")
    if not len(v):
        return v.copy()
    total = A.astype(np.int64) @ v
    width = sel_width(A)
    out = np.full(len(v), default, dtype=np.int64)
    nz = width != 0
    # integer truncation toward zero, matching an int cast of the float mean
    out[nz] = np.sign(total[nz]) * (np.abs(total[nz]) // width[nz])
    return out


def kqv(k, q, v, pred: Predicate = equals, default: int = 0) -> IntSeq:
    k, q, v = _seq(k), _seq(q), _seq(v)
    _same_length(k, q, v)
    return aggr_mean(select(k, q, pred), v, default=default)


def shift_right(x, n: int, default: int = 0) -> IntSeq:
    x = _seq(x)
    if n < 0:
        raise ValueError("shift must be non-negative")
    out = np.full(len(x), default, dtype=np.int64)
    if n < len(x):
        out[n:] = x[: len(x) - n]
    return out


def seq_map(x, y, f: Callable[[int, int], int]) -> IntSeq:
    x, y = _seq(x), _seq(y)
    _same_length(x, y)
    return np.array([f(int(a), int(b)) for a, b in zip(x, y)], dtype=np.int64)


def where(condition, x_if, y_else) -> IntSeq:
    # direct conditional; the zero-sentinel decomposition breaks when x_if holds zeros
    c, x, y = _seq(condition), _seq(x_if), _seq(y_else)
    _same_length(c, x, y)
    return np.where(c != 0, x, y)


def has_seen(x, queries) -> IntSeq:
    x, queries = _seq(x), _seq(queries)
    _same_length(x, queries)
    return kqv(x, queries, full(x, 1), equals, default=0)


def mask(x, bool_mask, mask_val: int = 0) -> IntSeq:
    x = _seq(x)
    return where(bool_mask, x, full(x, mask_val))


def cumsum(mask_seq) -> IntSeq:
    return np.cumsum(_seq(mask_seq), dtype=np.int64)


def firsts(k, q, default: int = 0) -> IntSeq:
    """Smallest ``j <= i`` with ``k[j] == q[i]``, else ``default``."""
    k, q = _seq(k), _seq(q)
    _same_length(k, q)
    if not len(k):
        return k.copy()
    A = select(k, q, equals)
    hit = A.any(axis=1)
    return np.where(hit, A.argmax(axis=1), default).astype(np.int64)


def index_select(x, idx) -> IntSeq:
    """Causal gather ``out[i] = x[idx[i]]``; requires ``0 <= idx[i] <= i``."""
    x, idx = _seq(x), _seq(idx)
    _same_length(x, idx)
    if len(idx) and ((idx < 0).any() or (idx > np.arange(len(idx))).any()):
        raise ValueError("index_select needs 0 <= idx[i] <= i")
    return x[idx]
