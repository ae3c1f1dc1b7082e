"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic      8 bytes  b"LOOPTFCK"
    version    u32
    cfg_hash   32 bytes  sha256 of the canonical config JSON
    meta_len   u32, then meta_len bytes of UTF-8 JSON
    blobs      for each entry in meta["blobs"] order: raw <f4 data

``meta`` holds the config, training step, blob names/shapes and the
optimizer scalars. Parameters come first in the model's fixed iteration
order, then AdamW first/second moments.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from looptf.model import LoopedModel, ModelConfig
from looptf.optim import AdamW

MAGIC = b"LOOPTFCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def config_hash(config: dict) -> bytes:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).digest()


def save_checkpoint(path, model: LoopedModel, config: dict, optimizer: AdamW | None = None,
                    step: int = 0, extra: dict | None = None) -> None:
    blobs = [(name, p.data) for name, p in model.params.items()]
    opt_meta = None
    if optimizer is not None:
        names = list(model.params)
        blobs += [(f"adam.m.{n}", m) for n, m in zip(names, optimizer.m)]
        blobs += [(f"adam.v.{n}", v) for n, v in zip(names, optimizer.v)]
        opt_meta = {"step_count": optimizer.step_count, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                    "eps": optimizer.eps, "weight_decay": optimizer.weight_decay,
                    "clip_norm": optimizer.clip_norm}
    meta = {
        "config": config,
        "model": model.config.to_dict(),
        "step": step,
        "optimizer": opt_meta,
        "blobs": [[n, list(a.shape)] for n, a in blobs],
        "extra": extra or {},
    }
    mj = json.dumps(meta, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(config_hash(config))
        f.write(struct.pack("<I", len(mj)))
        f.write(mj)
        for _, a in blobs:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict, dict]:
    """Returns (meta, name -> float32 array)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a looptf checkpoint")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = raw[12:44]
    (mlen,) = struct.unpack_from("<I", raw, 44)
    meta = json.loads(raw[48:48 + mlen])
    if config_hash(meta["config"]) != digest:
        raise CheckpointError("config hash mismatch")
    off = 48 + mlen
    arrays = {}
    for name, shape in meta["blobs"]:
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)
        off += 4 * count
    if off != len(raw):
        raise CheckpointError("trailing bytes in checkpoint")
    return meta, arrays


def load_checkpoint(path, with_optimizer: bool = False):
    meta, arrays = read_checkpoint(path)
    model = LoopedModel(ModelConfig(**meta["model"]), seed=0)
    for name, p in model.params.items():
        if name not in arrays:
            raise CheckpointError(f"missing parameter {name}")
        if arrays[name].shape != p.shape:
            raise CheckpointError(f"shape mismatch for {name}")
        p.data = arrays[name].copy()
    if not with_optimizer:
        return model, meta
    o = meta["optimizer"]
    if o is None:
        raise CheckpointError("checkpoint has no optimizer state")
    names = list(model.params)
    opt = AdamW(model.parameters(), beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
                weight_decay=o["weight_decay"], clip_norm=o["clip_norm"], step_count=o["step_count"],
                m=[arrays[f"adam.m.{n}"].copy() for n in names],
                v=[arrays[f"adam.v.{n}"].copy() for n in names])
    return model, meta, opt
