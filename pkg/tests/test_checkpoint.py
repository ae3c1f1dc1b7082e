import struct

import numpy as np
import pytest

from looptf.checkpoint import MAGIC, CheckpointError, config_hash, load_checkpoint, read_checkpoint, save_checkpoint
from looptf.model import LoopedModel, ModelConfig
from looptf.optim import AdamW


def model():
    return LoopedModel(ModelConfig(embed_dim=16, heads=2, block_depth=2), seed=3)


CFG = {"task": "parity", "seed": 3}


def test_bit_exact_reload(tmp_path):
    m = model()
    save_checkpoint(tmp_path / "m.ckpt", m, CFG, step=7)
    loaded, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert meta["step"] == 7 and meta["config"] == CFG
    for (n, p), (n2, q) in zip(m.named_parameters(), loaded.named_parameters()):
        assert n == n2 and p.data.tobytes() == q.data.tobytes()
    x = np.arange(10).reshape(1, 10)
    assert np.array_equal(m.loop_forward(x, 3).logits.data, loaded.loop_forward(x, 3).logits.data)


def test_optimizer_state(tmp_path):
    m = model()
    opt = AdamW(m.parameters(), clip_norm=1.0)
    for p in m.parameters():
        p.grad = np.ones_like(p.data)
    opt.step(1e-3)
    save_checkpoint(tmp_path / "m.ckpt", m, CFG, opt, step=1, extra={"rows": [[0, 1.5]]})
    _, meta, opt2 = load_checkpoint(tmp_path / "m.ckpt", with_optimizer=True)
    assert opt2.step_count == 1 and opt2.clip_norm == 1.0
    assert all(np.array_equal(a, b) for a, b in zip(opt.m, opt2.m))
    assert all(np.array_equal(a, b) for a, b in zip(opt.v, opt2.v))
    assert meta["extra"] == {"rows": [[0, 1.5]]}


def test_layout(tmp_path):
    m = model()
    save_checkpoint(tmp_path / "m.ckpt", m, CFG)
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw[:8] == MAGIC and struct.unpack_from("<I", raw, 8)[0] == 1
    assert raw[12:44] == config_hash(CFG)
    (mlen,) = struct.unpack_from("<I", raw, 44)
    assert len(raw) == 48 + mlen + 4 * m.num_parameters()
    meta, arrays = read_checkpoint(tmp_path / "m.ckpt")
    assert [b[0] for b in meta["blobs"]] == list(m.params)


def test_no_optimizer_state(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", model(), CFG)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "m.ckpt", with_optimizer=True)


@pytest.mark.parametrize("corrupt", ["magic", "version", "hash", "trailing", "missing"])
def test_corruption(tmp_path, corrupt):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model(), CFG)
    raw = bytearray(path.read_bytes())
    if corrupt == "magic":
        raw[:8] = b"NOTACKPT"
    elif corrupt == "version":
        raw[8:12] = struct.pack("<I", 99)
    elif corrupt == "hash":
        raw[12] ^= 0xFF
    elif corrupt == "trailing":
        raw += b"\0\0\0\0"
    else:
        path = tmp_path / "absent.ckpt"
    if corrupt != "missing":
        path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_atomic_overwrite(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model(), CFG, step=1)
    save_checkpoint(path, model(), CFG, step=2)
    assert read_checkpoint(path)[0]["step"] == 2
    assert not (tmp_path / "m.ckpt.tmp").exists()


def test_hash_is_canonical():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
