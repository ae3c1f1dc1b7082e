"""Decoder-only transformer block (no positional embedding) run as a weight-tied loop."""

from __future__ import annotations

import copy
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from looptf import autodiff as ad
from looptf.autodiff import Tensor
from looptf.vocab import VOCAB_SIZE


@dataclass
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    embed_dim: int = 64
    heads: int = 8
    block_depth: int = 1  # layers inside the looped block
    max_seq_len: int = 512
    input_injection: bool = True
    n_blocks: int = 1  # 1 = weight-tied loop; k > 1 = k untied blocks, one per iteration

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.block_depth < 1 or self.n_blocks < 1:
            raise ValueError("block_depth and n_blocks must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


_LAYER_SHAPES = (
    ("ln1.g", lambda d: (d,)), ("ln1.b", lambda d: (d,)),
    ("attn.w_qkv", lambda d: (d, 3 * d)), ("attn.b_qkv", lambda d: (3 * d,)),
    ("attn.w_o", lambda d: (d, d)), ("attn.b_o", lambda d: (d,)),
    ("ln2.g", lambda d: (d,)), ("ln2.b", lambda d: (d,)),
    ("mlp.w_fc", lambda d: (d, 4 * d)), ("mlp.b_fc", lambda d: (4 * d,)),
    ("mlp.w_proj", lambda d: (4 * d, d)), ("mlp.b_proj", lambda d: (d,)),
)


def _init_param(name: str, shape, rng, dtype) -> np.ndarray:
    if name.endswith(".g"):
        return np.ones(shape, dtype=dtype)
    if name.split(".")[-1].startswith("b"):
        return np.zeros(shape, dtype=dtype)
    return ad.trunc_normal(rng, shape, 0.02, dtype)


@dataclass
class LoopOutput:
    logits: Tensor
    step_logits: list = field(default_factory=list)  # logits after each iteration, if requested
    hidden: list = field(default_factory=list)


class LoopedModel:
    """Embedding -> T applications of one decoder block -> final norm -> head.

    With input injection the block input at every iteration is
    ``h_{t-1} + e`` with ``h_0 = 0``, so one iteration is a plain forward pass.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        d, V = config.embed_dim, config.vocab_size
        self.params: dict[str, Tensor] = {}
        self._add("embed", _init_param("embed", (V, d), rng, dtype))
        for k in range(config.n_blocks):
            for j in range(config.block_depth):
                for name, shape in _LAYER_SHAPES:
                    full = f"block{k}.layer{j}.{name}"
                    self._add(full, _init_param(full, shape(d), rng, dtype))
        self._add("ln_f.g", np.ones(d, dtype=dtype))
        self._add("ln_f.b", np.zeros(d, dtype=dtype))
        self._add("head.w", ad.trunc_normal(rng, (d, V), 0.02, dtype))
        self._masks: dict[int, np.ndarray] = {}

    def _add(self, name, data):
        self.params[name] = ad.parameter(data, name=name)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    @property
    def dtype(self):
        return self.params["embed"].dtype

    def astype(self, dtype) -> "LoopedModel":
        other = copy.copy(self)
        other.params = {k: ad.parameter(v.data.astype(dtype), name=k) for k, v in self.params.items()}
        other._masks = {}
        return other

    def clone(self) -> "LoopedModel":
        return self.astype(self.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    # forward pieces -----------------------------------------------------
    def embed_tokens(self, tokens) -> Tensor:
        return ad.embedding(self.params["embed"], np.asarray(tokens))

    def _causal_mask(self, L: int) -> np.ndarray:
        if L not in self._masks:
            self._masks[L] = np.triu(np.ones((L, L), dtype=bool), k=1)
        return self._masks[L]

    def _layer(self, h: Tensor, prefix: str) -> Tensor:
        P = self.params
        B, L, d = h.shape
        H = self.config.heads
        dh = d // H
        x = ad.layer_norm(h, P[prefix + "ln1.g"], P[prefix + "ln1.b"])
        qkv = ad.linear(x, P[prefix + "attn.w_qkv"], P[prefix + "attn.b_qkv"])
        qkv = qkv.reshape(B, L, 3, H, dh).transpose(2, 0, 3, 1, 4)  # [3, B, H, L, dh]
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ad.matmul(q, ad.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
        att = ad.softmax_rows(scores, self._causal_mask(L))
        y = ad.matmul(att, v).transpose(0, 2, 1, 3).reshape(B, L, d)
        h = h + ad.linear(y, P[prefix + "attn.w_o"], P[prefix + "attn.b_o"])
        x = ad.layer_norm(h, P[prefix + "ln2.g"], P[prefix + "ln2.b"])
        x = ad.gelu(ad.linear(x, P[prefix + "mlp.w_fc"], P[prefix + "mlp.b_fc"]))
        return h + ad.linear(x, P[prefix + "mlp.w_proj"], P[prefix + "mlp.b_proj"])

    def block_forward(self, h: Tensor, block: int = 0) -> Tensor:
        if h.shape[1] > self.config.max_seq_len:
            raise ValueError(f"sequence length {h.shape[1]} exceeds max_seq_len {self.config.max_seq_len}")
        for j in range(self.config.block_depth):
            h = self._layer(h, f"block{block}.layer{j}.")
        return h

    def head(self, h: Tensor) -> Tensor:
        P = self.params
        return ad.matmul(ad.layer_norm(h, P["ln_f.g"], P["ln_f.b"]), P["head.w"])

    def hidden_states(self, tokens, T: int) -> list[Tensor]:
        """``[h_1, ..., h_T]`` for a batch of token ids ``[B, L]``."""
        if T < 1:
            raise ValueError("number of loop steps must be >= 1")
        n_blocks = self.config.n_blocks
        if n_blocks > 1 and T > n_blocks:
            raise ValueError(f"untied model has {n_blocks} blocks, cannot run {T} steps")
        e = self.embed_tokens(tokens)
        states = []
        h = None
        for t in range(T):
            block = 0 if n_blocks == 1 else t
            if h is None:
                x = e
            else:
                x = h + e if self.config.input_injection else h
            h = self.block_forward(x, block)
            states.append(h)
        return states

    def loop_forward(self, tokens, T: int, step_outputs: bool = False) -> LoopOutput:
        states = self.hidden_states(tokens, T)
        if step_outputs:
            step_logits = [self.head(h) for h in states]
            return LoopOutput(step_logits[-1], step_logits, states)
        return LoopOutput(self.head(states[-1]), [], states)

    def forward_steps(self, tokens, steps) -> Tensor:
        """Logits where row ``b`` is read out after ``steps[b]`` iterations.

        Rows are sorted by step count so iteration ``t`` only runs the rows
        that still need it; outputs come back in the original row order.
        """
        tokens = np.asarray(tokens)
        steps = np.asarray(steps)
        if steps.min() < 1:
            raise ValueError("number of loop steps must be >= 1")
        if self.config.n_blocks > 1:
            states = self.hidden_states(tokens, int(steps.max()))
            return self.head(ad.gather_steps(states, steps - 1))
        order = np.argsort(-steps, kind="stable")
        pos = np.empty_like(order)
        pos[order] = np.arange(len(order))
        sorted_steps = steps[order]
        e = self.embed_tokens(tokens[order])
        states = []
        h = None
        for t in range(int(sorted_steps[0])):
            k = int((sorted_steps > t).sum())
            ek = e if k == len(order) else e[:k]
            if h is None:
                x = ek
            else:
                hk = h if h.shape[0] == k else h[:k]
                x = hk + ek if self.config.input_injection else hk
            h = self.block_forward(x)
            states.append(h)
        return self.head(ad.gather_steps(states, steps - 1, pos))

    def __call__(self, tokens, T: int = 1) -> Tensor:
        return self.loop_forward(tokens, T).logits

    # manifest -----------------------------------------------------------
    def manifest(self) -> list[tuple[str, tuple, str]]:
        rows = []
        for name, p in self.params.items():
            crc = zlib.crc32(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
            rows.append((name, p.shape, f"{crc:08x}"))
        return rows

    def manifest_text(self) -> str:
        return "".join(f"{n}\t{'x'.join(map(str, s))}\t{c}\n" for n, s, c in self.manifest())


def decode_greedy(logits) -> np.ndarray:
    """Per-position argmax; ties go to the lowest token id."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return data.argmax(axis=-1)


def unrolled(model: LoopedModel, T: int) -> LoopedModel:
    """Untied copy with ``T`` blocks, each initialized to the tied block."""
    if model.config.n_blocks != 1:
        raise ValueError("unrolled() expects a weight-tied model")
    cfg = _replace(model.config, n_blocks=T)
    out = LoopedModel.__new__(LoopedModel)
    out.config = cfg
    out._masks = {}
    out.params = {}
    for name, p in model.params.items():
        if name.startswith("block0."):
            for k in range(T):
                new = f"block{k}." + name[len("block0."):]
                out.params[new] = ad.parameter(p.data.copy(), name=new)
        else:
            out.params[name] = ad.parameter(p.data.copy(), name=name)
    # keep the fixed iteration order: embed, blocks, ln_f, head
    order = ["embed"] + [n for n in out.params if n.startswith("block")] + ["ln_f.g", "ln_f.b", "head.w"]
    out.params = {n: out.params[n] for n in order}
    return out


def stacked(model: LoopedModel, T: int) -> LoopedModel:
    """Fixed-depth model whose single block stacks ``T`` copies of the looped block's layers."""
    if model.config.n_blocks != 1:
        raise ValueError("stacked() expects a weight-tied model")
    depth = model.config.block_depth
    cfg = _replace(model.config, block_depth=depth * T)
    out = LoopedModel.__new__(LoopedModel)
    out.config = cfg
    out._masks = {}
    out.params = {"embed": ad.parameter(model.params["embed"].data.copy(), name="embed")}
    for t in range(T):
        for j in range(depth):
            for name, _ in _LAYER_SHAPES:
                src = model.params[f"block0.layer{j}.{name}"]
                new = f"block0.layer{t * depth + j}.{name}"
                out.params[new] = ad.parameter(src.data.copy(), name=new)
    for n in ("ln_f.g", "ln_f.b", "head.w"):
        out.params[n] = ad.parameter(model.params[n].data.copy(), name=n)
    return out


def _replace(cfg: ModelConfig, **kw) -> ModelConfig:
    d = cfg.to_dict()
    d.update(kw)
    return ModelConfig(**d)
