"""Post-norm transformer caption decoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from molvit import tensor as T
from molvit.attention import OpCounter, attend, check_heads, project_kv
from molvit.encoder import _ffn, _scope, attention_param_shapes
from molvit.errors import ConfigError, ShapeError
from molvit.tensor import Tensor


@dataclass(frozen=True)
class DecoderConfig:
    vocab_size: int
    dim: int = 512
    layers: int = 12
    heads: int = 8
    ffn_dim: Optional[int] = None
    max_len: int = 300
    pe_base: float = 10000.0
    dropout: float = 0.1
    eps: float = 1e-5

    def __post_init__(self):
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 4 * self.dim)
        if self.dim % 2:
            raise ConfigError(f"decoder dim must be even for sin/cos pairs, got {self.dim}")
        check_heads(self.dim, self.heads)
        if self.vocab_size < 4:
            raise ConfigError("vocabulary needs the three specials plus at least one token")

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=16)
def _pe_table(max_len: int, dim: int, base: float) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    inv_freq = base ** (-np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.empty((max_len, dim))
    table[:, 0::2] = np.sin(pos * inv_freq)
    table[:, 1::2] = np.cos(pos * inv_freq)
    table.setflags(write=False)
    return table


def sinusoidal_pe(max_len: int, dim: int, base: float = 10000.0) -> np.ndarray:
    """Fixed table with PE[pos, 2i] = sin(pos/base^(2i/dim)) and PE[pos, 2i+1] = cos(...)."""
    if dim % 2:
        raise ConfigError(f"positional encoding needs an even dimension, got {dim}")
    return _pe_table(int(max_len), int(dim), float(base))


def causal_mask(t: int) -> np.ndarray:
    """Lower-triangular boolean mask; entry (q, s) is True iff s <= q."""
    return np.tril(np.ones((t, t), dtype=bool))


def embed_tokens(ids: np.ndarray, positions: np.ndarray, cfg: DecoderConfig, w) -> Tensor:
    pe = sinusoidal_pe(cfg.max_len, cfg.dim, cfg.pe_base)[positions].astype(T.default_dtype())
    return T.embedding(w["decoder.embed"], ids) + pe


def decoder_layer(
    x: Tensor,
    context: Tensor,
    memory_kv: tuple[Tensor, Tensor],
    lw: Mapping[str, Tensor],
    cfg: DecoderConfig,
    mask: Optional[np.ndarray] = None,
    counter: Optional[OpCounter] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """One post-norm block for query rows ``x``.

    ``context`` holds the rows self-attention may look at (the full sequence
    in a teacher-forced pass; the cached layer inputs when stepping).
    """
    p = cfg.dropout
    sa = attend(x, project_kv(context, _scope(lw, "self_attn."), cfg.heads),
                _scope(lw, "self_attn."), cfg.heads, mask, counter)
    h = T.layer_norm(x + T.dropout(sa, p, rng, training), lw["ln1.gain"], lw["ln1.bias"], cfg.eps)
    ca = attend(h, memory_kv, _scope(lw, "cross_attn."), cfg.heads, None, counter)
    h = T.layer_norm(h + T.dropout(ca, p, rng, training), lw["ln2.gain"], lw["ln2.bias"], cfg.eps)
    ff = _ffn(h, lw, "ffn.", p, rng, training)
    return T.layer_norm(h + T.dropout(ff, p, rng, training), lw["ln3.gain"], lw["ln3.bias"], cfg.eps)


def memory_kv(memory: Tensor, w: Mapping[str, Tensor], cfg: DecoderConfig) -> list[tuple[Tensor, Tensor]]:
    """Cross-attention keys/values of the encoder memory for every layer."""
    return [
        project_kv(memory, _scope(w, f"decoder.layers.{i}.cross_attn."), cfg.heads)
        for i in range(cfg.layers)
    ]


def project_logits(x: Tensor, w: Mapping[str, Tensor]) -> Tensor:
    return T.matmul(x, w["decoder.out.w"]) + w["decoder.out.b"]


def decode_forward(
    tokens,
    memory: Tensor,
    cfg: DecoderConfig,
    w: Mapping[str, Tensor],
    counter: Optional[OpCounter] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Teacher-forced pass: logits (T×V, or B×T×V) for every input position."""
    ids = np.asarray(tokens, dtype=np.int64)
    t = ids.shape[-1]
    if t > cfg.max_len:
        raise ShapeError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    if t == 0:
        raise ShapeError("cannot decode an empty token sequence")
    if memory.shape[-1] != cfg.dim:
        raise ShapeError(f"memory width {memory.shape[-1]} does not match decoder dim {cfg.dim}")
    x = T.dropout(embed_tokens(ids, np.arange(t), cfg, w), cfg.dropout, rng, training)
    mask = causal_mask(t)
    kvs = memory_kv(memory, w, cfg)
    for i in range(cfg.layers):
        lw = _scope(w, f"decoder.layers.{i}.")
        x = decoder_layer(x, x, kvs[i], lw, cfg, mask, counter, training, rng)
    return project_logits(x, w)


def decoder_param_shapes(cfg: DecoderConfig) -> dict[str, tuple]:
    d, f, v = cfg.dim, cfg.ffn_dim, cfg.vocab_size
    shapes = {"decoder.embed": (v, d), "decoder.out.w": (d, v), "decoder.out.b": (v,)}
    for i in range(cfg.layers):
        p = f"decoder.layers.{i}."
        shapes.update(attention_param_shapes(p + "self_attn.", d))
        shapes.update(attention_param_shapes(p + "cross_attn.", d))
        for n in (1, 2, 3):
            shapes[f"{p}ln{n}.gain"] = (d,)
            shapes[f"{p}ln{n}.bias"] = (d,)
        shapes.update(
            {p + "ffn.fc1.w": (d, f), p + "ffn.fc1.b": (f,), p + "ffn.fc2.w": (f, d), p + "ffn.fc2.b": (d,)}
        )
    return shapes
