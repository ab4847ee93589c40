"""Convolution-free ViT image encoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Optional

import numpy as np

from molvit import tensor as T
from molvit.attention import OpCounter, check_heads, multi_head_attention
from molvit.errors import ConfigError, ShapeError
from molvit.tensor import Tensor

# (N+1)×D, or B×(N+1)×D for a batch; row 0 is the class token
EncoderMemory = Tensor


@dataclass(frozen=True)
class EncoderConfig:
    image_size: tuple[int, int] = (384, 384)
    patch_size: int = 16
    channels: int = 1
    dim: int = 512
    layers: int = 12
    heads: int = 8
    ffn_dim: Optional[int] = None
    dropout: float = 0.1
    norm: str = "pre"
    eps: float = 1e-5

    def __post_init__(self):
        size = self.image_size
        if isinstance(size, int):
            size = (size, size)
        object.__setattr__(self, "image_size", tuple(int(s) for s in size))
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 4 * self.dim)
        h, w = self.image_size
        if h % self.patch_size or w % self.patch_size:
            raise ConfigError(
                f"image {h}x{w} is not divisible into {self.patch_size}x{self.patch_size} patches"
            )
        check_heads(self.dim, self.heads)
        if self.norm not in ("pre", "post"):
            raise ConfigError(f"norm must be 'pre' or 'post', got {self.norm!r}")

    @property
    def grid(self) -> tuple[int, int]:
        h, w = self.image_size
        return h // self.patch_size, w // self.patch_size

    @property
    def num_patches(self) -> int:
        gh, gw = self.grid
        return gh * gw

    @property
    def memory_len(self) -> int:
        return self.num_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        return d


def patchify(img: np.ndarray, patch: int) -> np.ndarray:
    """Split an H×W×C (or H×W) image into non-overlapping flattened patches.

    Patches come in row-major grid order and each is flattened rows, then
    columns, then channels. A leading batch axis is passed through.
    """
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    batched = img.ndim == 4
    if not batched:
        img = img[None]
    b, h, w, c = img.shape
    if h % patch or w % patch:
        raise ShapeError(f"image H={h}, W={w} is not divisible by patch size P={patch}")
    gh, gw = h // patch, w // patch
    out = img.reshape(b, gh, patch, gw, patch, c).transpose(0, 1, 3, 2, 4, 5)
    out = out.reshape(b, gh * gw, patch * patch * c)
    return out if batched else out[0]


def embed_patches(patches, w: Mapping[str, Tensor]) -> Tensor:
    """Project patches, prepend the class token and add position embeddings."""
    patches = patches if isinstance(patches, Tensor) else Tensor(patches)
    proj, cls, pos = w["patch_proj"], w["class_token"], w["pos_embed"]
    n = patches.shape[-2]
    if pos.shape[0] != n + 1:
        raise ConfigError(f"position table has {pos.shape[0]} rows but {n} patches need {n + 1}")
    if proj.shape[0] != patches.shape[-1]:
        raise ConfigError(f"projection expects {proj.shape[0]}-dim patches, got {patches.shape[-1]}")
    x = T.matmul(patches, proj)
    lead = patches.shape[:-2]
    cls_rows = T.expand(cls, (*lead, 1, cls.shape[-1])) if lead else cls
    return T.concat([cls_rows, x], axis=-2) + pos


def _ffn(x: Tensor, w, prefix: str, p: float, rng, training: bool) -> Tensor:
    h = T.gelu(T.matmul(x, w[prefix + "fc1.w"]) + w[prefix + "fc1.b"])
    h = T.dropout(h, p, rng, training)
    return T.matmul(h, w[prefix + "fc2.w"]) + w[prefix + "fc2.b"]


def _scope(w: Mapping[str, Tensor], prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in w.items() if k.startswith(prefix)}


def encode_image(
    img: np.ndarray,
    cfg: EncoderConfig,
    w: Mapping[str, Tensor],
    counter: Optional[OpCounter] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> EncoderMemory:
    """Run the ViT stack; weights are looked up under the ``encoder.`` prefix."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    spatial = img.shape[-3:]
    if spatial != (*cfg.image_size, cfg.channels):
        raise ShapeError(f"image shape {spatial} does not match config {(*cfg.image_size, cfg.channels)}")
    if counter is not None:
        counter.encoder_calls += img.shape[0] if img.ndim == 4 else 1
    ew = _scope(w, "encoder.")
    x = embed_patches(patchify(img, cfg.patch_size), ew)
    x = T.dropout(x, cfg.dropout, rng, training)
    for i in range(cfg.layers):
        lw = _scope(ew, f"layers.{i}.")
        attn_w = _scope(lw, "attn.")
        if cfg.norm == "pre":
            h = T.layer_norm(x, lw["ln1.gain"], lw["ln1.bias"], cfg.eps)
            h = multi_head_attention(h, h, attn_w, cfg.heads, None, counter, "encoder")
            x = x + T.dropout(h, cfg.dropout, rng, training)
            h = T.layer_norm(x, lw["ln2.gain"], lw["ln2.bias"], cfg.eps)
            x = x + T.dropout(_ffn(h, lw, "ffn.", cfg.dropout, rng, training), cfg.dropout, rng, training)
        else:
            h = multi_head_attention(x, x, attn_w, cfg.heads, None, counter, "encoder")
            x = T.layer_norm(x + T.dropout(h, cfg.dropout, rng, training), lw["ln1.gain"], lw["ln1.bias"], cfg.eps)
            h = _ffn(x, lw, "ffn.", cfg.dropout, rng, training)
            x = T.layer_norm(x + T.dropout(h, cfg.dropout, rng, training), lw["ln2.gain"], lw["ln2.bias"], cfg.eps)
    return T.layer_norm(x, ew["ln_f.gain"], ew["ln_f.bias"], cfg.eps)


def encoder_param_shapes(cfg: EncoderConfig) -> dict[str, tuple]:
    d, f = cfg.dim, cfg.ffn_dim
    shapes = {
        "encoder.patch_proj": (cfg.patch_dim, d),
        "encoder.class_token": (1, d),
        "encoder.pos_embed": (cfg.memory_len, d),
        "encoder.ln_f.gain": (d,),
        "encoder.ln_f.bias": (d,),
    }
    for i in range(cfg.layers):
        p = f"encoder.layers.{i}."
        shapes.update(attention_param_shapes(p + "attn.", d))
        shapes.update(
            {
                p + "ln1.gain": (d,),
                p + "ln1.bias": (d,),
                p + "ln2.gain": (d,),
                p + "ln2.bias": (d,),
                p + "ffn.fc1.w": (d, f),
                p + "ffn.fc1.b": (f,),
                p + "ffn.fc2.w": (f, d),
                p + "ffn.fc2.b": (d,),
            }
        )
    return shapes


def attention_param_shapes(prefix: str, d: int) -> dict[str, tuple]:
    shapes = {}
    for m in "qkvo":
        shapes[f"{prefix}w{m}"] = (d, d)
        shapes[f"{prefix}b{m}"] = (d,)
    return shapes
