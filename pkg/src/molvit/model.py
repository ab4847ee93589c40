"""Encoder-decoder bundle: configuration, parameter table, initialisation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from molvit import tensor as T
from molvit.attention import OpCounter
from molvit.decoder import DecoderConfig, decode_forward, decoder_param_shapes
from molvit.encoder import EncoderConfig, encode_image, encoder_param_shapes
from molvit.errors import ConfigError
from molvit.tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig
    decoder: DecoderConfig

    def __post_init__(self):
        if self.encoder.dim != self.decoder.dim:
            raise ConfigError(f"encoder dim {self.encoder.dim} != decoder dim {self.decoder.dim}")

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(), "decoder": self.decoder.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        enc = dict(d["encoder"])
        enc["image_size"] = tuple(enc["image_size"])
        return cls(EncoderConfig(**enc), DecoderConfig(**d["decoder"]))

    @classmethod
    def build(
        cls,
        vocab_size: int,
        image_size=224,
        patch_size: int = 16,
        channels: int = 1,
        dim: int = 512,
        enc_layers: int = 12,
        dec_layers: int = 12,
        heads: int = 8,
        ffn_dim: Optional[int] = None,
        max_len: int = 300,
        pe_base: float = 10000.0,
        dropout: float = 0.1,
        encoder_norm: str = "pre",
    ) -> "ModelConfig":
        enc = EncoderConfig(image_size, patch_size, channels, dim, enc_layers, heads, ffn_dim, dropout, encoder_norm)
        dec = DecoderConfig(vocab_size, dim, dec_layers, heads, ffn_dim, max_len, pe_base, dropout)
        return cls(enc, dec)


PRESETS = {
    "tiny": dict(image_size=64, patch_size=16, dim=64, enc_layers=2, dec_layers=2, heads=4, dropout=0.0),
    # 12 heads do not divide 512; 8 is the nearest divisor
    "paper": dict(image_size=384, patch_size=16, dim=512, enc_layers=12, dec_layers=12, heads=8, dropout=0.1),
}


def preset(name: str, vocab_size: int, **overrides) -> ModelConfig:
    try:
        kw = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    kw.update(overrides)
    return ModelConfig.build(vocab_size, **kw)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes = encoder_param_shapes(cfg.encoder)
    shapes.update(decoder_param_shapes(cfg.decoder))
    return dict(sorted(shapes.items()))


def _trunc_normal(rng: np.random.Generator, shape: tuple, std: float) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def init_weights(cfg: ModelConfig, seed: int = 0, std: float = 0.02) -> dict[str, Tensor]:
    """Truncated-normal matrices and embeddings, zero biases, unit LayerNorm gains."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            data = np.ones(shape)
        elif leaf == "bias" or (leaf.startswith("b") and len(shape) == 1):
            data = np.zeros(shape)
        else:
            data = _trunc_normal(rng, shape, std)
        weights[name] = Tensor(data, requires_grad=True, name=name)
    return weights


def image_to_input(img: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """8-bit grayscale (ink dark on white) → float H×W×C with ink near 1.

    Images of another size are resized bilinearly to the configured size.
    """
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[-1] == 1:
        img = img[..., 0]
    if img.ndim != 2:
        raise ConfigError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.shape != cfg.image_size:
        from PIL import Image

        h, w = cfg.image_size
        img = np.asarray(Image.fromarray(img.astype(np.uint8)).resize((w, h), Image.BILINEAR))
    x = (255.0 - img.astype(np.float64)) / 255.0
    return np.repeat(x[:, :, None], cfg.channels, axis=2).astype(T.default_dtype())


class Model:
    """Configuration plus a named table of parameter tensors."""

    def __init__(self, config: ModelConfig, weights: dict[str, Tensor]):
        expected = param_shapes(config)
        if set(weights) != set(expected):
            missing = sorted(set(expected) - set(weights))
            extra = sorted(set(weights) - set(expected))
            raise ConfigError(f"weight table mismatch; missing={missing[:5]} extra={extra[:5]}")
        for name, shape in expected.items():
            if weights[name].shape != shape:
                raise ConfigError(f"{name} has shape {weights[name].shape}, expected {shape}")
        self.config = config
        self.weights = dict(sorted(weights.items()))

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, std: float = 0.02) -> "Model":
        return cls(config, init_weights(config, seed, std))

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.weights.items())

    def zero_grad(self) -> None:
        for p in self.weights.values():
            p.grad = None

    def astype(self, dtype) -> "Model":
        with T.precision(dtype):
            table = {k: Tensor(v.data.astype(dtype), v.requires_grad, k) for k, v in self.weights.items()}
        return Model(self.config, table)

    def copy(self) -> "Model":
        return self.astype(next(iter(self.weights.values())).data.dtype)

    def encode(self, image: np.ndarray, counter: Optional[OpCounter] = None, training: bool = False, rng=None) -> Tensor:
        """Encoder memory for a prepared float image (H×W×C) or a batch of them."""
        return encode_image(image, self.config.encoder, self.weights, counter, training, rng)

    def decode(self, tokens, memory: Tensor, counter: Optional[OpCounter] = None, training: bool = False, rng=None) -> Tensor:
        return decode_forward(tokens, memory, self.config.decoder, self.weights, counter, training, rng)

    def forward(self, images: np.ndarray, tokens, training: bool = False, rng=None) -> Tensor:
        return self.decode(tokens, self.encode(images, None, training, rng), None, training, rng)

    def prepare(self, img: np.ndarray) -> np.ndarray:
        return image_to_input(img, self.config.encoder)
