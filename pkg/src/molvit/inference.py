"""Greedy autoregressive decoding engines.

Three engines produce the same tokens at different cost:

* ``naive`` re-runs the encoder and the full decoder on the whole prefix at
  every step (the unoptimised baseline).
* ``encoder-once`` computes the encoder memory once but still re-runs the
  full decoder each step.
* ``cached`` additionally keeps every decoder layer's output rows, so each
  step only computes the newest token's row in every layer.

All engines charge an :class:`~molvit.attention.OpCounter`.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from molvit import tensor as T
from molvit.attention import OpCounter
from molvit.decoder import decoder_layer, embed_tokens, memory_kv, project_logits
from molvit.encoder import _scope
from molvit.errors import CacheInvariantError, ConfigError
from molvit.model import Model
from molvit.tensor import Tensor
from molvit.tokenizer import EOS_ID, SOS_ID


class DecodeCache:
    """Append-only per-layer output rows for one decode session.

    Level 0 holds the embedded input rows; level ``l + 1`` holds the outputs
    of decoder layer ``l``. Cross-attention keys/values of the encoder memory
    are projected once when the cache is created.
    """

    def __init__(self, model: Model, memory: Tensor):
        cfg = model.config.decoder
        self.memory = memory
        self.memory_kv = memory_kv(memory, model.weights, cfg)
        self.levels: list[list[np.ndarray]] = [[] for _ in range(cfg.layers + 1)]
        self._crc: list[list[int]] = [[] for _ in range(cfg.layers + 1)]

    def __len__(self) -> int:
        return self.check_aligned()

    def check_aligned(self) -> int:
        counts = {len(rows) for rows in self.levels}
        if len(counts) != 1:
            raise CacheInvariantError(f"cache levels hold unequal row counts: {[len(r) for r in self.levels]}")
        return counts.pop()

    def append(self, level: int, row: np.ndarray) -> None:
        row = np.array(row, copy=True).reshape(-1)
        row.setflags(write=False)
        self.levels[level].append(row)
        self._crc[level].append(zlib.crc32(row.tobytes()))

    def rows(self, level: int) -> np.ndarray:
        return np.stack(self.levels[level])

    def verify(self) -> bool:
        """True when every stored row still matches its write-time checksum."""
        return all(
            zlib.crc32(row.tobytes()) == crc
            for rows, crcs in zip(self.levels, self._crc)
            for row, crc in zip(rows, crcs)
        )


def step_cached(cache: DecodeCache, token_id: int, model: Model, counter: Optional[OpCounter] = None) -> np.ndarray:
    """Feed one token and return next-token logits (length V).

    Only the new row is computed in every layer; its self-attention looks at
    the cached inputs of that layer plus itself.
    """
    cfg = model.config.decoder
    w = model.weights
    pos = cache.check_aligned()
    if pos >= cfg.max_len:
        raise ConfigError(f"cannot decode past max_len {cfg.max_len}")
    with T.no_grad():
        x = embed_tokens(np.array([token_id]), np.array([pos]), cfg, w)
        cache.append(0, x.data)
        for i in range(cfg.layers):
            context = Tensor(cache.rows(i))
            lw = _scope(w, f"decoder.layers.{i}.")
            x = decoder_layer(x, context, cache.memory_kv[i], lw, cfg, None, counter)
            cache.append(i + 1, x.data)
        logits = project_logits(x, w).data[0]
    cache.check_aligned()
    return logits


@dataclass
class DecodeResult:
    ids: list[int]
    counter: OpCounter = field(default_factory=OpCounter)
    cache: Optional[DecodeCache] = None

    @property
    def sequence(self) -> list[int]:
        return [SOS_ID] + self.ids


def choose_token(logits: np.ndarray, suppress_eos: bool = False) -> int:
    """Argmax with ties resolved to the lowest id."""
    if suppress_eos:
        logits = np.array(logits, copy=True)
        logits[EOS_ID] = -np.inf
    return int(np.argmax(logits))


def _prepare(model: Model, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    return model.prepare(image) if image.dtype == np.uint8 else image


def _limit(model: Model, max_len: Optional[int]) -> int:
    cap = model.config.decoder.max_len
    if max_len is None:
        return cap - 1
    if not 1 <= max_len <= cap:
        raise ConfigError(f"max_len {max_len} must be within 1..{cap}")
    return max_len


def _run_full(model, image, max_len, suppress_eos, reencode: bool) -> DecodeResult:
    image = _prepare(model, image)
    limit = _limit(model, max_len)
    counter = OpCounter()
    ids: list[int] = []
    with T.no_grad():
        memory = None if reencode else model.encode(image, counter)
        while len(ids) < limit:
            if reencode:
                memory = model.encode(image, counter)
            logits = model.decode([SOS_ID] + ids, memory, counter).data[-1]
            tok = choose_token(logits, suppress_eos)
            ids.append(tok)
            if tok == EOS_ID:
                break
    return DecodeResult(ids, counter)


def greedy_decode_naive(image, model: Model, max_len: Optional[int] = None, suppress_eos: bool = False) -> DecodeResult:
    """Encoder and full decoder recomputed at every step."""
    return _run_full(model, image, max_len, suppress_eos, reencode=True)


def greedy_decode_encoder_once(image, model: Model, max_len: Optional[int] = None, suppress_eos: bool = False) -> DecodeResult:
    return _run_full(model, image, max_len, suppress_eos, reencode=False)


def greedy_decode_cached(image, model: Model, max_len: Optional[int] = None, suppress_eos: bool = False) -> DecodeResult:
    """Encoder once, then one new row per decoder layer per step."""
    image = _prepare(model, image)
    limit = _limit(model, max_len)
    counter = OpCounter()
    with T.no_grad():
        memory = model.encode(image, counter)
    cache = DecodeCache(model, memory)
    ids: list[int] = []
    tok = SOS_ID
    while len(ids) < limit:
        tok = choose_token(step_cached(cache, tok, model, counter), suppress_eos)
        ids.append(tok)
        if tok == EOS_ID:
            break
    return DecodeResult(ids, counter, cache)


ENGINES: dict[str, Callable[..., DecodeResult]] = {
    "naive": greedy_decode_naive,
    "encoder-once": greedy_decode_encoder_once,
    "cached": greedy_decode_cached,
}


def greedy_decode(image, model: Model, engine: str = "cached", max_len: Optional[int] = None, suppress_eos: bool = False) -> DecodeResult:
    try:
        fn = ENGINES[engine]
    except KeyError:
        raise ConfigError(f"unknown engine {engine!r}; choose from {sorted(ENGINES)}") from None
    return fn(image, model, max_len, suppress_eos)


def naive_decoder_pairs(n: int, m: int, layers: int = 1) -> int:
    """Closed form: layers · Σ_{t=1..n} (t² + m·t)."""
    return layers * sum(t * t + m * t for t in range(1, n + 1))


def cached_decoder_pairs(n: int, m: int, layers: int = 1) -> int:
    """Closed form: layers · (Σ_{t=1..n} t + m·n)."""
    return layers * (n * (n + 1) // 2 + m * n)
