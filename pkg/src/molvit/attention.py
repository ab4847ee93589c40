"""Scaled dot-product and multi-head attention with pair counting."""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional

import numpy as np

from molvit import tensor as T
from molvit.errors import ConfigError, ContractError, ShapeError
from molvit.tensor import Tensor


@dataclass
class OpCounter:
    """Deterministic work counters for one decode session.

    ``qk_pairs`` counts query-key position pairs scored by decoder attention;
    encoder attention is tallied separately in ``encoder_qk_pairs`` so the
    decoder cost law can be checked on its own. All heads of one attention
    call score the same position pair, so a pair is counted once per call.
    """

    qk_pairs: int = 0
    encoder_qk_pairs: int = 0
    encoder_calls: int = 0

    def add_pairs(self, n: int, site: str = "decoder") -> None:
        if site == "decoder":
            self.qk_pairs += n
        elif site == "encoder":
            self.encoder_qk_pairs += n
        else:
            raise ValueError(f"unknown counter site {site!r}")

    def snapshot(self) -> "OpCounter":
        return OpCounter(self.qk_pairs, self.encoder_qk_pairs, self.encoder_calls)


_probes: list[list[np.ndarray]] = []


@contextlib.contextmanager
def capture_attention() -> Iterator[list[np.ndarray]]:
    """Collect every attention-weight matrix computed inside the block."""
    sink: list[np.ndarray] = []
    _probes.append(sink)
    try:
        yield sink
    finally:
        _probes.remove(sink)


def mask_bias(mask: np.ndarray, dtype) -> np.ndarray:
    """Additive bias: 0 where attention is allowed, MASK_FILL where forbidden."""
    return np.where(mask, 0.0, T.MASK_FILL).astype(dtype)


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: Optional[np.ndarray] = None,
    counter: Optional[OpCounter] = None,
    site: str = "decoder",
) -> Tensor:
    """softmax(Q·Kᵀ/√dₖ + mask)·V over the last two axes.

    ``mask`` is boolean, True meaning "may attend", broadcastable to
    ``(..., q, s)``. Leading axes of Q/K/V are treated as batch axes and the
    counter is charged ``q·s`` per batch entry.
    """
    dk = q.shape[-1]
    if k.shape[-1] != dk:
        raise ShapeError(f"query dim {q.shape} does not match key dim {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"keys {k.shape} and values {v.shape} differ in length")
    nq, ns = q.shape[-2], k.shape[-2]
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dk))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not np.all(np.broadcast_to(mask, scores.shape).any(axis=-1)):
            raise ContractError("attention mask forbids every key for some query row")
        scores = scores + mask_bias(mask, scores.data.dtype)
    weights = T.softmax(scores)
    for sink in _probes:
        sink.append(weights.data)
    if counter is not None:
        counter.add_pairs(nq * ns * int(np.prod(q.shape[:-2], dtype=np.int64)), site)
    return T.matmul(weights, v)


def check_heads(dim: int, heads: int) -> int:
    if heads < 1 or dim % heads:
        raise ConfigError(f"model dim {dim} is not divisible by {heads} heads")
    return dim // heads


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    return T.swapaxes(T.reshape(x, (*lead, n, heads, d // heads)), -3, -2)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    return T.reshape(T.swapaxes(x, -3, -2), (*lead, n, h * dh))


def project_kv(x_kv: Tensor, w: Mapping[str, Tensor], heads: int) -> tuple[Tensor, Tensor]:
    """Key and value projections, already split into heads."""
    k = T.matmul(x_kv, w["wk"]) + w["bk"]
    v = T.matmul(x_kv, w["wv"]) + w["bv"]
    return _split_heads(k, heads), _split_heads(v, heads)


def attend(
    x_q: Tensor,
    kv: tuple[Tensor, Tensor],
    w: Mapping[str, Tensor],
    heads: int,
    mask: Optional[np.ndarray] = None,
    counter: Optional[OpCounter] = None,
    site: str = "decoder",
) -> Tensor:
    """Multi-head attention from queries ``x_q`` to pre-projected keys/values."""
    k, v = kv
    q = _split_heads(T.matmul(x_q, w["wq"]) + w["bq"], heads)
    out = scaled_dot_attention(q, k, v, mask)
    if counter is not None:
        batch = int(np.prod(x_q.shape[:-2], dtype=np.int64))
        counter.add_pairs(batch * x_q.shape[-2] * k.shape[-2], site)
    return T.matmul(_merge_heads(out), w["wo"]) + w["bo"]


def multi_head_attention(
    x_q: Tensor,
    x_kv: Tensor,
    w: Mapping[str, Tensor],
    heads: int,
    mask: Optional[np.ndarray] = None,
    counter: Optional[OpCounter] = None,
    site: str = "decoder",
) -> Tensor:
    """Concat(head_1..head_H)·W_O, head h using columns h·D/H..(h+1)·D/H of W_Q/W_K/W_V.

    Weight keys: ``wq, bq, wk, bk, wv, bv, wo, bo`` with D×D matrices.
    """
    check_heads(x_q.shape[-1], heads)
    if x_kv.shape[-1] != x_q.shape[-1]:
        raise ShapeError(f"query input {x_q.shape} and key input {x_kv.shape} differ in width")
    return attend(x_q, project_kv(x_kv, w, heads), w, heads, mask, counter, site)
