"""Teacher-forced training: loss, Adam, learning-rate schedule, data splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from molvit import tensor as T
from molvit.checkpoint import save_checkpoint
from molvit.errors import ConfigError, ContractError, DataError, TokenizerError
from molvit.model import Model
from molvit.tensor import Tensor
from molvit.tokenizer import PAD_ID, Vocab, encode


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    lr: float = 3e-5
    decay: float = 0.5
    decay_epochs: int = 2
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: Optional[float] = 1.0
    max_steps: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.decay_epochs and self.epochs < self.decay_epochs:
            raise ConfigError(f"decaying over the last {self.decay_epochs} epochs needs at least that many epochs")


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Initial rate, multiplied by ``decay`` on entering each of the final epochs."""
    if not 1 <= epoch <= cfg.epochs:
        raise ConfigError(f"epoch {epoch} outside 1..{cfg.epochs}")
    decayed = max(0, epoch - (cfg.epochs - cfg.decay_epochs))
    return cfg.lr * cfg.decay**decayed


def xent_loss(logits: Tensor, targets, pad_id: int = PAD_ID) -> Tensor:
    """Mean next-token cross-entropy over non-PAD target positions."""
    return T.softmax_cross_entropy(logits, targets, ignore_index=pad_id)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ContractError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype)
    return state


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for g in grads.values():
            g *= scale
    return total


def split_dataset(items: Sequence, seed: int = 0) -> tuple[list, list, list]:
    """Shuffle under ``seed`` and cut into 70% train, 20% validation, the rest test."""
    n = len(items)
    if n == 0:
        raise DataError("cannot split an empty manifest")
    order = np.random.default_rng(seed).permutation(n)
    n_train, n_val = (7 * n) // 10, (2 * n) // 10
    pick = [items[i] for i in order]
    return pick[:n_train], pick[n_train : n_train + n_val], pick[n_train + n_val :]


def make_batch(seqs: Sequence[Sequence[int]], pad_id: int = PAD_ID) -> tuple[np.ndarray, np.ndarray]:
    """Decoder inputs ``[SOS]+tokens`` and targets ``tokens+[EOS]``, PAD to the batch max."""
    width = max(len(s) for s in seqs) - 1
    inputs = np.full((len(seqs), width), pad_id, dtype=np.int64)
    targets = np.full((len(seqs), width), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        inputs[i, : len(s) - 1] = s[:-1]
        targets[i, : len(s) - 1] = s[1:]
    return inputs, targets


def encode_labels(labels: Sequence[str], vocab: Vocab, max_len: int) -> list[list[int]]:
    """Encode every label, collecting all OOV/overlong problems before failing."""
    seqs, problems = [], []
    for i, label in enumerate(labels):
        try:
            ids = encode(vocab, label)
        except TokenizerError as exc:
            problems.append(f"sample {i}: {exc}")
            continue
        if len(ids) > max_len:
            problems.append(f"sample {i}: {len(ids)} tokens exceed max_len {max_len}")
            continue
        seqs.append(ids)
    if problems:
        raise DataError("labels rejected before training:\n  " + "\n  ".join(problems))
    return seqs


def batch_loss(model: Model, images: np.ndarray, seqs, training: bool = False, rng=None) -> Tensor:
    inputs, targets = make_batch(seqs)
    logits = model.forward(images, inputs, training, rng)
    return xent_loss(logits, targets)


def train_step(model: Model, images: np.ndarray, seqs, state: AdamState, lr: float, cfg: TrainConfig, rng=None) -> float:
    """Forward, backward, optional clipping and one Adam update; returns the loss."""
    model.zero_grad()
    with T.Tape() as tape:
        loss = batch_loss(model, images, seqs, training=True, rng=rng)
    tape.backward(loss)
    grads = {k: p.grad for k, p in model.weights.items() if p.grad is not None}
    if cfg.clip_norm:
        clip_grad_norm(grads, cfg.clip_norm)
    adam_step(model.weights, grads, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return float(loss.data)


@dataclass
class TrainResult:
    model: Model
    log: list[str]
    epoch_losses: list[float]
    steps: int


def train(
    model: Model,
    images: Sequence[np.ndarray],
    labels: Sequence[str],
    vocab: Vocab,
    cfg: TrainConfig,
    checkpoint: Optional[Path] = None,
    on_log: Optional[Callable[[str], None]] = None,
) -> TrainResult:
    """Train ``model`` in place on 8-bit images and their label strings.

    Log lines read ``epoch <e> step <s> loss <float>``; the checkpoint (when a
    path is given) is rewritten after every epoch.
    """
    if len(images) != len(labels) or not labels:
        raise DataError("need the same, nonzero number of images and labels")
    if model.config.decoder.vocab_size != len(vocab):
        raise ConfigError(f"model vocab size {model.config.decoder.vocab_size} != vocabulary {len(vocab)}")
    seqs = encode_labels(labels, vocab, model.config.decoder.max_len)
    inputs = np.stack([model.prepare(im) for im in images])
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    log, epoch_losses = [], []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        lr = lr_at_epoch(cfg, epoch)
        order = rng.permutation(len(seqs))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = train_step(model, inputs[idx], [seqs[i] for i in idx], state, lr, cfg, rng)
            step += 1
            losses.append(loss)
            line = f"epoch {epoch} step {step} loss {loss:.6f}"
            log.append(line)
            if on_log:
                on_log(line)
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
        epoch_losses.append(float(np.mean(losses)))
        if checkpoint is not None:
            save_checkpoint(checkpoint, model)
        if cfg.max_steps is not None and step >= cfg.max_steps:
            break
    return TrainResult(model, log, epoch_losses, step)
