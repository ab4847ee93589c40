"""Levenshtein evaluation and the decode-cost benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from molvit.errors import ConfigError, EngineMismatchError
from molvit.inference import (
    cached_decoder_pairs,
    greedy_decode,
    greedy_decode_cached,
    greedy_decode_encoder_once,
    greedy_decode_naive,
    naive_decoder_pairs,
)
from molvit.model import Model
from molvit.tokenizer import Vocab, decode


def levenshtein(a: str, b: str) -> int:
    """Minimum single-character insertions, deletions and substitutions."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass
class EvalReport:
    labels: list[str] = field(default_factory=list)
    predictions: list[str] = field(default_factory=list)
    distances: list[int] = field(default_factory=list)

    def add(self, label: str, prediction: str) -> int:
        d = levenshtein(label, prediction)
        self.labels.append(label)
        self.predictions.append(prediction)
        self.distances.append(d)
        return d

    @property
    def count(self) -> int:
        return len(self.distances)

    @property
    def mean_distance(self) -> float:
        return sum(self.distances) / self.count if self.count else float("nan")

    @property
    def exact_match_rate(self) -> float:
        return sum(d == 0 for d in self.distances) / self.count if self.count else float("nan")

    def to_tsv(self) -> str:
        lines = ["label\tprediction\tdistance"]
        lines += [f"{l}\t{p}\t{d}" for l, p, d in zip(self.labels, self.predictions, self.distances)]
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        return (
            f"samples {self.count}\n"
            f"mean_levenshtein {self.mean_distance:.6f}\n"
            f"exact_match_rate {self.exact_match_rate:.6f}\n"
        )

    def write(self, path) -> tuple[Path, Path]:
        """Write the per-sample TSV to ``path`` and the summary next to it (``.txt``)."""
        path = Path(path)
        text_path = path.with_name(path.name + ".txt")
        path.write_text(self.to_tsv(), encoding="utf-8")
        text_path.write_text(self.summary(), encoding="utf-8")
        return path, text_path


Predictor = Callable[[np.ndarray], str]


def evaluate(
    model: Union[Model, Predictor],
    images: Sequence[np.ndarray],
    labels: Sequence[str],
    vocab: Optional[Vocab] = None,
    engine: str = "cached",
    max_len: Optional[int] = None,
) -> EvalReport:
    """Decode every image and score it against its label.

    ``model`` may also be any callable mapping an image to a predicted string.
    """
    if len(images) != len(labels):
        raise ConfigError("images and labels differ in length")
    if isinstance(model, Model):
        if vocab is None:
            raise ConfigError("a vocabulary is needed to detokenize model output")
        if model.config.decoder.vocab_size != len(vocab):
            raise ConfigError(f"model vocab size {model.config.decoder.vocab_size} != vocabulary {len(vocab)}")

        def predict(img):
            return decode(vocab, greedy_decode(img, model, engine, max_len).sequence)
    else:
        predict = model
    report = EvalReport()
    for img, label in zip(images, labels):
        report.add(label, predict(img))
    return report


@dataclass
class BenchRow:
    steps: int
    memory_len: int
    layers: int
    naive_pairs: int
    encoder_once_pairs: int
    cached_pairs: int
    naive_predicted: int
    cached_predicted: int
    naive_encoder_calls: int
    cached_encoder_calls: int
    naive_seconds: float
    encoder_once_seconds: float
    cached_seconds: float


def bench_decode(model: Model, image: np.ndarray, steps: Sequence[int], memory_len: Optional[int] = None) -> list[BenchRow]:
    """Run every engine for exactly N steps (EOS suppressed) for each N.

    Measured decoder qk-pair counts must equal the closed forms exactly and
    all engines must emit the same tokens; either failure raises.
    """
    m = model.config.encoder.memory_len
    if memory_len is not None and memory_len != m:
        raise ConfigError(f"model memory holds {m} rows, not {memory_len}")
    layers = model.config.decoder.layers
    rows = []
    for n in steps:
        timings, results = {}, {}
        for name, fn in (
            ("naive", greedy_decode_naive),
            ("encoder_once", greedy_decode_encoder_once),
            ("cached", greedy_decode_cached),
        ):
            t0 = time.perf_counter()
            results[name] = fn(image, model, n, suppress_eos=True)
            timings[name] = time.perf_counter() - t0
        ref = results["naive"].ids
        for name, res in results.items():
            if res.ids != ref:
                raise EngineMismatchError(f"{name} engine emitted {res.ids} but naive emitted {ref} (N={n})")
        row = BenchRow(
            steps=n,
            memory_len=m,
            layers=layers,
            naive_pairs=results["naive"].counter.qk_pairs,
            encoder_once_pairs=results["encoder_once"].counter.qk_pairs,
            cached_pairs=results["cached"].counter.qk_pairs,
            naive_predicted=naive_decoder_pairs(n, m, layers),
            cached_predicted=cached_decoder_pairs(n, m, layers),
            naive_encoder_calls=results["naive"].counter.encoder_calls,
            cached_encoder_calls=results["cached"].counter.encoder_calls,
            naive_seconds=timings["naive"],
            encoder_once_seconds=timings["encoder_once"],
            cached_seconds=timings["cached"],
        )
        if row.naive_pairs != row.naive_predicted or row.encoder_once_pairs != row.naive_predicted:
            raise AssertionError(f"naive qk-pairs {row.naive_pairs} != predicted {row.naive_predicted} (N={n})")
        if row.cached_pairs != row.cached_predicted:
            raise AssertionError(f"cached qk-pairs {row.cached_pairs} != predicted {row.cached_predicted} (N={n})")
        if row.naive_encoder_calls != n or row.cached_encoder_calls != 1:
            raise AssertionError(f"unexpected encoder call counts at N={n}")
        rows.append(row)
    return rows


def format_bench(rows: Sequence[BenchRow]) -> str:
    head = (
        f"{'N':>5} {'M':>4} {'L':>3} {'naive_qk':>10} {'enc_once_qk':>11} {'cached_qk':>10} "
        f"{'pred_naive':>10} {'pred_cached':>11} {'enc_calls':>9} {'naive_s':>8} {'cached_s':>8} {'speedup':>7}"
    )
    lines = [head]
    for r in rows:
        speed = r.naive_seconds / r.cached_seconds if r.cached_seconds > 0 else float("inf")
        lines.append(
            f"{r.steps:>5} {r.memory_len:>4} {r.layers:>3} {r.naive_pairs:>10} {r.encoder_once_pairs:>11} "
            f"{r.cached_pairs:>10} {r.naive_predicted:>10} {r.cached_predicted:>11} "
            f"{r.naive_encoder_calls:>4}/{r.cached_encoder_calls:<4} {r.naive_seconds:>8.3f} "
            f"{r.cached_seconds:>8.3f} {speed:>7.1f}"
        )
    return "\n".join(lines)
