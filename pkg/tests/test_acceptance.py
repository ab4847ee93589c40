"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

import conftest
from helpers import finite_difference, max_rel_error, random_model, recursive_levenshtein
from molvit import tensor as T
from molvit.cli import run
from molvit.data import generate_sample, load_manifest
from molvit.data.render import AugmentParams
from molvit.encoder import EncoderConfig, patchify
from molvit.errors import ConfigError, ShapeError
from molvit.evaluation import evaluate, levenshtein
from molvit.inference import (
    DecodeCache,
    cached_decoder_pairs,
    greedy_decode_cached,
    greedy_decode_encoder_once,
    greedy_decode_naive,
    naive_decoder_pairs,
    step_cached,
)
from molvit.model import Model, ModelConfig, preset
from molvit.tokenizer import build_vocab, decode, encode, split
from molvit.training import TrainConfig, batch_loss, lr_at_epoch, split_dataset, train

from test_tokenizer import C13_LABEL


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def tiny_config(rng, vocab=None, max_len=40):
    dim = int(rng.choice([4, 8, 16]))
    heads = int(rng.choice([h for h in (1, 2, 4) if dim % h == 0]))
    patch = int(rng.choice([2, 4]))
    h, w = patch * int(rng.integers(1, 3)), patch * int(rng.integers(1, 3))
    v = vocab if vocab is not None else int(rng.integers(4, 11))
    return ModelConfig.build(v, image_size=(h, w), patch_size=patch, dim=dim, enc_layers=1, dec_layers=1,
                             heads=heads, dropout=0.0, max_len=max_len)


def test_criterion_01_gradient_check():
    t0 = time.perf_counter()
    worst = {np.float32: 0.0, np.float64: 0.0}
    rng = np.random.default_rng(2024)
    configs = 5
    for trial in range(configs):
        cfg = tiny_config(rng)
        h, w = cfg.encoder.image_size
        v = cfg.decoder.vocab_size
        seqs = [[1] + list(rng.integers(3, v, size=int(rng.integers(1, 5)))) + [2] for _ in range(2)]
        pixels = rng.random((2, h, w, 1))
        for dtype, step in ((np.float32, 1e-3), (np.float64, 1e-6)):
            with T.precision(dtype):
                m = random_model(cfg, seed=trial, dtype=dtype)
                imgs = pixels.astype(dtype)
                with T.Tape() as tape:
                    loss = batch_loss(m, imgs, seqs)
                tape.backward(loss)
                numeric = finite_difference(lambda: batch_loss(m, imgs, seqs).data,
                                            {k: p.data for k, p in m.weights.items()}, step)
            err = max(max_rel_error(p.grad, numeric[k]) for k, p in m.weights.items())
            worst[dtype] = max(worst[dtype], err)
    secs = time.perf_counter() - t0
    ok = worst[np.float32] < 1e-2 and worst[np.float64] < 1e-5 and secs < 60
    report(1, ok, f"{configs} configs, max rel err fp32 {worst[np.float32]:.2e} (<1e-2), "
                  f"fp64 {worst[np.float64]:.2e} (<1e-5), {secs:.1f}s (<60s)")


def test_criterion_02_engine_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches, lengths = 0, []
    for trial in range(20):
        cfg = tiny_config(rng, max_len=40)
        m = random_model(cfg, seed=100 + trial, std=float(rng.uniform(0.2, 0.6)))
        h, w = cfg.encoder.image_size
        img = rng.random((h, w, 1)).astype(np.float32)
        naive = greedy_decode_naive(img, m, 32).ids
        cached = greedy_decode_cached(img, m, 32).ids
        mismatches += naive != cached
        lengths.append(len(naive))
    secs = time.perf_counter() - t0
    report(2, mismatches == 0 and secs < 60,
           f"20 models, {mismatches} mismatches, lengths {min(lengths)}..{max(lengths)}, {secs:.1f}s (<60s)")


def cost_model(image_size, layers, max_len=140):
    cfg = ModelConfig.build(6, image_size=image_size, patch_size=16, dim=8, enc_layers=1, dec_layers=layers,
                            heads=2, dropout=0.0, max_len=max_len)
    return random_model(cfg, seed=layers)


def measured(m, n):
    h, w = m.config.encoder.image_size
    img = np.random.default_rng(n).random((h, w, 1)).astype(np.float32)
    naive = greedy_decode_naive(img, m, n, suppress_eos=True)
    once = greedy_decode_encoder_once(img, m, n, suppress_eos=True)
    cached = greedy_decode_cached(img, m, n, suppress_eos=True)
    assert naive.ids == once.ids == cached.ids
    assert naive.counter.encoder_calls == n and cached.counter.encoder_calls == 1
    return naive.counter.qk_pairs, once.counter.qk_pairs, cached.counter.qk_pairs


def test_criterion_03_cost_law():
    exact = True
    models = {5: cost_model((32, 32), 2), 16: cost_model((48, 80), 2)}
    for mem, m in models.items():
        assert m.config.encoder.memory_len == mem
        for n in (1, 4, 16, 64):
            naive, once, cached = measured(m, n)
            exact &= naive == once == naive_decoder_pairs(n, mem, 2)
            exact &= cached == cached_decoder_pairs(n, mem, 2)
    hand = measured(cost_model((16, 144), 1), 4)
    exact &= hand == (130, 130, 50)
    m16 = models[16]
    n64, _, c64 = measured(m16, 64)
    n128, _, c128 = measured(m16, 128)
    naive_ratio, cached_ratio = n128 / n64, c128 / c64
    pred_naive = naive_decoder_pairs(128, 16) / naive_decoder_pairs(64, 16)
    pred_cached = cached_decoder_pairs(128, 16) / cached_decoder_pairs(64, 16)
    within = abs(naive_ratio / pred_naive - 1) < 0.15 and abs(cached_ratio / pred_cached - 1) < 0.15
    report(3, exact and within,
           f"counts exact for N in 1,4,16,64 and M in 5,16 (N=4 M=10 L=1: {hand[0]} vs {hand[2]}); "
           f"N 64->128 ratios naive {naive_ratio:.3f} (closed form {pred_naive:.3f}), "
           f"cached {cached_ratio:.3f} (closed form {pred_cached:.3f})")


def test_criterion_04_causality():
    rng = np.random.default_rng(4)
    violations = 0
    for case in range(50):
        cfg = tiny_config(rng, max_len=20)
        m = random_model(cfg, seed=case)
        h, w = cfg.encoder.image_size
        mem = m.encode(rng.random((h, w, 1)).astype(np.float32))
        v = cfg.decoder.vocab_size
        t = int(rng.integers(2, 16))
        toks = rng.integers(0, v, size=t)
        pos = int(rng.integers(0, t))
        base = m.decode(toks, mem).data
        toks[pos] = (toks[pos] + 1 + rng.integers(0, v - 1)) % v
        moved = m.decode(toks, mem).data
        violations += not np.array_equal(base[:pos], moved[:pos])
    report(4, violations == 0, f"50 cases, {violations} earlier-row changes (bit-exact)")


def test_criterion_05_prefix_consistency():
    rng = np.random.default_rng(5)
    worst = 0.0
    for case in range(50):
        cfg = tiny_config(rng, max_len=24)
        m = random_model(cfg, seed=case)
        h, w = cfg.encoder.image_size
        mem = m.encode(rng.random((h, w, 1)).astype(np.float32))
        toks = [1] + list(rng.integers(0, cfg.decoder.vocab_size, size=int(rng.integers(0, 20))))
        full = m.decode(toks, mem).data
        cache = DecodeCache(m, mem)
        for t, tok in enumerate(toks):
            worst = max(worst, float(np.abs(step_cached(cache, int(tok), m) - full[t]).max()))
    report(5, worst < 1e-4, f"50 prefixes, max |step - full| {worst:.2e} (<1e-4)")


@pytest.mark.slow
def test_criterion_06_overfit_eight_samples():
    t0 = time.perf_counter()
    samples = [generate_sample(3, i, 64, AugmentParams()) for i in range(8)]
    images, labels = [s[0] for s in samples], [s[1] for s in samples]
    vocab = build_vocab(labels)
    model = Model.init(preset("tiny", len(vocab)), seed=0)
    steps, mean = 0, float("inf")
    while steps < 2000 and mean > 0:
        res = train(model, images, labels, vocab,
                    TrainConfig(epochs=200, lr=1e-3, batch_size=8, decay_epochs=0, seed=steps))
        steps += res.steps
        mean = evaluate(model, images, labels, vocab, "cached").mean_distance
    secs = time.perf_counter() - t0
    report(6, mean == 0 and steps <= 2000 and secs < 600,
           f"tiny preset, 8 samples, {steps} steps, mean Levenshtein {mean:.3f} (cached engine), {secs:.1f}s")


def test_criterion_07_tokenizer():
    labels = [generate_sample(11, i, 64, AugmentParams())[1] for i in range(1000)] + [C13_LABEL]
    vocab = build_vocab(labels)
    round_trip = sum(decode(vocab, encode(vocab, s)) == s for s in labels)
    rng = np.random.default_rng(7)
    strings = ["".join(chr(c) for c in rng.integers(0, 128, size=int(rng.integers(0, 40)))) for _ in range(1000)]
    lossless = sum("".join(split(s)) == s for s in strings)
    report(7, round_trip == len(labels) and lossless == len(strings),
           f"round trip {round_trip}/{len(labels)} labels (incl. the C13H20OS label), "
           f"lossless split {lossless}/{len(strings)} random ASCII strings")


def test_criterion_08_patch_math():
    counts = (EncoderConfig(384, 16).num_patches, EncoderConfig(224, 16).num_patches)
    shapes = (patchify(np.zeros((384, 384)), 16).shape[0], patchify(np.zeros((224, 224)), 16).shape[0])
    rejected = 0
    for size in (200, 385, 383):
        try:
            EncoderConfig(size, 16)
        except ConfigError:
            rejected += 1
        try:
            patchify(np.zeros((size, size)), 16)
        except ShapeError:
            rejected += 1
    report(8, counts == (576, 196) and shapes == counts and rejected == 6,
           f"384/16 -> {counts[0]}, 224/16 -> {counts[1]} patches; {rejected}/6 indivisible cases rejected")


def test_criterion_09_levenshtein():
    rng = np.random.default_rng(9)
    alphabet = list("abcC1=(")

    def rand_str():
        return "".join(rng.choice(alphabet, size=int(rng.integers(0, 13))))

    bad = 0
    for _ in range(1000):
        a, b, c = rand_str(), rand_str(), rand_str()
        d = levenshtein(a, b)
        bad += d != recursive_levenshtein(a, b)
        bad += d != levenshtein(b, a)
        bad += (d == 0) != (a == b)
        bad += levenshtein(a, c) > d + levenshtein(b, c)
    kitten = levenshtein("kitten", "sitting")
    report(9, bad == 0 and kitten == 3, f"1000 pairs, {bad} oracle/metric violations; kitten/sitting = {kitten}")


def test_criterion_10_init_loss_and_schedule():
    samples = [generate_sample(10, i, 64, AugmentParams()) for i in range(8)]
    labels = [s[1] for s in samples]
    vocab = build_vocab(labels)
    model = Model.init(preset("tiny", len(vocab)), seed=0)
    images = np.stack([model.prepare(s[0]) for s in samples])
    loss = float(batch_loss(model, images, [encode(vocab, s) for s in labels]).data)
    rel = abs(loss - math.log(len(vocab))) / math.log(len(vocab))
    cfg = TrainConfig(epochs=10, lr=3e-5)
    lrs = [lr_at_epoch(cfg, e) for e in (1, 9, 10)]
    sched_ok = all(math.isclose(a, b, rel_tol=1e-12) for a, b in zip(lrs, (3e-5, 1.5e-5, 7.5e-6)))
    report(10, rel < 0.15 and sched_ok,
           f"first-batch loss {loss:.4f} vs ln V {math.log(len(vocab)):.4f} ({rel:.1%} off, <15%); "
           f"lr at epochs 1/9/10 = {lrs[0]:.2e}/{lrs[1]:.2e}/{lrs[2]:.2e}")


def end_to_end(root):
    root.mkdir()
    assert run(["gen-data", "--out", str(root / "data"), "--count", "6", "--size", "64", "--seed", "5",
                "--sp-density", "0.01"]) == 0
    assert run(["build-vocab", "--manifest", str(root / "data/manifest.tsv"), "--out", str(root / "vocab.txt")]) == 0
    assert run(["train", "--manifest", str(root / "data/manifest.tsv"), "--vocab", str(root / "vocab.txt"),
                "--out", str(root / "model.isck"), "--epochs", "20", "--batch-size", "3", "--seed", "1",
                "--log", str(root / "loss.log"), "--quiet"]) == 0
    assert run(["eval", "--ckpt", str(root / "model.isck"), "--vocab", str(root / "vocab.txt"),
                "--manifest", str(root / "data/manifest.tsv"), "--report", str(root / "report.tsv")]) == 0
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_reproducibility(tmp_path, capsys):
    a = end_to_end(tmp_path / "a")
    b = end_to_end(tmp_path / "b")
    capsys.readouterr()
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    report(11, same, f"{len(a)} artifacts (images, manifest, vocab, checkpoint, loss log, reports) byte-identical")


def test_criterion_12_split_sizes():
    items = list(range(100))
    tr, va, te = split_dataset(items, seed=12)
    disjoint = not (set(tr) & set(va) or set(tr) & set(te) or set(va) & set(te))
    covering = sorted(tr + va + te) == items
    sizes = (len(tr), len(va), len(te))
    report(12, sizes == (70, 20, 10) and disjoint and covering,
           f"n=100 -> {sizes}, disjoint={disjoint}, covering={covering}")
