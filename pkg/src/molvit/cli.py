"""Command-line entry point: ``molvit <subcommand> ...``.

Exit codes: 0 success, 1 internal/assertion failure, 2 usage, IO or
configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from molvit.checkpoint import load_checkpoint
from molvit.data.imageio import read_image
from molvit.data.manifest import generate_dataset, load_manifest
from molvit.data.molecule import MAX_ATOMS
from molvit.data.render import AugmentParams
from molvit.errors import CacheInvariantError, ConfigError, EngineMismatchError, MolvitError
from molvit.evaluation import bench_decode, evaluate, format_bench
from molvit.inference import ENGINES, greedy_decode
from molvit.model import PRESETS, Model, preset
from molvit.tokenizer import Vocab, build_vocab, decode
from molvit.training import TrainConfig, split_dataset, train

TRAIN_PRESETS = {"tiny": dict(lr=1e-3, batch_size=8), "paper": dict(lr=3e-5, batch_size=64)}

# key -> (type, default); the model part falls back to the chosen preset
TRAIN_KEYS = {
    "preset": (str, "tiny"),
    "epochs": (int, 10),
    "steps": (int, None),
    "batch_size": (int, None),
    "lr": (float, None),
    "decay": (float, 0.5),
    "decay_epochs": (int, 2),
    "clip_norm": (float, 1.0),
    "seed": (int, 0),
    "image_size": (int, None),
    "patch_size": (int, None),
    "dim": (int, None),
    "enc_layers": (int, None),
    "dec_layers": (int, None),
    "heads": (int, None),
    "ffn_dim": (int, None),
    "dropout": (float, None),
    "max_len": (int, 300),
    "pe_base": (float, 10000.0),
    "encoder_norm": (str, "pre"),
    "split": (int, 0),
}
MODEL_KEYS = ("image_size", "patch_size", "dim", "enc_layers", "dec_layers", "heads", "ffn_dim",
              "dropout", "max_len", "pe_base", "encoder_norm")


def read_config_file(path) -> dict[str, str]:
    """``key=value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in TRAIN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_train_config(args: argparse.Namespace) -> dict:
    """Defaults < config file < command-line flags."""
    resolved = {k: default for k, (_, default) in TRAIN_KEYS.items()}
    if args.config:
        for key, value in read_config_file(args.config).items():
            typ = TRAIN_KEYS[key][0]
            try:
                resolved[key] = None if value.lower() == "none" else typ(value)
            except ValueError:
                raise ConfigError(f"config value {key}={value!r} is not a valid {typ.__name__}") from None
    for key in TRAIN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    if resolved["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {resolved['preset']!r}")
    for key, value in PRESETS[resolved["preset"]].items():
        if resolved.get(key) is None:
            resolved[key] = value
    for key, value in TRAIN_PRESETS[resolved["preset"]].items():
        if resolved.get(key) is None:
            resolved[key] = value
    if resolved["clip_norm"] is not None and resolved["clip_norm"] <= 0:
        resolved["clip_norm"] = None
    return resolved


def echo_config(command: str, settings: dict) -> None:
    items = " ".join(f"{k}={settings[k]}" for k in sorted(settings))
    print(f"# resolved {command}: {items}", flush=True)


def _load_vocab(path) -> Vocab:
    if not Path(path).is_file():
        raise ConfigError(f"vocabulary file not found: {path}")
    return Vocab.load(path)


def _load_model(path) -> Model:
    return load_checkpoint(path)


def cmd_gen_data(args) -> int:
    params = AugmentParams(args.sp_density, args.atom_drop, args.bond_single, args.artifacts)
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    if args.size < 16:
        raise ConfigError("--size must be at least 16 pixels")
    if not 1 <= args.max_atoms <= MAX_ATOMS:
        raise ConfigError(f"--max-atoms must be within 1..{MAX_ATOMS}")
    settings = dict(out=args.out, count=args.count, size=args.size, seed=args.seed, max_atoms=args.max_atoms,
                    sp_density=args.sp_density, atom_drop=args.atom_drop, bond_single=args.bond_single,
                    artifacts=args.artifacts)
    echo_config("gen-data", settings)
    manifest = generate_dataset(args.out, args.count, args.size, args.seed, params, args.max_atoms)
    print(
        f"molvit gen-data --out {args.out} --count {args.count} --size {args.size} --seed {args.seed} "
        f"--max-atoms {args.max_atoms} --sp-density {args.sp_density} --atom-drop {args.atom_drop} "
        f"--bond-single {args.bond_single} --artifacts {args.artifacts}"
    )
    print(f"wrote {manifest}")
    return 0


def cmd_build_vocab(args) -> int:
    echo_config("build-vocab", dict(manifest=args.manifest, out=args.out))
    manifest = load_manifest(args.manifest, check_images=False)
    vocab = build_vocab(manifest.labels)
    vocab.save(args.out)
    print(f"vocabulary of {len(vocab)} tokens written to {args.out}")
    return 0


def cmd_train(args) -> int:
    s = resolve_train_config(args)
    vocab = _load_vocab(args.vocab)
    manifest = load_manifest(args.manifest, vocab=vocab)
    echo_config("train", dict(s, manifest=args.manifest, vocab=args.vocab, out=args.out))
    cfg = preset(s["preset"], len(vocab), **{k: s[k] for k in MODEL_KEYS})
    tcfg = TrainConfig(
        epochs=s["epochs"], lr=s["lr"], decay=s["decay"], decay_epochs=s["decay_epochs"],
        batch_size=s["batch_size"], clip_norm=s["clip_norm"], max_steps=s["steps"], seed=s["seed"],
    )
    rows = list(zip(manifest.load_images(), manifest.labels))
    if s["split"]:
        rows, val, test = split_dataset(rows, s["seed"])
        print(f"split: train {len(rows)} validation {len(val)} test {len(test)}")
    model = Model.init(cfg, seed=s["seed"])
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        def on_log(line: str) -> None:
            if log_fh:
                log_fh.write(line + "\n")
            if not args.quiet:
                print(line)

        result = train(model, [r[0] for r in rows], [r[1] for r in rows], vocab, tcfg, Path(args.out), on_log)
    finally:
        if log_fh:
            log_fh.close()
    for epoch, loss in enumerate(result.epoch_losses, start=1):
        if not args.quiet or epoch == len(result.epoch_losses):
            print(f"epoch {epoch} mean_loss {loss:.6f}")
    print(f"checkpoint written to {args.out} after {result.steps} steps")
    return 0


def cmd_infer(args) -> int:
    echo_config("infer", dict(ckpt=args.ckpt, vocab=args.vocab, image=args.image, engine=args.engine))
    model = _load_model(args.ckpt)
    vocab = _load_vocab(args.vocab)
    if model.config.decoder.vocab_size != len(vocab):
        raise ConfigError(f"checkpoint expects {model.config.decoder.vocab_size} tokens, vocabulary has {len(vocab)}")
    img = read_image(args.image)
    result = greedy_decode(img, model, args.engine, args.max_len)
    print(decode(vocab, result.sequence))
    return 0


def cmd_eval(args) -> int:
    echo_config("eval", dict(ckpt=args.ckpt, vocab=args.vocab, manifest=args.manifest, engine=args.engine,
                             report=args.report))
    model = _load_model(args.ckpt)
    vocab = _load_vocab(args.vocab)
    manifest = load_manifest(args.manifest)
    report = evaluate(model, manifest.load_images(), manifest.labels, vocab, args.engine, args.max_len)
    tsv, txt = report.write(args.report)
    print(report.summary(), end="")
    print(f"report written to {tsv} and {txt}")
    return 0


def cmd_bench(args) -> int:
    try:
        steps = [int(s) for s in args.steps.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--steps must be a comma-separated list of integers, got {args.steps!r}") from None
    if not steps or min(steps) < 1:
        raise ConfigError("--steps needs positive integers")
    echo_config("bench-decode", dict(ckpt=args.ckpt, image=args.image, steps=",".join(map(str, steps))))
    model = _load_model(args.ckpt)
    if max(steps) > model.config.decoder.max_len:
        raise ConfigError(f"steps exceed the decoder max_len {model.config.decoder.max_len}")
    img = read_image(args.image)
    print(format_bench(bench_decode(model, img, steps)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="molvit", description="ViT image-to-InChI captioning toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic molecule images and a manifest")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--size", type=int, default=224)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-atoms", type=int, default=MAX_ATOMS)
    g.add_argument("--sp-density", type=float, default=0.0)
    g.add_argument("--atom-drop", type=float, default=0.0)
    g.add_argument("--bond-single", type=float, default=0.0)
    g.add_argument("--artifacts", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    v = sub.add_parser("build-vocab", help="build a vocabulary from manifest labels")
    v.add_argument("--manifest", required=True)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_build_vocab)

    t = sub.add_parser("train", help="train a model with teacher forcing")
    t.add_argument("--manifest", required=True)
    t.add_argument("--vocab", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="key=value file; flags override it")
    t.add_argument("--preset", choices=sorted(PRESETS))
    for key, (typ, _) in TRAIN_KEYS.items():
        if key in ("preset", "split"):
            continue
        t.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)
    t.add_argument("--no-clip", dest="clip_norm", action="store_const", const=0.0)
    t.add_argument("--split", dest="split", action="store_const", const=1,
                   help="train on the 70%% split only")
    t.add_argument("--log", help="also write loss lines to this file")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="caption one image")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--vocab", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--engine", choices=sorted(ENGINES), default="cached")
    i.add_argument("--max-len", type=int)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="mean Levenshtein distance over a manifest")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--vocab", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--engine", choices=sorted(ENGINES), default="cached")
    e.add_argument("--report", required=True)
    e.add_argument("--max-len", type=int)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench-decode", help="compare decoding engines by exact qk-pair counts")
    b.add_argument("--ckpt", required=True)
    b.add_argument("--image", required=True)
    b.add_argument("--steps", default="16,32,64,128")
    b.set_defaults(func=cmd_bench)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (AssertionError, EngineMismatchError, CacheInvariantError) as exc:
        print(f"molvit: internal check failed: {exc}", file=sys.stderr)
        return 1
    except (MolvitError, OSError) as exc:
        print(f"molvit: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
