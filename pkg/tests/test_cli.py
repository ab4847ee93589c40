import math
import subprocess
import sys

import pytest

from molvit.cli import run


def out_of(capsys):
    captured = capsys.readouterr()
    return captured.out, captured.err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-data -> build-vocab -> 200-step tiny training, shared by the tests below."""
    d = tmp_path_factory.mktemp("cli")
    assert run(["gen-data", "--out", str(d / "data"), "--count", "8", "--size", "64", "--seed", "7"]) == 0
    assert run(["build-vocab", "--manifest", str(d / "data/manifest.tsv"), "--out", str(d / "vocab.txt")]) == 0
    code = run(["train", "--manifest", str(d / "data/manifest.tsv"), "--vocab", str(d / "vocab.txt"),
                "--out", str(d / "m.isck"), "--epochs", "200", "--steps", "200", "--quiet"])
    assert code == 0
    return d


def test_end_to_end_eval_is_finite(pipeline, capsys):
    d = pipeline
    code = run(["eval", "--ckpt", str(d / "m.isck"), "--vocab", str(d / "vocab.txt"),
                "--manifest", str(d / "data/manifest.tsv"), "--engine", "cached", "--report", str(d / "r.tsv")])
    assert code == 0
    summary = (d / "r.tsv.txt").read_text()
    mean = float(summary.split("mean_levenshtein ")[1].split()[0])
    assert math.isfinite(mean)
    out, _ = out_of(capsys)
    assert out.startswith("# resolved eval: ")


def test_infer_prints_a_caption(pipeline, capsys):
    d = pipeline
    capsys.readouterr()
    assert run(["infer", "--ckpt", str(d / "m.isck"), "--vocab", str(d / "vocab.txt"),
                "--image", str(d / "data/img_00000.pgm"), "--engine", "naive", "--max-len", "40"]) == 0
    out, _ = out_of(capsys)
    lines = out.splitlines()
    assert lines[0].startswith("# resolved infer:")
    assert len(lines) == 2


def test_bench_decode_table(pipeline, capsys):
    d = pipeline
    capsys.readouterr()
    assert run(["bench-decode", "--ckpt", str(d / "m.isck"), "--image", str(d / "data/img_00001.pgm"),
                "--steps", "1,4"]) == 0
    out, _ = out_of(capsys)
    table = out.splitlines()[1:]
    # tiny preset: 16 patches + class token, 2 decoder layers
    fields = table[2].split()
    assert int(fields[3]) == 2 * (30 + 17 * 10)
    assert int(fields[5]) == 2 * (10 + 17 * 4)


def test_gen_data_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run(["gen-data", "--out", str(tmp_path / name), "--count", "8", "--seed", "7", "--size", "224"]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_missing_checkpoint_exits_2(tmp_path, capsys):
    img = tmp_path / "x.pgm"
    img.write_bytes(b"P5\n1 1\n255\n\xff")
    (tmp_path / "v.txt").write_text("<PAD>\n<SOS>\n<EOS>\nC\n")
    code = run(["infer", "--ckpt", str(tmp_path / "nope.isck"), "--vocab", str(tmp_path / "v.txt"),
                "--image", str(img)])
    assert code == 2
    assert "nope.isck" in out_of(capsys)[1]


@pytest.mark.parametrize("argv", [["frobnicate"], ["gen-data", "--bogus"], []])
def test_usage_errors_exit_2(argv, capsys):
    assert run(argv) == 2
    assert "usage" in out_of(capsys)[1]


def test_config_file_precedence(tmp_path, capsys, pipeline):
    d = pipeline
    (tmp_path / "c.txt").write_text("# comment\nlr=0.5\nepochs = 2\nsteps=1\nseed=3\n")
    code = run(["train", "--manifest", str(d / "data/manifest.tsv"), "--vocab", str(d / "vocab.txt"),
                "--out", str(tmp_path / "c.isck"), "--config", str(tmp_path / "c.txt"), "--lr", "0.01", "--quiet"])
    assert code == 0
    echo = out_of(capsys)[0].splitlines()[0]
    assert " lr=0.01 " in echo and " epochs=2 " in echo and " seed=3 " in echo and " dim=64 " in echo
    (tmp_path / "bad.txt").write_text("nonsense=1\n")
    assert run(["train", "--manifest", str(d / "data/manifest.tsv"), "--vocab", str(d / "vocab.txt"),
                "--out", str(tmp_path / "d.isck"), "--config", str(tmp_path / "bad.txt")]) == 2
    assert not (tmp_path / "d.isck").exists()


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "molvit", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "bench-decode" in res.stdout
