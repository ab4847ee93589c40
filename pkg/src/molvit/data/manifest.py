"""Sample manifests (``path<TAB>label`` TSV) and synthetic dataset generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from molvit.data.imageio import read_image, write_pgm
from molvit.data.molecule import MAX_ATOMS, gen_molecule
from molvit.data.render import AugmentParams, augment, render
from molvit.data.splitmix import sample_stream
from molvit.errors import DataError, TokenizerError
from molvit.tokenizer import Vocab, encode

HEADER = "path\tlabel"
SOURCE_PREFIX = "# source:"


@dataclass
class SampleManifest:
    rows: list[tuple[Path, str]]
    source: str = "external"
    base: Optional[Path] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def labels(self) -> list[str]:
        return [label for _, label in self.rows]

    def load_images(self) -> list[np.ndarray]:
        return [read_image(p) for p, _ in self.rows]


def load_manifest(path, vocab: Optional[Vocab] = None, check_images: bool = True) -> SampleManifest:
    """Parse and validate a manifest; image paths are relative to its directory.

    Lines starting with ``#`` are comments; ``# source: synthetic`` tags the
    manifest. Every problem is reported with its line number.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    rows, source = [], "external"
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"manifest {path} is not valid UTF-8: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith(SOURCE_PREFIX):
                source = line[len(SOURCE_PREFIX):].strip()
            continue
        if line == HEADER and not rows:
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise DataError(f"{path}:{lineno}: malformed row, expected 'path<TAB>label'")
        img_path = (base / parts[0]) if not Path(parts[0]).is_absolute() else Path(parts[0])
        if not img_path.is_file():
            raise DataError(f"{path}:{lineno}: image not found: {parts[0]}")
        if check_images:
            try:
                read_image(img_path)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
        if vocab is not None:
            try:
                encode(vocab, parts[1])
            except TokenizerError as exc:
                raise DataError(f"{path}:{lineno}: label rejected: {exc}") from exc
        rows.append((img_path, parts[1]))
    if not rows:
        raise DataError(f"{path}: no samples")
    return SampleManifest(rows, source, base)


def write_manifest(path, rows: list[tuple[str, str]], source: str = "synthetic") -> None:
    lines = [f"{SOURCE_PREFIX} {source}", HEADER] + [f"{p}\t{label}" for p, label in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def generate_sample(seed: int, index: int, size: int, params: AugmentParams, max_atoms: int = MAX_ATOMS):
    """(image, label) for one sample, a pure function of its arguments."""
    rng = sample_stream(seed, index)
    mol, label = gen_molecule(rng, max_atoms)
    img = render(mol, size)
    if not params.is_identity:
        img = augment(img, rng, params, mol)
    return img, label


def generate_dataset(
    out_dir,
    count: int,
    size: int = 224,
    seed: int = 0,
    params: AugmentParams = AugmentParams(),
    max_atoms: int = MAX_ATOMS,
) -> Path:
    """Write ``count`` PGM images plus ``manifest.tsv`` into ``out_dir``."""
    if count < 1:
        raise DataError("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(count):
        img, label = generate_sample(seed, i, size, params, max_atoms)
        name = f"img_{i:05d}.pgm"
        write_pgm(out / name, img)
        rows.append((name, label))
    manifest = out / "manifest.tsv"
    write_manifest(manifest, rows)
    return manifest
