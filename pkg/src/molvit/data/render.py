"""Deterministic line-drawing rasteriser and the training-time corruptions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from molvit.data.molecule import MoleculeGraph
from molvit.data.splitmix import SplitMix64

WHITE, BLACK = 255, 0

_FONT = {
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "N": ("#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "l": (".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
}
_GLYPHS = {ch: np.array([[c == "#" for c in row] for row in rows]) for ch, rows in _FONT.items()}


def _text_bitmap(text: str, scale: int) -> np.ndarray:
    parts = []
    for i, ch in enumerate(text):
        if i:
            parts.append(np.zeros((7, 1), dtype=bool))
        parts.append(_GLYPHS[ch])
    bm = np.concatenate(parts, axis=1)
    return np.kron(bm, np.ones((scale, scale), dtype=bool))


def glyph_scale(size: int) -> int:
    return max(1, size // 160)


def bond_offset(size: int) -> float:
    return max(1.0, size / 112)


def to_pixels(mol: MoleculeGraph, size: int) -> list[tuple[float, float]]:
    return [(x * (size - 1), y * (size - 1)) for x, y in mol.coords]


def draw_line(img: np.ndarray, p0, p1, value: int = BLACK) -> None:
    """1-pixel Bresenham segment, clipped to the image."""
    x0, y0 = int(round(p0[0])), int(round(p0[1]))
    x1, y1 = int(round(p1[0])), int(round(p1[1]))
    h, w = img.shape
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx, sy = (1 if x0 < x1 else -1), (1 if y0 < y1 else -1)
    err = dx + dy
    while True:
        if 0 <= x0 < w and 0 <= y0 < h:
            img[y0, x0] = value
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _offset_segment(a, b, d: float):
    vx, vy = b[0] - a[0], b[1] - a[1]
    norm = max(np.hypot(vx, vy), 1e-9)
    nx, ny = -vy / norm * d, vx / norm * d
    return (a[0] + nx, a[1] + ny), (b[0] + nx, b[1] + ny)


def _label_box(center, text: str, size: int) -> tuple[int, int, int, int]:
    bm = _text_bitmap(text, glyph_scale(size))
    h, w = bm.shape
    top = int(round(center[1])) - h // 2
    left = int(round(center[0])) - w // 2
    return top, left, h, w


def _blit(img: np.ndarray, bm: np.ndarray, top: int, left: int) -> None:
    h, w = bm.shape
    H, W = img.shape
    for r in range(h):
        for c in range(w):
            y, x = top + r, left + c
            if bm[r, c] and 0 <= y < H and 0 <= x < W:
                img[y, x] = BLACK


def _fill(img: np.ndarray, top: int, left: int, h: int, w: int, value: int) -> None:
    H, W = img.shape
    img[max(top, 0) : max(min(top + h, H), 0), max(left, 0) : max(min(left + w, W), 0)] = value


def render(mol: MoleculeGraph, size: int = 224) -> np.ndarray:
    """Grayscale drawing: white background, black 1-px bonds, hetero-atom labels.

    Carbon atoms are implicit (skeletal formula); double bonds are two parallel
    lines.
    """
    if size < 16:
        raise ValueError(f"image size {size} is too small")
    img = np.full((size, size), WHITE, dtype=np.uint8)
    pts = to_pixels(mol, size)
    d = bond_offset(size)
    for i, j, order in mol.bonds:
        if order == 1:
            draw_line(img, pts[i], pts[j])
        else:
            draw_line(img, *_offset_segment(pts[i], pts[j], d))
            draw_line(img, *_offset_segment(pts[i], pts[j], -d))
    for a, el in enumerate(mol.atoms):
        if el == "C":
            continue
        top, left, h, w = _label_box(pts[a], el, size)
        _fill(img, top - 1, left - 1, h + 2, w + 2, WHITE)
        _blit(img, _text_bitmap(el, glyph_scale(size)), top, left)
    return img


@dataclass(frozen=True)
class AugmentParams:
    sp_density: float = 0.0
    atom_drop: float = 0.0
    bond_single: float = 0.0
    artifacts: int = 0

    def __post_init__(self):
        for name in ("sp_density", "atom_drop", "bond_single"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.artifacts < 0:
            raise ValueError("artifacts must be >= 0")

    @property
    def is_identity(self) -> bool:
        return not (self.sp_density or self.atom_drop or self.bond_single or self.artifacts)


def augment(
    img: np.ndarray,
    rng: SplitMix64,
    params: AugmentParams,
    mol: Optional[MoleculeGraph] = None,
) -> np.ndarray:
    """Corrupt a rendered image; the label is never affected.

    Atom dropping and double-bond thinning need the molecule whose drawing
    ``img`` is, and are skipped without it. Salt-and-pepper noise is applied
    last so it also covers the other corruptions.
    """
    out = np.array(img, dtype=np.uint8, copy=True)
    size = out.shape[0]
    if mol is not None:
        pts = to_pixels(mol, size)
        if rng.random() < params.atom_drop:
            a = rng.randrange(len(mol.atoms))
            top, left, h, w = _label_box(pts[a], "Cl" if mol.atoms[a] == "Cl" else "N", size)
            _fill(out, top - 1, left - 1, h + 2, w + 2, WHITE)
        doubles = [(i, j) for i, j, order in mol.bonds if order == 2]
        if doubles and rng.random() < params.bond_single:
            i, j = rng.choice(doubles)
            draw_line(out, *_offset_segment(pts[i], pts[j], -bond_offset(size)), value=WHITE)
    if params.artifacts:
        h, w = out.shape
        for _ in range(rng.randrange(params.artifacts + 1)):
            x, y = rng.random() * (w - 1), rng.random() * (h - 1)
            length = (0.02 + 0.08 * rng.random()) * size
            angle = rng.random() * 2 * np.pi
            draw_line(out, (x, y), (x + length * np.cos(angle), y + length * np.sin(angle)))
    if params.sp_density > 0:
        g = rng.numpy()
        hit = g.random(out.shape) < params.sp_density
        salt = g.random(out.shape) < 0.5
        out[hit] = np.where(salt[hit], WHITE, BLACK)
    return out
