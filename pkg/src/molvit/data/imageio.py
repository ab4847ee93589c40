"""8-bit grayscale image files: binary PGM natively, PNG through Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from molvit.errors import DataError


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("PGM output needs a 2-D uint8 array")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def _pgm_header(buf: bytes) -> tuple[list[int], int]:
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ValueError("malformed PGM header")
        fields.append(int(buf[start:pos]))
    return fields, pos + 1


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    (w, h, maxval), pos = _pgm_header(buf)
    if maxval != 255:
        raise ValueError(f"only 8-bit PGM is supported, maxval={maxval}")
    data = buf[pos : pos + w * h]
    if len(data) != w * h:
        raise ValueError("PGM pixel data is truncated")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()


def read_image(path) -> np.ndarray:
    """Load an image as a 2-D uint8 array; raises DataError if unreadable."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(8)
        if magic[:2] == b"P5":
            return read_pgm(path)
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
