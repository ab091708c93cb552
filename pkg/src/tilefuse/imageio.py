"""Binary PPM (P6) reading/writing and the seeded synthetic image generator."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header fields, skipping comments."""
    fields, pos = [], 2
    while len(fields) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ShapeError("truncated PPM header")
        fields.append(int(data[start:pos]))
    # exactly one whitespace byte separates header from raster
    return fields, pos + 1


def read_ppm(path_or_bytes) -> np.ndarray:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            data = fh.read()
    if data[:2] != b"P6":
        raise ShapeError("not a binary PPM (P6) file")
    (w, h, maxval), pos = _tokens(data, 3)
    if maxval != 255:
        raise ShapeError(f"only maxval 255 is supported, got {maxval}")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return raster.reshape(h, w, 3).astype(np.float64) / 255.0


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    h, w = img.shape[:2]
    raster = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(raster.tobytes())


def _hash_noise(seed: int, side: int) -> np.ndarray:
    # splitmix64 finaliser over (seed, y, x, channel)
    y, x, c = np.meshgrid(np.arange(side, dtype=np.uint64), np.arange(side, dtype=np.uint64),
                          np.arange(3, dtype=np.uint64), indexing="ij")
    with np.errstate(over="ignore"):
        z = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0x9E3779B97F4A7C15)
             + (y * np.uint64(side) + x) * np.uint64(3) + c + np.uint64(1))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def synth_image(seed: int, side: int, min_side: int = 1) -> np.ndarray:
    """Hash-noise background with three seeded rectangles of distinct colours.

    ``min_side`` is the smallest legal side (normally the patch side).
    """
    if side < max(min_side, 1):
        raise ShapeError(f"synthetic image side {side} is smaller than {max(min_side, 1)}")
    img = 0.25 + 0.5 * _hash_noise(seed, side)
    rng = np.random.default_rng([seed, side])
    colours = [(0.9, 0.15, 0.1), (0.1, 0.8, 0.2), (0.15, 0.2, 0.95)]
    for colour in colours:
        h, w = rng.integers(max(1, side // 8), max(2, side // 2), size=2)
        top = int(rng.integers(0, side - h + 1))
        left = int(rng.integers(0, side - w + 1))
        img[top:top + h, left:left + w] = colour
    return img
