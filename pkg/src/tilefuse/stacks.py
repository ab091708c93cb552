"""Phase-subsampled detail stacks built from stitched canvases."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .errors import MissingCanvasError, ShapeError
from .stitch import FeatureCanvas


class PhaseOffset(NamedTuple):
    a: int
    b: int


@dataclass
class RawSequence:
    tokens: np.ndarray  # (L_r, d)
    coords: np.ndarray  # (L_r, 2) canvas (u, v) of each token


@dataclass
class DetailStack:
    scale_id: int
    layer_id: int
    offset: PhaseOffset
    tokens: np.ndarray  # (T_v, d)
    raw_length: int
    coords: np.ndarray  # canvas coordinates of the kept (non-pad) tokens

    @property
    def key(self):
        return (self.scale_id, self.layer_id, self.offset.a, self.offset.b)


@dataclass
class StackBank:
    stacks: list
    f: int
    scales: tuple
    layers: tuple
    stack_length: int = field(default=0)

    def __len__(self):
        return len(self.stacks)

    def as_array(self) -> np.ndarray:
        """All stacks as one ``(N_stack, T_v, d)`` array in bank order."""
        return np.stack([s.tokens for s in self.stacks])


def phase_offsets(f: int) -> list[PhaseOffset]:
    if f < 1:
        raise ValueError(f"downsample factor must be >= 1, got {f}")
    return [PhaseOffset(a, b) for a in range(f) for b in range(f)]


def phase_length(T: int, off: PhaseOffset, f: int) -> int:
    """Number of grid points congruent to ``off`` modulo ``f`` on a ``T x T`` grid."""
    return (-(-(T - off.a) // f)) * (-(-(T - off.b) // f))


def subsample(canvas: FeatureCanvas, off: PhaseOffset, f: int) -> RawSequence:
    grid = canvas.grid
    T = grid.shape[0]
    rows = np.arange(off.a, T, f)
    cols = np.arange(off.b, T, f)
    tokens = grid[off.a::f, off.b::f].reshape(-1, grid.shape[2])
    uu, vv = np.meshgrid(rows, cols, indexing="ij")
    coords = np.stack([uu.ravel(), vv.ravel()], axis=1)
    return RawSequence(tokens.copy(), coords)


def fit_length(seq: RawSequence, stack_length: int):
    """Truncate to the raster prefix or zero-pad at the tail.

    Returns ``(tokens, raw_length, kept_coords)``.
    """
    if stack_length < 1:
        raise ValueError(f"stack length must be >= 1, got {stack_length}")
    L, d = seq.tokens.shape
    if L >= stack_length:
        return seq.tokens[:stack_length].copy(), L, seq.coords[:stack_length].copy()
    out = np.zeros((stack_length, d))
    out[:L] = seq.tokens
    return out, L, seq.coords.copy()


def build_bank(canvases: Mapping, f: int, stack_length: int,
               scales=None, layers=None) -> StackBank:
    """Assemble the bank in lexicographic ``(scale, layer, a, b)`` order.

    ``scales`` and ``layers`` default to those present in ``canvases``; when
    given, every pair of their product must have a canvas.
    """
    scales = tuple(sorted(scales if scales is not None else {k[0] for k in canvases}))
    layers = tuple(sorted(layers if layers is not None else {k[1] for k in canvases}))
    offsets = phase_offsets(f)
    widths = set()
    stacks = []
    for s in scales:
        for layer in layers:
            if (s, layer) not in canvases:
                raise MissingCanvasError((s, layer))
            canvas = canvases[(s, layer)]
            widths.add(canvas.width)
            for off in offsets:
                tokens, raw, kept = fit_length(subsample(canvas, off, f), stack_length)
                stacks.append(DetailStack(s, layer, off, tokens, raw, kept))
    if len(widths) > 1:
        raise ShapeError(f"canvases disagree on feature width: {sorted(widths)}")
    assert len(stacks) == len(scales) * len(layers) * f * f
    return StackBank(stacks, f, scales, layers, stack_length)


def dump_bank(bank: StackBank) -> bytes:
    """Header ``(N_stack, T_v, d_vit)`` as little-endian u32, then f64 tokens in bank order."""
    arr = np.ascontiguousarray(bank.as_array(), dtype="<f8")
    n, T_v, d = arr.shape
    return struct.pack("<III", n, T_v, d) + arr.tobytes()


def load_bank(blob: bytes) -> np.ndarray:
    n, T_v, d = struct.unpack_from("<III", blob, 0)
    body = np.frombuffer(blob, dtype="<f8", offset=12)
    if body.size != n * T_v * d:
        raise ShapeError(f"bank dump holds {body.size} values, header says {n}x{T_v}x{d}")
    return body.reshape(n, T_v, d).astype(np.float64)
