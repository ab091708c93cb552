"""Hann-weighted overlap-add of per-window token features onto the canvas grid."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import StitchError
from .geometry import ScalePlan


@dataclass
class PatchFeatureGrid:
    scale_id: int
    layer_id: int
    window_index: tuple  # (i, j)
    tokens: np.ndarray  # (t_s, t_s, d_vit)


@dataclass
class FeatureCanvas:
    scale_id: int
    layer_id: int
    grid: np.ndarray  # (T_base, T_base, d_vit)
    weight_sums: np.ndarray  # (T_base, T_base)

    @property
    def base_tokens(self):
        return self.grid.shape[0]

    @property
    def width(self):
        return self.grid.shape[2]


def hann_weights(t_s: int) -> np.ndarray:
    """2D half-sample-offset Hann taper, ``h[n] = 0.5 (1 - cos(2 pi (n + 0.5) / t_s))``.

    Every entry is strictly positive, and two copies shifted by ``t_s / 2``
    sum to exactly one along each axis.
    """
    if t_s < 2 or t_s % 2:
        raise StitchError(f"Hann window side must be even and >= 2, got {t_s}")
    n = np.arange(t_s)
    h = 0.5 * (1.0 - np.cos(2.0 * np.pi * (n + 0.5) / t_s))
    # fold onto the first half so the taper is exactly flip-symmetric
    h = np.minimum(h, h[::-1])
    return np.outer(h, h)


def overlap_add(patches: Sequence[PatchFeatureGrid], plan: ScalePlan) -> FeatureCanvas:
    """Stitch one (scale, layer) set of window features into a canvas.

    Each canvas token is the Hann-weighted mean of every window covering it.
    Windows are accumulated in row-major order regardless of input order, and
    the result is clamped to the range of the contributing features so that
    rounding can never push it outside their convex hull.
    """
    t, T = plan.token_width, plan.base_tokens
    n = plan.windows_per_side
    by_index = {}
    for p in patches:
        by_index[tuple(p.window_index)] = p
    missing = [(i, j) for i in range(n) for j in range(n) if (i, j) not in by_index]
    if missing:
        raise StitchError(f"missing window features for windows {missing[:4]} (t_s={t})")
    if len(by_index) != n * n:
        extra = sorted(set(by_index) - {(i, j) for i in range(n) for j in range(n)})
        raise StitchError(f"unexpected windows {extra[:4]} for a {n}x{n} plan")

    first = by_index[(0, 0)]
    ids = {(p.scale_id, p.layer_id) for p in by_index.values()}
    if len(ids) != 1:
        raise StitchError(f"patches mix (scale, layer) pairs: {sorted(ids)}")
    d = first.tokens.shape[-1]

    feats = np.empty((n * n, t, t, d))
    starts = np.empty((n * n, 2), dtype=np.int64)
    k = 0
    for i, top in enumerate(plan.start_positions_tok):
        for j, left in enumerate(plan.start_positions_tok):
            tok = np.asarray(by_index[(i, j)].tokens, dtype=np.float64)
            if tok.shape != (t, t, d):
                raise StitchError(f"window ({i}, {j}) has shape {tok.shape}, expected {(t, t, d)}")
            feats[k] = tok
            starts[k] = (top, left)
            k += 1

    num = np.zeros((T, T, d))
    den = np.zeros((T, T))
    lo = np.full((T, T, d), np.inf)
    hi = np.full((T, T, d), -np.inf)
    _kernels.ola_accumulate(num, den, lo, hi, feats, starts, hann_weights(t))

    if not np.all(den > 0):
        u, v = np.argwhere(~(den > 0))[0]
        raise StitchError(f"zero accumulated weight at token ({u}, {v})")
    grid = np.clip(num / den[:, :, None], lo, hi)
    return FeatureCanvas(first.scale_id, first.layer_id, grid, den)


# -- binary debug dump -------------------------------------------------------

def dump_canvas(canvas: FeatureCanvas) -> bytes:
    """Header ``(T_base, d_vit)`` as little-endian u32, then row-major little-endian f64."""
    T, d = canvas.base_tokens, canvas.width
    return struct.pack("<II", T, d) + np.ascontiguousarray(canvas.grid, dtype="<f8").tobytes()


def load_canvas(blob: bytes) -> np.ndarray:
    T, d = struct.unpack_from("<II", blob, 0)
    body = np.frombuffer(blob, dtype="<f8", offset=8)
    if body.size != T * T * d:
        raise StitchError(f"canvas dump holds {body.size} values, header says {T}x{T}x{d}")
    return body.reshape(T, T, d).astype(np.float64)
