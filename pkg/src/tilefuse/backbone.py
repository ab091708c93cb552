"""Seeded stand-in for the vision encoder.

Images are ``(H, W, 3)`` float64 arrays with values in ``[0, 1]``. The encoder
splits its input into ``p x p`` pixel patches, embeds each with a shared
affine map, then runs a chain of per-layer ``tanh(A_k z + c_k)`` blocks.
Layer ``l`` of the output is the state after ``l`` blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ShapeError
from .geometry import WindowRect


def as_image(img) -> np.ndarray:
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise ShapeError("image values must be finite and within [0, 1]")
    return img


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with pixel centres at ``(k + 0.5) / N``."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {out_h}x{out_w}")
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.shape[:2] == (out_h, out_w):
        return img.copy()
    out = _kernels.bilinear_resize(img, out_h, out_w)
    return np.clip(out, 0.0, 1.0)


def extract_patch(canvas_img: np.ndarray, rect: WindowRect) -> np.ndarray:
    H, W = canvas_img.shape[:2]
    top, left, side = rect.top_px, rect.left_px, rect.side_px
    if top < 0 or left < 0 or top + side > H or left + side > W:
        raise ShapeError(f"window {rect} exceeds {H}x{W} canvas")
    return canvas_img[top:top + side, left:left + side].copy()


@dataclass(frozen=True)
class BackboneParams:
    seed: int
    d_vit: int
    layer_ids: tuple
    patch_side: int
    input_side: int
    embed_w: np.ndarray  # (p*p*3, d_vit)
    embed_b: np.ndarray  # (d_vit,)
    block_w: tuple  # per block k = 1..max(layer_ids): (d_vit, d_vit)
    block_b: tuple

    @classmethod
    def create(cls, seed, d_vit=16, layer_ids=(1, 2, 3), patch_side=8, input_side=32,
               gain=1.5):
        layer_ids = tuple(sorted(set(layer_ids)))
        if not layer_ids or layer_ids[0] < 1:
            raise ShapeError(f"layer ids must be positive and non-empty, got {layer_ids}")
        if input_side % patch_side:
            raise ShapeError(f"encoder input side {input_side} not divisible by patch side {patch_side}")
        rng = np.random.default_rng(seed)
        fan_in = patch_side * patch_side * 3
        embed_w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, d_vit))
        embed_b = rng.normal(0.0, 0.5, size=d_vit)
        depth = layer_ids[-1]
        block_w = tuple(rng.normal(0.0, gain / np.sqrt(d_vit), size=(d_vit, d_vit)) for _ in range(depth))
        block_b = tuple(rng.normal(0.0, 0.1, size=d_vit) for _ in range(depth))
        return cls(seed, d_vit, layer_ids, patch_side, input_side, embed_w, embed_b, block_w, block_b)


def _patchify(img: np.ndarray, p: int) -> np.ndarray:
    H, W, C = img.shape
    if H % p or W % p:
        raise ShapeError(f"image side {H}x{W} not divisible by patch side {p}")
    x = img.reshape(H // p, p, W // p, p, C).transpose(0, 2, 1, 3, 4)
    return x.reshape(H // p, W // p, p * p * C)


def _run_layers(tokens: np.ndarray, params: BackboneParams, keep) -> dict:
    z = tokens @ params.embed_w + params.embed_b
    out = {}
    for k in range(params.layer_ids[-1]):
        z = np.tanh(z @ params.block_w[k] + params.block_b[k])
        if k + 1 in keep:
            out[k + 1] = z
    return out


def encode_patch(patch: np.ndarray, params: BackboneParams) -> dict:
    """Encode one window; returns ``{layer_id: (t, t, d_vit)}`` with ``t = input_side / p``."""
    side = params.input_side
    x = resize(patch, side, side)
    return _run_layers(_patchify(x, params.patch_side), params, set(params.layer_ids))


def encode_patches(patches: np.ndarray, params: BackboneParams) -> dict:
    """Batched :func:`encode_patch` over an ``(N, h, w, 3)`` stack of windows."""
    side = params.input_side
    batch = np.stack([_patchify(resize(p, side, side), params.patch_side) for p in patches])
    return _run_layers(batch, params, set(params.layer_ids))


def encode_global(img: np.ndarray, params: BackboneParams, low_h: int, low_w: int) -> np.ndarray:
    """Low-resolution whole-image tokens from the final encoder layer, raster order."""
    p = params.patch_side
    if low_h % p or low_w % p:
        raise ShapeError(f"low-resolution size {low_h}x{low_w} not divisible by patch side {p}")
    x = resize(img, low_h, low_w)
    last = params.layer_ids[-1]
    z = _run_layers(_patchify(x, p), params, {last})[last]
    return z.reshape(-1, params.d_vit)


def match_token_grid(grid: np.ndarray, side: int) -> np.ndarray:
    """Resample an encoder token grid ``(t, t, d)`` to ``(side, side, d)``.

    Block-averages when ``side`` divides ``t``; otherwise bilinear.
    """
    t = grid.shape[0]
    if t == side:
        return grid
    if t % side == 0:
        k = t // side
        return grid.reshape(side, k, side, k, grid.shape[-1]).mean(axis=(1, 3))
    return _kernels.bilinear_resize(np.ascontiguousarray(grid), side, side)
