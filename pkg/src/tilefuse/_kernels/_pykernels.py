"""Pure-numpy kernels. Reference behaviour for the compiled versions in _ckernels.pyx."""
import numpy as np


def ola_accumulate(num, den, lo, hi, feats, starts, weights):
    """Accumulate Hann-weighted window features onto a canvas in place.

    num : (T, T, d) weighted feature sums
    den : (T, T) weight sums
    lo, hi : (T, T, d) running min / max of contributing features
    feats : (N, t, t, d) window features, in the order they are added
    starts : (N, 2) integer token top-left corners
    weights : (t, t) window taper
    """
    t = weights.shape[0]
    wv = weights[:, :, None]
    for k in range(feats.shape[0]):
        r, c = int(starts[k, 0]), int(starts[k, 1])
        h = feats[k]
        num[r:r + t, c:c + t] += wv * h
        den[r:r + t, c:c + t] += weights
        np.minimum(lo[r:r + t, c:c + t], h, out=lo[r:r + t, c:c + t])
        np.maximum(hi[r:r + t, c:c + t], h, out=hi[r:r + t, c:c + t])


def _axis_coords(n_in, n_out):
    # pixel centres at (k + 0.5) / n
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def bilinear_resize(img, out_h, out_w):
    """Bilinear resize of an (H, W, C) float64 array with half-pixel centres."""
    y0, y1, wy = _axis_coords(img.shape[0], out_h)
    x0, x1, wx = _axis_coords(img.shape[1], out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = img[y0][:, x0] + wx * (img[y0][:, x1] - img[y0][:, x0])
    bot = img[y1][:, x0] + wx * (img[y1][:, x1] - img[y1][:, x0])
    return top + wy * (bot - top)
