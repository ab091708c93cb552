"""Brute-force reference computations used by the tests.

Nothing here imports the code under test; each oracle is written from the
defining formula with explicit loops.
"""
import math

import numpy as np


def even_divisors(T, d_min):
    return [d for d in range(1, T + 1) if T % d == 0 and d % 2 == 0 and d >= d_min]


def hann_1d(t):
    return [0.5 * (1.0 - math.cos(2.0 * math.pi * (n + 0.5) / t)) for n in range(t)]


def window_starts(T, t):
    tau = t // 2
    starts, s = [], 0
    while s + t <= T:
        starts.append(s)
        s += tau
    return starts


def coverage_counts(T, t):
    cov = [[0] * T for _ in range(T)]
    for top in window_starts(T, t):
        for left in window_starts(T, t):
            for u in range(top, top + t):
                for v in range(left, left + t):
                    cov[u][v] += 1
    return cov


def overlap_add_loop(T, t, windows):
    """``windows[(i, j)]`` is a (t, t, d) array; returns (canvas, weight_sums)."""
    h = hann_1d(t)
    starts = window_starts(T, t)
    d = next(iter(windows.values())).shape[2]
    num = [[[0.0] * d for _ in range(T)] for _ in range(T)]
    den = [[0.0] * T for _ in range(T)]
    for i, top in enumerate(starts):
        for j, left in enumerate(starts):
            H = windows[(i, j)]
            for a in range(t):
                for b in range(t):
                    w = h[a] * h[b]
                    u, v = top + a, left + b
                    den[u][v] += w
                    for c in range(d):
                        num[u][v][c] += w * float(H[a, b, c])
    out = np.array([[[num[u][v][c] / den[u][v] for c in range(d)] for v in range(T)] for u in range(T)])
    return out, np.array(den)


def contributor_range(T, t, windows):
    """Per-token, per-channel min and max over all windows covering the token."""
    starts = window_starts(T, t)
    d = next(iter(windows.values())).shape[2]
    lo = np.full((T, T, d), np.inf)
    hi = np.full((T, T, d), -np.inf)
    for i, top in enumerate(starts):
        for j, left in enumerate(starts):
            H = windows[(i, j)]
            for a in range(t):
                for b in range(t):
                    for c in range(d):
                        x = float(H[a, b, c])
                        lo[top + a, left + b, c] = min(lo[top + a, left + b, c], x)
                        hi[top + a, left + b, c] = max(hi[top + a, left + b, c], x)
    return lo, hi


def mean_loop(tokens):
    n, d = len(tokens), len(tokens[0])
    return [sum(float(tokens[k][c]) for k in range(n)) / n for c in range(d)]


def affine_loop(x, w, b):
    return [sum(x[i] * w[i][o] for i in range(len(x))) + b[o] for o in range(len(b))]


def router_loop(H_vis, stacks, q_w, q_b, k_w, k_b):
    """Router weights and fused detail from the defining sums.

    ``stacks`` is (N, T_v, d). Returns (alpha list, M as (T_v, d) array).
    """
    N, T_v, d = stacks.shape
    q = affine_loop(mean_loop(H_vis), q_w, q_b)
    logits = []
    for i in range(N):
        k = affine_loop(mean_loop(stacks[i]), k_w, k_b)
        logits.append(sum(k[c] * q[c] for c in range(d)) / math.sqrt(d))
    m = max(logits)
    ex = [math.exp(z - m) for z in logits]
    total = sum(ex)
    alpha = [e / total for e in ex]
    M = np.zeros((T_v, d))
    for t in range(T_v):
        for c in range(d):
            M[t, c] = sum(alpha[i] * stacks[i, t, c] for i in range(N))
    return alpha, M


def layer_norm_loop(x, eps=1e-5):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [(v - mu) / math.sqrt(var + eps) for v in x]


def gate_delta_loop(H_vis, M, g_w, g_b, p_w, p_b):
    T_v, d = M.shape
    G = np.zeros((T_v, d))
    D = np.zeros((T_v, d))
    for t in range(T_v):
        h = layer_norm_loop(list(H_vis[t]))
        m = layer_norm_loop(list(M[t]))
        z = affine_loop(h + m, g_w, g_b)
        pm = affine_loop(m, p_w, p_b)
        for c in range(d):
            g = 1.0 / (1.0 + math.exp(-z[c]))
            G[t, c] = g
            D[t, c] = g * pm[c]
    return G, D


def bilinear_loop(img, out_h, out_w):
    H, W, C = img.shape

    def coord(k, n_in, n_out):
        s = (k + 0.5) * n_in / n_out - 0.5
        s = min(max(s, 0.0), n_in - 1)
        i0 = int(math.floor(s))
        return i0, min(i0 + 1, n_in - 1), s - i0

    out = np.zeros((out_h, out_w, C))
    for i in range(out_h):
        y0, y1, fy = coord(i, H, out_h)
        for j in range(out_w):
            x0, x1, fx = coord(j, W, out_w)
            for c in range(C):
                out[i, j, c] = ((1 - fy) * ((1 - fx) * img[y0, x0, c] + fx * img[y0, x1, c])
                                + fy * ((1 - fx) * img[y1, x0, c] + fx * img[y1, x1, c]))
    return out
