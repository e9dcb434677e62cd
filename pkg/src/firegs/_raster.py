"""Numba kernels for tile-binned front-to-back Gaussian compositing.

Each splat carries a feature vector that is composited with weights
``alpha_i * T_i``. The Python side packs ``(r, g, b, depth, 1)`` so one pass
yields color, the un-normalized expected depth and the accumulated alpha.

Gradients are accumulated per (tile, list entry) and scattered to splats in
a fixed serial order, so results do not depend on the thread count.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def bin_tiles(order, xmin, xmax, ymin, ymax, tile, ntx, nty):
    """Per-tile splat lists, each in the global depth order given by ``order``."""
    ntiles = ntx * nty
    counts = np.zeros(ntiles + 1, dtype=np.int64)
    for g in order:
        for ty in range(ymin[g] // tile, ymax[g] // tile + 1):
            for tx in range(xmin[g] // tile, xmax[g] // tile + 1):
                counts[ty * ntx + tx + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    entries = np.empty(start[-1], dtype=np.int64)
    for g in order:
        for ty in range(ymin[g] // tile, ymax[g] // tile + 1):
            for tx in range(xmin[g] // tile, xmax[g] // tile + 1):
                t = ty * ntx + tx
                entries[fill[t]] = g
                fill[t] += 1
    return start, entries


@njit(parallel=True, cache=True)
def forward(start, entries, mean2d, conic, opac, feat, bg, height, width, tile, ntx, min_power, t_min):
    nf = feat.shape[1]
    out = np.empty((height, width, nf))
    ntiles = len(start) - 1
    for t in prange(ntiles):
        ty, tx = t // ntx, t % ntx
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                T = 1.0
                acc = np.zeros(nf)
                for k in range(start[t], start[t + 1]):
                    g = entries[k]
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    power = -0.5 * (conic[g, 0] * dx * dx + conic[g, 2] * dy * dy) - conic[g, 1] * dx * dy
                    if power < min_power:
                        continue
                    a = opac[g] * np.exp(power)
                    w = a * T
                    for f in range(nf):
                        acc[f] += feat[g, f] * w
                    T *= 1.0 - a
                    if T < t_min:
                        break
                for f in range(nf):
                    out[py, px, f] = acc[f] + T * bg[f]
    return out


@njit(parallel=True, cache=True)
def backward(start, entries, mean2d, conic, opac, feat, bg, grad_out, height, width, tile, ntx, min_power, t_min):
    nf = feat.shape[1]
    n_entries = len(entries)
    e_mean = np.zeros((n_entries, 2))
    e_conic = np.zeros((n_entries, 3))
    e_opac = np.zeros(n_entries)
    e_feat = np.zeros((n_entries, nf))
    ntiles = len(start) - 1
    for t in prange(ntiles):
        s0, s1 = start[t], start[t + 1]
        n = s1 - s0
        pos = np.empty(n, dtype=np.int64)
        alphas = np.empty(n)
        trans = np.empty(n)
        gauss = np.empty(n)
        ty, tx = t // ntx, t % ntx
        R = np.empty(nf)
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                T = 1.0
                c = 0
                for k in range(s0, s1):
                    g = entries[k]
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    power = -0.5 * (conic[g, 0] * dx * dx + conic[g, 2] * dy * dy) - conic[g, 1] * dx * dy
                    if power < min_power:
                        continue
                    G = np.exp(power)
                    a = opac[g] * G
                    pos[c] = k
                    alphas[c] = a
                    trans[c] = T
                    gauss[c] = G
                    c += 1
                    T *= 1.0 - a
                    if T < t_min:
                        break
                for f in range(nf):
                    R[f] = bg[f]
                for j in range(c - 1, -1, -1):
                    k = pos[j]
                    g = entries[k]
                    a = alphas[j]
                    Tj = trans[j]
                    w = a * Tj
                    dl_da = 0.0
                    for f in range(nf):
                        go = grad_out[py, px, f]
                        dl_da += go * (feat[g, f] - R[f])
                        e_feat[k, f] += go * w
                        R[f] = feat[g, f] * a + (1.0 - a) * R[f]
                    dl_da *= Tj
                    e_opac[k] += dl_da * gauss[j]
                    g_pow = dl_da * a
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    e_mean[k, 0] += g_pow * (conic[g, 0] * dx + conic[g, 1] * dy)
                    e_mean[k, 1] += g_pow * (conic[g, 1] * dx + conic[g, 2] * dy)
                    e_conic[k, 0] += g_pow * (-0.5 * dx * dx)
                    e_conic[k, 1] += g_pow * (-dx * dy)
                    e_conic[k, 2] += g_pow * (-0.5 * dy * dy)
    return e_mean, e_conic, e_opac, e_feat


@njit(cache=True)
def scatter(entries, e_mean, e_conic, e_opac, e_feat, n):
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_opac = np.zeros(n)
    g_feat = np.zeros((n, e_feat.shape[1]))
    for k in range(len(entries)):
        g = entries[k]
        g_mean[g, 0] += e_mean[k, 0]
        g_mean[g, 1] += e_mean[k, 1]
        for j in range(3):
            g_conic[g, j] += e_conic[k, j]
        g_opac[g] += e_opac[k]
        for f in range(e_feat.shape[1]):
            g_feat[g, f] += e_feat[k, f]
    return g_mean, g_conic, g_opac, g_feat
