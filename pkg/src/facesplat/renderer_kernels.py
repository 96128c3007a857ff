"""Fused tile rasterization kernels (numba, f64 math).

Forward composites per pixel in global depth order; backward replays each
pixel back-to-front, rebuilding transmittance from the stored terminal value
and writing per-(splat, tile) gradient records so parallel tiles never race.
Pixels belong to exactly one tile, so scheduling cannot change results.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True, fastmath=False)
def forward_kernel(pair_splat, starts, ends, tile_px0, tile_py0, tile_w, tile_h,
                   width, means, conic, colors, sigmas, bg, alpha_clip, alpha_skip,
                   img, trans, count):
    for ti in prange(len(starts)):
        s, e = starts[ti], ends[ti]
        px0, py0 = tile_px0[ti], tile_py0[ti]
        for yy in range(tile_h[ti]):
            py = py0 + yy
            cy = py + 0.5
            for xx in range(tile_w[ti]):
                px = px0 + xx
                cx = px + 0.5
                pix = py * width + px
                t = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                c = 0
                for k in range(s, e):
                    i = pair_splat[k]
                    dx = cx - means[i, 0]
                    dy = cy - means[i, 1]
                    q = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy \
                        + conic[i, 2] * dy * dy
                    a = sigmas[i] * np.exp(-0.5 * q)
                    if a > alpha_clip:
                        a = alpha_clip
                    if a < alpha_skip:
                        continue
                    w = a * t
                    r += colors[i, 0] * w
                    g += colors[i, 1] * w
                    b += colors[i, 2] * w
                    t *= 1.0 - a
                    c += 1
                img[pix, 0] = r + bg[0] * t
                img[pix, 1] = g + bg[1] * t
                img[pix, 2] = b + bg[2] * t
                trans[pix] = t
                count[pix] = c


@njit(cache=True, parallel=True, fastmath=False)
def backward_kernel(pair_splat, starts, ends, tile_px0, tile_py0, tile_w, tile_h,
                    width, means, conic, colors, sigmas, bg, alpha_clip, alpha_skip,
                    trans, up_img, up_alpha, pair_grads):
    # pair_grads columns: d mean_x, d mean_y, d conic_a, d conic_b, d conic_c,
    # d sigma, d color_r, d color_g, d color_b
    for ti in prange(len(starts)):
        s, e = starts[ti], ends[ti]
        px0, py0 = tile_px0[ti], tile_py0[ti]
        for yy in range(tile_h[ti]):
            py = py0 + yy
            cy = py + 0.5
            for xx in range(tile_w[ti]):
                px = px0 + xx
                cx = px + 0.5
                pix = py * width + px
                t_end = trans[pix]
                u0 = up_img[pix, 0]
                u1 = up_img[pix, 1]
                u2 = up_img[pix, 2]
                ua = up_alpha[pix]
                # suffix sums of upstream-weighted color, built back to front
                s0 = 0.0
                s1 = 0.0
                s2 = 0.0
                t_after = t_end
                for k in range(e - 1, s - 1, -1):
                    i = pair_splat[k]
                    dx = cx - means[i, 0]
                    dy = cy - means[i, 1]
                    q = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy \
                        + conic[i, 2] * dy * dy
                    g_exp = np.exp(-0.5 * q)
                    a_raw = sigmas[i] * g_exp
                    clipped = a_raw > alpha_clip
                    a = alpha_clip if clipped else a_raw
                    if a < alpha_skip:
                        continue
                    one_m = 1.0 - a
                    t_i = t_after / one_m
                    w = a * t_i
                    # color gradient
                    pair_grads[k, 6] += u0 * w
                    pair_grads[k, 7] += u1 * w
                    pair_grads[k, 8] += u2 * w
                    # alpha gradient from the image, the background term and
                    # the alpha map
                    da = u0 * (colors[i, 0] * t_i - (s0 + bg[0] * t_end) / one_m) \
                        + u1 * (colors[i, 1] * t_i - (s1 + bg[1] * t_end) / one_m) \
                        + u2 * (colors[i, 2] * t_i - (s2 + bg[2] * t_end) / one_m) \
                        + ua * (t_end / one_m)
                    s0 += colors[i, 0] * w
                    s1 += colors[i, 1] * w
                    s2 += colors[i, 2] * w
                    t_after = t_i
                    if clipped:
                        continue
                    # a = sigma * exp(-q/2)
                    pair_grads[k, 5] += da * g_exp
                    dq = da * a * (-0.5)
                    pair_grads[k, 2] += dq * dx * dx
                    pair_grads[k, 3] += dq * 2.0 * dx * dy
                    pair_grads[k, 4] += dq * dy * dy
                    ddx = dq * (2.0 * conic[i, 0] * dx + 2.0 * conic[i, 1] * dy)
                    ddy = dq * (2.0 * conic[i, 2] * dy + 2.0 * conic[i, 1] * dx)
                    pair_grads[k, 0] += -ddx
                    pair_grads[k, 1] += -ddy


def scatter_pair_grads(pair_splat: np.ndarray, pair_grads: np.ndarray, n: int):
    """Deterministic reduction of per-pair gradients to per-splat arrays."""
    out = np.empty((n, 9))
    for j in range(9):
        out[:, j] = np.bincount(pair_splat, weights=pair_grads[:, j], minlength=n)
    return out
