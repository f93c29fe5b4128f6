"""NumPy implementation of the hot array kernels.

Drop-in twin of `_kernels_cy`; the dispatch module picks whichever is
available.  Both backends keep the same per-axis factorization and the
same multiplication order so results agree to the last bits.
"""

import math

import numpy as np

BACKEND = "python"


def splat(values, center, sigma, amplitude, radius):
    """Add amplitude * exp(-sum((p - center)^2 / sigma^2)) to every grid
    point p with |p_d - center_d| <= radius on all four axes.

    `values` is the dense 4-D array (modified in place); pass a negative
    amplitude to subtract.  Returns the total mass added.
    """
    if amplitude == 0.0:
        return 0.0
    axes = []
    for d in range(4):
        lo = max(0, math.ceil(center[d] - radius))
        hi = min(values.shape[d] - 1, math.floor(center[d] + radius))
        if lo > hi:
            return 0.0
        diff = (np.arange(lo, hi + 1, dtype=np.float64) - center[d]) / sigma[d]
        axes.append((lo, hi, np.exp(-(diff * diff))))
    (l0, h0, w0), (l1, h1, w1), (l2, h2, w2), (l3, h3, w3) = axes
    block = (
        w0[:, None, None, None]
        * w1[None, :, None, None]
        * w2[None, None, :, None]
        * w3[None, None, None, :]
    )
    values[l0 : h0 + 1, l1 : h1 + 1, l2 : h2 + 1, l3 : h3 + 1] += amplitude * block
    return amplitude * float(block.sum())


def score_step(values, point):
    """Reciprocal-distance-weighted average of the array entries at the
    corners of the grid cell containing `point`.

    Corners falling outside the grid are dropped (the average then runs
    over fewer than 16 entries); distances below 1e-6 are floored to
    1e-6.  Returns 0 when no corner is inside the grid.
    """
    shape = values.shape
    total = 0.0
    count = 0
    base = [math.floor(point[d]) for d in range(4)]
    for m in range(16):
        p = [base[d] + ((m >> d) & 1) for d in range(4)]
        if any(p[d] < 0 or p[d] >= shape[d] for d in range(4)):
            continue
        dist = math.sqrt(sum((point[d] - p[d]) ** 2 for d in range(4)))
        total += float(values[p[0], p[1], p[2], p[3]]) / max(dist, 1e-6)
        count += 1
    return total / count if count else 0.0
