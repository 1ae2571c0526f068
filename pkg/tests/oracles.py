"""Brute-force reference implementations used only by the tests.

Nothing here imports from lungqc; each oracle is the most literal reading
of the definition it checks.
"""

import math
from collections import deque

import numpy as np


def disk_offsets(r):
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dy * dy + dx * dx <= r * r]


def brute_dilate(mask, r):
    rows, cols = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    offs = disk_offsets(r)
    for y in range(rows):
        for x in range(cols):
            for dy, dx in offs:
                yy, xx = y + dy, x + dx
                if 0 <= yy < rows and 0 <= xx < cols and mask[yy, xx]:
                    out[y, x] = True
                    break
    return out


def brute_erode(mask, r):
    rows, cols = mask.shape
    out = np.ones_like(mask, dtype=bool)
    offs = disk_offsets(r)
    for y in range(rows):
        for x in range(cols):
            for dy, dx in offs:
                yy, xx = y + dy, x + dx
                inside = 0 <= yy < rows and 0 <= xx < cols
                if inside and not mask[yy, xx]:
                    out[y, x] = False
                    break
    return out


def brute_open(mask, r):
    return brute_dilate(brute_erode(mask, r), r)


def brute_close(mask, r):
    return brute_erode(brute_dilate(mask, r), r)


def flood_fill_components(mask, connectivity=8):
    """List of components, each a list of (y, x), by BFS."""
    rows, cols = mask.shape
    if connectivity == 4:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(rows):
        for x in range(cols):
            if mask[y, x] and not seen[y, x]:
                comp = []
                q = deque([(y, x)])
                seen[y, x] = True
                while q:
                    cy, cx = q.popleft()
                    comp.append((cy, cx))
                    for dy, dx in nbrs:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < rows and 0 <= nx < cols and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
                comps.append(comp)
    return comps


def brute_filter(mask, frac, connectivity=8):
    out = np.zeros_like(mask, dtype=bool)
    bound = frac * mask.size
    for comp in flood_fill_components(mask, connectivity):
        if len(comp) > bound:
            for y, x in comp:
                out[y, x] = True
    return out


def pair_count_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def brute_ecdf_sup(a, b):
    best = 0.0
    for x in list(a) + list(b):
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


def kolmogorov_series(lam, terms=200):
    """Direct alternating series 2 * sum (-1)^(j-1) exp(-2 j^2 lam^2)."""
    if lam <= 0:
        return 1.0
    return 2.0 * sum((-1) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam) for j in range(1, terms + 1))


def bootstrap_delta_auc_variance(sa, sb, y, n_boot=100_000, seed=0, chunk=5_000):
    """Paired, class-stratified bootstrap variance of AUC_a - AUC_b.

    Positives and negatives are resampled separately with the same indices
    for both models. For multinomial counts c (positives) and d (negatives)
    the resampled difference is c^T D d / (m n) with D the pairwise kernel
    difference matrix.
    """
    sa, sb, y = map(np.asarray, (sa, sb, y))
    pa, na = sa[y == 1], sa[y == 0]
    pb, nb = sb[y == 1], sb[y == 0]

    def kernel(p, n):
        return (p[:, None] > n[None, :]) + 0.5 * (p[:, None] == n[None, :])

    D = kernel(pa, na) - kernel(pb, nb)
    m, n = D.shape
    rng = np.random.default_rng(seed)
    deltas = []
    for start in range(0, n_boot, chunk):
        b = min(chunk, n_boot - start)
        c = rng.multinomial(m, np.full(m, 1.0 / m), size=b)
        d = rng.multinomial(n, np.full(n, 1.0 / n), size=b)
        deltas.append(np.einsum("bi,ij,bj->b", c, D, d, optimize=True) / (m * n))
    return float(np.var(np.concatenate(deltas), ddof=1))


def correlated_scores(n_pos, n_neg, rho=0.6, shift_a=1.0, shift_b=0.7, seed=0):
    rng = np.random.default_rng(seed)
    n = n_pos + n_neg
    y = np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)]
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal(n)
    return z1 + shift_a * y, z2 + shift_b * y, y
