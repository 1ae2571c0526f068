"""Binary morphology with a rasterized disk and connected-component filtering.

Dilation treats pixels outside the grid as background and erosion treats
them as foreground, which makes opening and closing of a full mask the
identity. The disk is ``{(dy, dx): dy**2 + dx**2 <= r**2}``.
"""

import math

import numpy as np
from scipy import ndimage

from ._validation import check_mask, check_radius

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def disk(radius):
    """Boolean ``(2r+1, 2r+1)`` disk footprint."""
    r = check_radius(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return yy * yy + xx * xx <= r * r


def _half_widths(r):
    # horizontal half-extent of the disk on each row offset dy = -r..r
    return [math.isqrt(r * r - dy * dy) for dy in range(-r, r + 1)]


def dilate(mask, radius):
    """Disk dilation; outside pixels count as background.

    Decomposed row-wise: each row of the disk is a horizontal segment, so
    the result is an OR of vertically shifted horizontal dilations.
    """
    mask = check_mask(mask)
    r = check_radius(radius)
    rows, cols = mask.shape
    padded = np.zeros((rows + 2 * r, cols + 2 * r), dtype=bool)
    padded[r : r + rows, r : r + cols] = mask

    # horiz[w][y, x] = OR of padded[y, x + r + dx] for |dx| <= w
    horiz = [padded[:, r : r + cols].copy()]
    for w in range(1, r + 1):
        h = horiz[-1] | padded[:, r + w : r + w + cols]
        h |= padded[:, r - w : r - w + cols]
        horiz.append(h)

    out = np.zeros_like(mask)
    for i, w in enumerate(_half_widths(r)):
        # i = dy + r
        out |= horiz[w][i : i + rows]
    return out


def erode(mask, radius):
    """Disk erosion; outside pixels count as foreground."""
    mask = check_mask(mask)
    return ~dilate(~mask, radius)


def morph_open(mask, radius):
    return dilate(erode(mask, radius), radius)


def morph_close(mask, radius):
    return erode(dilate(mask, radius), radius)


def label_components(mask, connectivity=8):
    """Label foreground components. Returns ``(labels, n_components)``."""
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity!r}")
    return ndimage.label(check_mask(mask), structure=_STRUCTURES[connectivity])


def filter_components(mask, min_region_frac=0.01, connectivity=8):
    """Keep components whose pixel count is strictly above
    ``min_region_frac * rows * cols``."""
    mask = check_mask(mask)
    if not mask.any():
        return mask.copy()
    labels, n = label_components(mask, connectivity)
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    keep = counts > min_region_frac * mask.size
    keep[0] = False
    return keep[labels]
