"""Dark-channel map and darkest-pixel mask for the backscatter constraint.

The dark channel here is the pixelwise minimum over the three color
channels (window size 1): the constraint consumes individual darkest
pixels, not patch minima, and no gradient flows through the selection.
"""

import math

import numpy as np


def dcp_map(img):
    """Pixelwise channel minimum of a (3, H, W) image, as (1, H, W)."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got shape {arr.shape}")
    return arr.min(axis=0, keepdims=True)


def darkest_mask(dcp, fraction=0.01, cap=10000):
    """Binary mask selecting exactly ``min(ceil(fraction*H*W), cap)`` darkest pixels.

    Ties are broken by row-major pixel index, so identical inputs always
    produce bit-identical masks. Every selected value is <= every
    unselected value up to that tie-break.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if cap < 1:
        raise ValueError(f"cap must be positive, got {cap}")
    arr = np.asarray(dcp)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise ValueError(f"expected (1, H, W) map, got shape {arr.shape}")
        arr = arr[0]
    h, w = arr.shape
    k = min(math.ceil(fraction * h * w), cap)
    # Stable argsort keeps row-major order among equal values.
    order = np.argsort(arr.ravel(), kind="stable")
    mask = np.zeros(h * w, dtype=np.uint8)
    mask[order[:k]] = 1
    return mask.reshape(1, h, w)


def darkest_mask_for(img, fraction=0.01, cap=10000):
    """Mask of the darkest dark-channel pixels of an RGB image."""
    return darkest_mask(dcp_map(img), fraction=fraction, cap=cap)
