"""Mask refinement before compositing: interior hole filling and feathering."""

from __future__ import annotations

import cv2
import numpy as np

from .geometry import as_mask, binary
from .simplify import blur_array


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Set every background pixel not 4-connected to the border to 1."""
    mask = as_mask(mask)
    off = (~binary(mask)).astype(np.uint8)
    n, labels = cv2.connectedComponents(off, connectivity=4)
    if n <= 1:
        return mask.copy()
    exterior = np.union1d(
        np.union1d(labels[0, :], labels[-1, :]),
        np.union1d(labels[:, 0], labels[:, -1]),
    )
    holes = off.astype(bool) & ~np.isin(labels, exterior)
    out = mask.copy()
    out[holes] = 1.0
    return out


def feather(mask: np.ndarray, sigma: float) -> np.ndarray:
    mask = as_mask(mask)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return mask.copy()
    return np.clip(blur_array(mask, sigma), 0.0, 1.0).astype(np.float32)
