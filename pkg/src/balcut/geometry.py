"""Shared value types: rasters, alpha masks, boxes and seeded random streams.

Rasters are ``uint8`` arrays of shape (H, W, 3); alpha masks are ``float32``
arrays of shape (H, W) holding coverage in [0, 1]. Anything geometric (boxes,
occlusion, hole filling) reads a mask as binary at ``MASK_THRESHOLD``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK_THRESHOLD = 0.5

RngStream = np.random.Generator


class EmptyMask(ValueError):
    """No pixel of the mask reaches the coverage threshold."""


def as_raster(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"raster must be HxWx3, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("raster must be at least 1x1")
    if arr.dtype != np.uint8:
        raise TypeError(f"raster must be uint8, got {arr.dtype}")
    return arr


def as_mask(mask) -> np.ndarray:
    arr = np.asarray(mask, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"mask must be HxW, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("mask coverage must lie in [0, 1]")
    return arr


def binary(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask) >= MASK_THRESHOLD


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned integer box anchored at its top-left pixel."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box needs w, h >= 1, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def clip(self, width: int, height: int) -> BBox | None:
        """Intersect with the image frame; None when nothing is left."""
        x1, y1 = max(self.x, 0), max(self.y, 0)
        x2, y2 = min(self.x2, width), min(self.y2, height)
        if x2 <= x1 or y2 <= y1:
            return None
        return BBox(x1, y1, x2 - x1, y2 - y1)

    def as_list(self) -> list[int]:
        return [int(self.x), int(self.y), int(self.w), int(self.h)]


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / float(a.area + b.area - inter)


def tight_bbox(mask: np.ndarray) -> BBox:
    on = binary(mask)
    rows = np.flatnonzero(on.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no pixel with coverage >= 0.5")
    cols = np.flatnonzero(on.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]),
                int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def rng_stream(global_seed: int, index: int) -> RngStream:
    """Counter-based stream keyed on (seed, index).

    Philox is a counter-based generator, so every stream is a pure function of
    its key and the number of draws taken; the key is derived through
    ``SeedSequence`` which hashes (seed, index) into decorrelated state.
    """
    seq = np.random.SeedSequence(entropy=int(global_seed) & (2**64 - 1),
                                 spawn_key=(int(index) & (2**64 - 1),))
    return np.random.Generator(np.random.Philox(seq))
