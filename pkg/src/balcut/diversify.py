"""Foreground diversification with a parametric lighting stylizer.

Each styled variant of a seed instance gets a Gaussian spotlight followed by a
per-channel tone change (gain and offset), both restricted to the object mask.
Variants produced elsewhere (for example by an image-to-image GAN) can be
loaded from a directory instead, see :func:`load_variant_dir`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .geometry import RngStream, as_mask, as_raster, binary, tight_bbox

log = logging.getLogger(__name__)

SPOTLIGHT_GAIN_RANGE = (1.0, 1.8)
SPOTLIGHT_RADIUS_RANGE = (0.2, 0.8)
TONE_GAIN_RANGE = (0.7, 1.3)
TONE_OFFSET_RANGE = (-25.0, 25.0)


class EmptyPool(LookupError):
    pass


@dataclass(frozen=True)
class StyleParams:
    spotlight_center: tuple[float, float] = (0.5, 0.5)
    spotlight_radius: float = 0.5
    spotlight_gain: float = 1.0
    tone_gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tone_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        u, v = self.spotlight_center
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            raise ValueError("spotlight_center must be normalized to [0, 1]")
        if self.spotlight_radius <= 0:
            raise ValueError("spotlight_radius must be positive")
        lo, hi = SPOTLIGHT_GAIN_RANGE
        if not lo <= self.spotlight_gain <= hi:
            raise ValueError(f"spotlight_gain outside [{lo}, {hi}]")
        lo, hi = TONE_GAIN_RANGE
        if len(self.tone_gain) != 3 or not all(lo <= g <= hi for g in self.tone_gain):
            raise ValueError(f"tone_gain must be 3 values in [{lo}, {hi}]")
        lo, hi = TONE_OFFSET_RANGE
        if len(self.tone_offset) != 3 or not all(lo <= o <= hi for o in self.tone_offset):
            raise ValueError(f"tone_offset must be 3 values in [{lo}, {hi}]")

    @classmethod
    def sample(cls, rng: RngStream) -> StyleParams:
        return cls(
            spotlight_center=(float(rng.random()), float(rng.random())),
            spotlight_radius=float(rng.uniform(*SPOTLIGHT_RADIUS_RANGE)),
            spotlight_gain=float(rng.uniform(*SPOTLIGHT_GAIN_RANGE)),
            tone_gain=tuple(float(g) for g in rng.uniform(*TONE_GAIN_RANGE, size=3)),
            tone_offset=tuple(float(o) for o in rng.uniform(*TONE_OFFSET_RANGE, size=3)),
        )

    def to_json(self) -> dict:
        return {
            "spotlight_center": list(self.spotlight_center),
            "spotlight_radius": self.spotlight_radius,
            "spotlight_gain": self.spotlight_gain,
            "tone_gain": list(self.tone_gain),
            "tone_offset": list(self.tone_offset),
        }


@dataclass
class SeedInstance:
    """An object cut-out: pixels, coverage mask, class and where it came from.

    ``provenance`` is ``"original"`` or ``"styled"``; styled instances carry
    their ``style`` (None for variants loaded from disk).
    """

    raster: np.ndarray
    mask: np.ndarray
    class_id: int
    provenance: str = "original"
    style: StyleParams | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.raster = as_raster(self.raster)
        self.mask = as_mask(self.mask)
        if self.raster.shape[:2] != self.mask.shape:
            raise ValueError(
                f"raster {self.raster.shape[:2]} and mask {self.mask.shape} differ")
        if self.provenance not in ("original", "styled"):
            raise ValueError(f"bad provenance {self.provenance!r}")

    @property
    def styled(self) -> bool:
        return self.provenance == "styled"


def spotlight(img: np.ndarray, mask: np.ndarray, p: StyleParams) -> np.ndarray:
    img = as_raster(img)
    on = binary(as_mask(mask))
    if p.spotlight_gain == 1.0 or not on.any():
        return img.copy()
    box = tight_bbox(mask)
    cx = box.x + p.spotlight_center[0] * (box.w - 1)
    cy = box.y + p.spotlight_center[1] * (box.h - 1)
    r = p.spotlight_radius * float(np.hypot(box.w, box.h))
    ys, xs = np.nonzero(on)
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    factor = 1.0 + (p.spotlight_gain - 1.0) * np.exp(-d2 / (2.0 * r * r))
    out = img.copy()
    vals = img[ys, xs].astype(np.float64) * factor[:, None]
    out[ys, xs] = np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8)
    return out


def tone_shift(img: np.ndarray, mask: np.ndarray, p: StyleParams) -> np.ndarray:
    img = as_raster(img)
    on = binary(as_mask(mask))
    out = img.copy()
    vals = img[on].astype(np.float64) * np.asarray(p.tone_gain) + np.asarray(p.tone_offset)
    out[on] = np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8)
    return out


def stylize(seed: SeedInstance, p: StyleParams) -> SeedInstance:
    raster = tone_shift(spotlight(seed.raster, seed.mask, p), seed.mask, p)
    return SeedInstance(raster, seed.mask, seed.class_id, "styled", p, seed.name)


def make_variants(seed: SeedInstance, n: int, rng: RngStream) -> list[SeedInstance]:
    if n < 0:
        raise ValueError("n must be >= 0")
    return [stylize(seed, StyleParams.sample(rng)) for _ in range(n)]


def select_seed(pool_original: Sequence[SeedInstance],
                pool_styled: Sequence[SeedInstance],
                p_styled: float, rng: RngStream) -> SeedInstance:
    """Pick from the styled pool with probability ``p_styled``, else original."""
    if not 0.0 <= p_styled <= 1.0:
        raise ValueError("p_styled must lie in [0, 1]")
    use_styled = rng.random() < p_styled
    pool = pool_styled if use_styled else pool_original
    if len(pool) == 0:
        raise EmptyPool("styled pool is empty" if use_styled else "original pool is empty")
    return pool[int(rng.integers(len(pool)))]


def load_variant_dir(root: str | Path, seeds: Sequence[SeedInstance],
                     class_dirs: dict[int, str]) -> list[SeedInstance]:
    """Read pre-styled variants laid out as ``<class>/<seed name>_<k>.<ext>``.

    Each variant borrows the mask of the seed whose name prefixes its file
    stem; files matching no seed, or whose size differs from it, are skipped.
    """
    root = Path(root)
    out = []
    for seed in seeds:
        cdir = root / class_dirs.get(seed.class_id, str(seed.class_id))
        if not cdir.is_dir():
            continue
        for path in sorted(cdir.glob(f"{seed.name}_*")):
            img = cv2.imread(str(path), cv2.IMREAD_COLOR)
            if img is None:
                log.warning("unreadable variant %s", path)
                continue
            img = np.ascontiguousarray(img[:, :, ::-1])
            if img.shape[:2] != seed.mask.shape:
                log.warning("variant %s does not match its seed size, skipped", path)
                continue
            out.append(SeedInstance(img, seed.mask, seed.class_id, "styled", None,
                                    seed.name, {"file": path.name}))
    return out
