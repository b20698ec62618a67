"""Background simplification: blur, graying and 3-3-2 color quantization.

Simplifying the backgrounds shrinks their source domain; see ``gapmeter`` for
how that motion is measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_raster

DEFAULT_BLUR_SIGMA = 2.0

# BT.601 luma weights
LUMA = np.array([0.299, 0.587, 0.114])

# (bits kept, levels) for R, G, B
_QUANT_LAYOUT = ((3, 8), (3, 8), (2, 4))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized sampled Gaussian with radius ceil(3 sigma)."""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-offsets**2 / (2.0 * sigma * sigma))
    return k / k.sum()


def blur_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian over the first two axes of a float array.

    Borders use symmetric reflection (the edge sample is repeated), so a
    constant array is a fixed point.
    """
    out = np.asarray(arr, dtype=np.float64)
    if sigma <= 0:
        return out.copy()
    k = gaussian_kernel(sigma)
    r = (k.size - 1) // 2
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="symmetric")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(i, i + n)
            acc += w * padded[tuple(sl)]
        out = acc
    return out


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    # round half up, then clamp
    return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    img = as_raster(img)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    return _to_uint8(blur_array(img, sigma))


def to_gray(img: np.ndarray) -> np.ndarray:
    img = as_raster(img)
    luma = _to_uint8(img.astype(np.float64) @ LUMA)
    return np.repeat(luma[:, :, None], 3, axis=2)


def quantize_8bit(img: np.ndarray) -> np.ndarray:
    """Keep 8 bits per pixel in total (3 red, 3 green, 2 blue)."""
    img = as_raster(img)
    out = np.empty_like(img)
    for c, (bits, levels) in enumerate(_QUANT_LAYOUT):
        bucket = img[:, :, c] >> (8 - bits)
        table = _to_uint8(np.arange(levels) * 255.0 / (levels - 1))
        out[:, :, c] = table[bucket]
    return out


METHODS = ("none", "gaussian_blur", "gray", "quantize_8bit")


@dataclass(frozen=True)
class SimplifyStep:
    method: str
    sigma: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown simplify method {self.method!r}")
        if self.method == "gaussian_blur":
            if self.sigma is None:
                object.__setattr__(self, "sigma", DEFAULT_BLUR_SIGMA)
            if not self.sigma > 0:
                raise ValueError("gaussian_blur needs sigma > 0")

    def to_json(self):
        if self.method == "gaussian_blur":
            return {"method": self.method, "sigma": self.sigma}
        return self.method

    @classmethod
    def from_json(cls, obj) -> SimplifyStep:
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj["method"], obj.get("sigma"))


@dataclass(frozen=True)
class SimplifySpec:
    """Ordered chain of simplification steps; an empty chain is ``none``."""

    steps: tuple[SimplifyStep, ...] = field(default_factory=tuple)

    @classmethod
    def parse(cls, obj) -> SimplifySpec:
        if obj is None:
            return cls()
        if isinstance(obj, (str, dict)):
            obj = [obj]
        steps = tuple(SimplifyStep.from_json(o) for o in obj)
        return cls(tuple(s for s in steps if s.method != "none"))

    def to_json(self) -> list:
        return [s.to_json() for s in self.steps]


def simplify_background(img: np.ndarray, spec: SimplifySpec) -> np.ndarray:
    out = as_raster(img).copy()
    for step in spec.steps:
        if step.method == "gaussian_blur":
            out = gaussian_blur(out, step.sigma)
        elif step.method == "gray":
            out = to_gray(out)
        elif step.method == "quantize_8bit":
            out = quantize_8bit(out)
    return out
