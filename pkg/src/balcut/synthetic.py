"""Procedural test data: patch distributions, toy seed objects and scenes.

Used by the test suite, the acceptance checks and the demo scripts so that
nothing depends on external datasets.
"""

from __future__ import annotations

from statistics import NormalDist

import cv2
import numpy as np

from .diversify import SeedInstance
from .gapmeter import PATCH, PatchSet
from .geometry import RngStream


def with_scenes(patches: np.ndarray, n_scenes: int, domain: str = "source",
                region: str = "foreground", prefix: str = "s") -> PatchSet:
    """Wrap patches in a PatchSet, dealing them round-robin over ``n_scenes``."""
    ids = np.array([f"{prefix}{i % n_scenes:04d}" for i in range(len(patches))])
    return PatchSet(patches, ids, domain, region)


def colorful_patches(n: int, rng: RngStream) -> np.ndarray:
    """Smooth random color fields with a little pixel noise."""
    coarse = rng.uniform(0, 255, size=(n, 4, 4, 3)).astype(np.float32)
    out = np.empty((n, PATCH, PATCH, 3), dtype=np.uint8)
    for i in range(n):
        field = cv2.resize(coarse[i], (PATCH, PATCH), interpolation=cv2.INTER_LINEAR)
        field += rng.normal(0, 6, size=field.shape).astype(np.float32)
        out[i] = np.clip(field + 0.5, 0, 255).astype(np.uint8)
    return out


def dominant_color_patches(n: int, channel: int, rng: RngStream) -> np.ndarray:
    """Patches whose ``channel`` is bright (150-255) and the others dark (0-100)."""
    out = rng.integers(0, 101, size=(n, PATCH, PATCH, 3))
    out[..., channel] = rng.integers(150, 256, size=(n, PATCH, PATCH))
    return out.astype(np.uint8)


def brightness_patches(n: int, mean: float, sigma: float, rng: RngStream,
                       n_strata: int = 50) -> np.ndarray:
    """Constant gray patches with brightness ~ N(mean, sigma^2).

    Brightness values are drawn by stratified inverse-CDF sampling in blocks
    of ``n_strata`` so every block (and hence every scene-disjoint split of
    round-robin scenes) follows the Gaussian closely.
    """
    nd = NormalDist(mean, sigma)
    values = np.empty(n)
    for start in range(0, n, n_strata):
        m = min(n_strata, n - start)
        u = (np.arange(m) + rng.random(m)) / m
        values[start:start + m] = [nd.inv_cdf(min(max(q, 1e-12), 1 - 1e-12)) for q in u]
    levels = np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)
    return np.broadcast_to(levels[:, None, None, None], (n, PATCH, PATCH, 3)).copy()


def bayes_error_two_gaussians(separation_sigmas: float) -> float:
    """Bayes error of two equal-prior unit-variance Gaussians ``separation`` apart."""
    return NormalDist().cdf(-separation_sigmas / 2.0)


def background_scene(width: int, height: int, rng: RngStream) -> np.ndarray:
    """A cluttered RGB scene: smooth color field plus random rectangles and lines."""
    coarse = rng.uniform(0, 255, size=(6, 8, 3)).astype(np.float32)
    img = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)
    img = np.clip(img, 0, 255).astype(np.uint8)
    for _ in range(int(rng.integers(5, 15))):
        x, y = int(rng.integers(0, width)), int(rng.integers(0, height))
        w, h = int(rng.integers(10, width // 3)), int(rng.integers(10, height // 3))
        color = tuple(int(c) for c in rng.integers(0, 256, 3))
        cv2.rectangle(img, (x, y), (x + w, y + h), color, -1)
    for _ in range(int(rng.integers(5, 15))):
        p1 = (int(rng.integers(0, width)), int(rng.integers(0, height)))
        p2 = (int(rng.integers(0, width)), int(rng.integers(0, height)))
        color = tuple(int(c) for c in rng.integers(0, 256, 3))
        cv2.line(img, p1, p2, color, int(rng.integers(1, 6)))
    return img


def seed_object(class_id: int, rng: RngStream, size: tuple[int, int] = (140, 110),
                name: str = "") -> SeedInstance:
    """A textured ellipse-and-box object on a plain backdrop, with its mask."""
    w, h = size
    raster = np.full((h, w, 3), 200, dtype=np.uint8)
    mask = np.zeros((h, w), dtype=np.uint8)
    base = rng.integers(30, 226, 3)
    center = (w // 2, h // 2)
    axes = (int(w * rng.uniform(0.3, 0.45)), int(h * rng.uniform(0.3, 0.45)))
    cv2.ellipse(mask, center, axes, 0, 0, 360, 255, -1)
    bw, bh = int(w * rng.uniform(0.2, 0.4)), int(h * rng.uniform(0.2, 0.4))
    cv2.rectangle(mask, (center[0] - bw, center[1] - bh // 2), (center[0], center[1] + bh), 255, -1)
    texture = base + rng.normal(0, 12, size=(h, w, 3))
    stripe = (np.arange(w)[None, :] // 9 % 2) * 40
    texture[..., class_id % 3] += stripe
    on = mask > 0
    raster[on] = np.clip(texture[on], 0, 255).astype(np.uint8)
    return SeedInstance(raster, (mask > 0).astype(np.float32), class_id, name=name)


def write_demo_inputs(root, rng: RngStream, n_classes: int = 3, seeds_per_class: int = 8,
                      n_backgrounds: int = 20, bg_size: tuple[int, int] = (640, 480)) -> dict:
    """Lay out seeds (with ``_mask.png`` files) and backgrounds under ``root``.

    Returns a minimal config dict pointing at them.
    """
    from pathlib import Path

    from .dataset import write_image

    root = Path(root)
    seeds, bgs = root / "seeds", root / "backgrounds"
    for c in range(n_classes):
        cdir = seeds / f"object{c}"
        cdir.mkdir(parents=True, exist_ok=True)
        for k in range(seeds_per_class):
            size = (int(rng.integers(110, 170)), int(rng.integers(90, 140)))
            inst = seed_object(c, rng, size)
            # seed photos carry some margin around the object
            raster = np.pad(inst.raster, ((10, 10), (10, 10), (0, 0)), constant_values=200)
            mask = np.pad(inst.mask, 10)
            write_image(cdir / f"seed{k}.png", raster)
            write_image(cdir / f"seed{k}_mask.png", (mask * 255).astype(np.uint8))
    bgs.mkdir(parents=True, exist_ok=True)
    for i in range(n_backgrounds):
        write_image(bgs / f"bg{i:04d}.png", background_scene(*bg_size, rng))
    return {"paths": {"seeds": str(seeds), "backgrounds": str(bgs), "output": str(root / "out")}}
