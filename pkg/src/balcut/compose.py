"""Placing, transforming, blending and annotating pasted object instances."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import cv2
import numpy as np

from .diversify import SeedInstance, select_seed
from .geometry import BBox, EmptyMask, RngStream, as_raster, binary, tight_bbox
from .maskproc import feather

log = logging.getLogger(__name__)

BLEND_MODES = ("direct", "feathered", "poisson")


class DegenerateScale(ValueError):
    pass


class NoValidPosition(ValueError):
    pass


class NonConvergence(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ComposeSpec:
    objects_per_image: tuple[int, int] = (3, 8)
    occ_prob: float = 0.5
    blend_mix: dict = field(
        default_factory=lambda: {"direct": 1.0, "feathered": 1.0, "poisson": 1.0})
    feather_sigma: float = 2.0
    scale_range: tuple[float, float] = (0.5, 1.5)
    rotation_range: tuple[float, float] = (-30.0, 30.0)
    min_visible: float = 0.25
    min_box: tuple[int, int] = (50, 30)
    min_box_filter: bool = True
    box_mode: str = "visible"

    def __post_init__(self):
        lo, hi = self.objects_per_image
        if not 0 <= lo <= hi:
            raise ValueError("objects_per_image must satisfy 0 <= lo <= hi")
        if not 0.0 <= self.occ_prob <= 1.0:
            raise ValueError("occ_prob must lie in [0, 1]")
        if set(self.blend_mix) - set(BLEND_MODES):
            raise ValueError(f"blend_mix keys must be among {BLEND_MODES}")
        weights = list(self.blend_mix.values())
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("blend_mix weights must be >= 0 with a positive sum")
        if self.feather_sigma < 0:
            raise ValueError("feather_sigma must be >= 0")
        if not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise ValueError("scale_range must satisfy 0 < lo <= hi")
        if self.rotation_range[0] > self.rotation_range[1]:
            raise ValueError("rotation_range must satisfy lo <= hi")
        if not 0.0 < self.min_visible <= 1.0:
            raise ValueError("min_visible must lie in (0, 1]")
        if self.box_mode not in ("visible", "full"):
            raise ValueError("box_mode must be 'visible' or 'full'")


@dataclass
class PlacementRecord:
    instance: str
    class_id: int
    provenance: str
    scale: float
    rotation: float
    x: int
    y: int
    blend_mode: str
    near_previous: bool
    box: BBox
    full_area: int = 0
    full_box: BBox | None = None
    visible_box: BBox | None = None
    visible_area: int = 0
    annotated: bool = False
    dropped: str | None = None

    def to_json(self) -> dict:
        return {
            "instance": self.instance,
            "class_id": self.class_id,
            "provenance": self.provenance,
            "scale": self.scale,
            "rotation": self.rotation,
            "translation": [self.x, self.y],
            "blend_mode": self.blend_mode,
            "near_previous": self.near_previous,
            "box": self.box.as_list(),
            "visible_box": self.visible_box.as_list() if self.visible_box else None,
            "visible_area": self.visible_area,
            "annotated": self.annotated,
            "dropped": self.dropped,
        }


@dataclass
class SceneAnnotation:
    image_id: int
    objects: list[tuple[int, BBox, int]] = field(default_factory=list)


@dataclass
class SeedPools:
    """Original and styled instances per class id."""

    original: dict[int, list[SeedInstance]]
    styled: dict[int, list[SeedInstance]]
    p_styled: float = 0.5

    @property
    def class_ids(self) -> list[int]:
        return sorted(c for c, pool in self.original.items() if pool)


def transform_instance(seed: SeedInstance, scale: float, rotation: float) -> SeedInstance:
    """Scale and rotate (degrees, counter-clockwise) about the instance center.

    The output is cropped to the tight box of the transformed mask.
    """
    if scale <= 0:
        raise DegenerateScale(f"scale must be positive, got {scale}")
    if scale == 1.0 and rotation == 0.0:
        return SeedInstance(seed.raster.copy(), seed.mask.copy(), seed.class_id,
                            seed.provenance, seed.style, seed.name, dict(seed.meta))
    h, w = seed.mask.shape
    theta = math.radians(rotation)
    cos, sin = abs(math.cos(theta)) * scale, abs(math.sin(theta)) * scale
    out_w = max(1, int(math.ceil(w * cos + h * sin)))
    out_h = max(1, int(math.ceil(w * sin + h * cos)))
    m = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), rotation, scale)
    m[0, 2] += (out_w - 1) / 2.0 - (w - 1) / 2.0
    m[1, 2] += (out_h - 1) / 2.0 - (h - 1) / 2.0
    raster = cv2.warpAffine(seed.raster, m, (out_w, out_h), flags=cv2.INTER_LINEAR,
                            borderMode=cv2.BORDER_REPLICATE)
    mask = cv2.warpAffine(seed.mask, m, (out_w, out_h), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    mask = np.clip(mask, 0.0, 1.0)
    try:
        box = tight_bbox(mask)
    except EmptyMask:
        raise DegenerateScale("transformed mask is empty") from None
    if box.w < 2 or box.h < 2:
        raise DegenerateScale(f"transformed instance is only {box.w}x{box.h} px")
    sl = (slice(box.y, box.y2), slice(box.x, box.x2))
    return SeedInstance(np.ascontiguousarray(raster[sl]), np.ascontiguousarray(mask[sl]),
                        seed.class_id, seed.provenance, seed.style, seed.name,
                        dict(seed.meta))


def _axis_range(extent: int, size: int, frac: float) -> tuple[int, int]:
    vis = int(math.ceil(frac * size))
    return vis - size, extent - vis


def sample_position(canvas: tuple[int, int], inst: tuple[int, int],
                    priors: Sequence[PlacementRecord], occ_prob: float,
                    rng: RngStream, min_visible: float = 0.25) -> tuple[int, int, bool]:
    """Top-left paste position for an instance of size ``inst`` = (w, h).

    Valid positions keep at least ``sqrt(min_visible)`` of the instance width
    and height inside the canvas, hence ``min_visible`` of its box area.
    """
    if not 0.0 <= occ_prob <= 1.0:
        raise ValueError("occ_prob must lie in [0, 1]")
    width, height = canvas
    w, h = inst
    frac = math.sqrt(min_visible)
    x_lo, x_hi = _axis_range(width, w, frac)
    y_lo, y_hi = _axis_range(height, h, frac)
    if x_lo > x_hi or y_lo > y_hi:
        raise NoValidPosition(f"{w}x{h} instance cannot stay {min_visible:.0%} visible "
                              f"on a {width}x{height} canvas")
    near = bool(priors) and rng.random() < occ_prob
    if near:
        prior = priors[int(rng.integers(len(priors)))].box
        pcx, pcy = prior.center
        cx = pcx + rng.uniform(-prior.w / 2.0, prior.w / 2.0)
        cy = pcy + rng.uniform(-prior.h / 2.0, prior.h / 2.0)
        x = min(max(int(math.floor(cx - w / 2.0 + 0.5)), x_lo), x_hi)
        y = min(max(int(math.floor(cy - h / 2.0 + 0.5)), y_lo), y_hi)
    else:
        x = int(rng.integers(x_lo, x_hi + 1))
        y = int(rng.integers(y_lo, y_hi + 1))
    return x, y, near


def _sor_omega(ny: int, nx: int) -> float:
    rho = 0.5 * (math.cos(math.pi / (ny + 1)) + math.cos(math.pi / (nx + 1)))
    return 2.0 / (1.0 + math.sqrt(max(0.0, 1.0 - rho * rho)))


def poisson_solve(target: np.ndarray, guidance: np.ndarray, *, init: np.ndarray | None = None,
                  omega: float | None = None, tol: float = 1e-3,
                  max_iter: int = 10_000) -> np.ndarray:
    """Solve ``4 f_p - sum_q f_q = guidance_p`` on the interior of a region.

    ``target`` (H, W) or (H, W, C) supplies the Dirichlet values on the
    one-pixel outer ring. ``guidance`` holds, per pixel, the sum over its four
    neighbours of the guidance-field differences ``v_pq``. Red-black
    Gauss-Seidel with over-relaxation ``omega`` (1.0 is plain Gauss-Seidel;
    None picks the optimal rate for the grid) iterates until the largest
    update drops below ``tol`` or ``max_iter`` sweeps have run; the latter
    emits a :class:`NonConvergence` warning and returns the last iterate.
    """
    target = np.asarray(target, dtype=np.float64)
    squeeze = target.ndim == 2
    if squeeze:
        target = target[:, :, None]
    b = np.asarray(guidance, dtype=np.float64).reshape(target.shape)
    f = target.copy() if init is None else np.asarray(init, dtype=np.float64).reshape(target.shape).copy()
    f[0], f[-1], f[:, 0], f[:, -1] = target[0], target[-1], target[:, 0], target[:, -1]
    ny, nx = target.shape[0] - 2, target.shape[1] - 2
    if ny <= 0 or nx <= 0:
        return f[:, :, 0] if squeeze else f
    if omega is None:
        omega = _sor_omega(ny, nx)
    ii, jj = np.indices((ny, nx))
    colors = [((ii + jj) % 2 == c)[:, :, None] for c in (0, 1)]
    inner_b = b[1:-1, 1:-1]
    for it in range(max_iter):
        biggest = 0.0
        for color in colors:
            nb = f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:]
            inner = f[1:-1, 1:-1]
            delta = omega * ((nb + inner_b) / 4.0 - inner)
            delta = np.where(color, delta, 0.0)
            inner += delta
            biggest = max(biggest, float(np.abs(delta).max()))
        if biggest < tol:
            break
    else:
        warnings.warn(f"Poisson solve hit the {max_iter}-iteration cap "
                      f"(last update {biggest:.3g})", NonConvergence, stacklevel=2)
    return f[:, :, 0] if squeeze else f


def guidance_divergence(fg: np.ndarray, bg: np.ndarray, inside: np.ndarray) -> np.ndarray:
    """Per-pixel sum of guidance differences for :func:`poisson_solve`.

    An edge between two pixels inside the object takes the foreground
    difference; every other edge takes the background difference.
    """
    fg = np.asarray(fg, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    inside = np.asarray(inside, dtype=bool)
    if fg.ndim == 3:
        inside = inside[:, :, None]
    out = np.zeros_like(bg)
    # vertical then horizontal neighbour pairs (p, q)
    for axis in (0, 1):
        n = bg.shape[axis]
        a = [slice(None)] * bg.ndim
        c = [slice(None)] * bg.ndim
        a[axis], c[axis] = slice(0, n - 1), slice(1, n)
        a, c = tuple(a), tuple(c)
        both = inside[a] & inside[c]
        diff = np.where(both, fg[a] - fg[c], bg[a] - bg[c])
        out[a] += diff
        out[c] -= diff
    return out


def _window(canvas_shape, inst_shape, at) -> tuple[tuple[slice, slice], tuple[slice, slice]] | None:
    H, W = canvas_shape[:2]
    h, w = inst_shape[:2]
    x, y = at
    x1, y1, x2, y2 = max(x, 0), max(y, 0), min(x + w, W), min(y + h, H)
    if x2 <= x1 or y2 <= y1:
        return None
    return ((slice(y1, y2), slice(x1, x2)),
            (slice(y1 - y, y2 - y), slice(x1 - x, x2 - x)))


def _alpha_paste(canvas, raster, alpha, at):
    win = _window(canvas.shape, raster.shape, at)
    if win is None:
        raise ValueError("instance does not intersect the canvas")
    c_sl, i_sl = win
    a = alpha[i_sl][:, :, None].astype(np.float64)
    bg = canvas[c_sl].astype(np.float64)
    fg = raster[i_sl].astype(np.float64)
    out = canvas.copy()
    mixed = np.floor(a * fg + (1.0 - a) * bg + 0.5)
    out[c_sl] = np.clip(mixed, 0, 255).astype(np.uint8)
    return out


def blend(canvas: np.ndarray, inst: SeedInstance, at: tuple[int, int], mode: str = "direct",
          feather_sigma: float = 2.0) -> np.ndarray:
    canvas = as_raster(canvas)
    x, y = at
    if mode == "direct":
        return _alpha_paste(canvas, inst.raster, binary(inst.mask).astype(np.float32), at)
    if mode == "feathered":
        r = int(math.ceil(3.0 * feather_sigma))
        raster = np.pad(inst.raster, ((r, r), (r, r), (0, 0)), mode="edge")
        mask = np.pad(binary(inst.mask).astype(np.float32), r)
        return _alpha_paste(canvas, raster, feather(mask, feather_sigma), (x - r, y - r))
    if mode != "poisson":
        raise ValueError(f"unknown blend mode {mode!r}")

    h, w = inst.mask.shape
    H, W = canvas.shape[:2]
    # solve region: instance box grown by the one-pixel Dirichlet ring
    rx1, ry1 = max(x - 1, 0), max(y - 1, 0)
    rx2, ry2 = min(x + w + 1, W), min(y + h + 1, H)
    if rx2 - rx1 < 3 or ry2 - ry1 < 3:
        return blend(canvas, inst, at, "direct")
    region = canvas[ry1:ry2, rx1:rx2].astype(np.float64)
    fg = region.copy()
    inside = np.zeros(region.shape[:2], dtype=bool)
    win = _window(region.shape, inst.raster.shape, (x - rx1, y - ry1))
    r_sl, i_sl = win
    fg[r_sl] = inst.raster[i_sl]
    inside[r_sl] = binary(inst.mask)[i_sl]
    init = np.where(inside[:, :, None], fg, region)
    solved = poisson_solve(region, guidance_divergence(fg, region, inside), init=init)
    out = canvas.copy()
    out[ry1:ry2, rx1:rx2] = np.clip(np.floor(solved + 0.5), 0, 255).astype(np.uint8)
    return out


def _pick_mode(mix: dict, rng: RngStream) -> str:
    modes = [m for m in BLEND_MODES if mix.get(m, 0) > 0]
    weights = np.array([mix[m] for m in modes], dtype=np.float64)
    return modes[int(rng.choice(len(modes), p=weights / weights.sum()))]


def compose_scene(bg: np.ndarray, pools: SeedPools, spec: ComposeSpec, rng: RngStream,
                  image_id: int = 0):
    """Paste a random number of instances onto ``bg``.

    Returns ``(image, annotation, records, labels)`` where ``labels`` is an
    int32 map holding, per pixel, 1 + the index of the record visible there
    (0 for background). Later pastes occlude earlier ones.
    """
    canvas = as_raster(bg).copy()
    H, W = canvas.shape[:2]
    labels = np.zeros((H, W), dtype=np.int32)
    records: list[PlacementRecord] = []
    class_ids = pools.class_ids
    lo, hi = spec.objects_per_image
    k = int(rng.integers(lo, hi + 1))
    if k and not class_ids:
        raise ValueError("no seed instances to paste")
    for _ in range(k):
        cid = class_ids[int(rng.integers(len(class_ids)))]
        seed = select_seed(pools.original[cid], pools.styled.get(cid, []), pools.p_styled, rng)
        scale = float(rng.uniform(*spec.scale_range))
        rotation = float(rng.uniform(*spec.rotation_range))
        mode = _pick_mode(spec.blend_mix, rng)
        try:
            inst = transform_instance(seed, scale, rotation)
            h, w = inst.mask.shape
            x, y, near = sample_position((W, H), (w, h), records, spec.occ_prob, rng,
                                         spec.min_visible)
        except (DegenerateScale, NoValidPosition) as exc:
            log.info("image %d: skipped %s instance: %s", image_id, seed.name or cid, exc)
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NonConvergence)
            canvas = blend(canvas, inst, (x, y), mode, spec.feather_sigma)
        for wmsg in caught:
            log.warning("image %d: %s", image_id, wmsg.message)
        on = binary(inst.mask)
        c_sl, i_sl = _window(canvas.shape, inst.mask.shape, (x, y))
        labels[c_sl][on[i_sl]] = len(records) + 1
        box = BBox(x, y, w, h).clip(W, H)
        in_frame = on[i_sl]
        full_box = None
        if in_frame.any():
            fb = tight_bbox(in_frame)
            full_box = BBox(fb.x + c_sl[1].start, fb.y + c_sl[0].start, fb.w, fb.h)
        records.append(PlacementRecord(seed.name, cid, seed.provenance, scale, rotation,
                                       x, y, mode, near, box, int(on.sum()), full_box))

    ann = SceneAnnotation(image_id)
    counts = np.bincount(labels.ravel(), minlength=len(records) + 1)
    min_w, min_h = spec.min_box
    for i, rec in enumerate(records, start=1):
        rec.visible_area = int(counts[i])
        if rec.visible_area == 0:
            rec.dropped = "fully occluded"
            continue
        rec.visible_box = tight_bbox(labels == i)
        if rec.visible_area < spec.min_visible * rec.full_area:
            rec.dropped = "occluded"
            continue
        box = rec.visible_box if spec.box_mode == "visible" else rec.full_box
        if spec.min_box_filter and (box.w < min_w or box.h < min_h):
            rec.dropped = "small"
            continue
        rec.annotated = True
        area = rec.visible_area if spec.box_mode == "visible" else box.area
        ann.objects.append((rec.class_id, box, area))
    return canvas, ann, records, labels
