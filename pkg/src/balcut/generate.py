"""Run orchestration: build seed pools, compose images in parallel, write outputs."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import __version__
from .compose import SeedPools, compose_scene
from .config import GenerationConfig
from .dataset import coco_document, list_images, load_seeds, read_image, write_image
from .diversify import load_variant_dir, make_variants
from .geometry import rng_stream
from .simplify import simplify_background

log = logging.getLogger(__name__)

# image i uses stream i; seed k's variants use VARIANT_STREAM_BASE + k
VARIANT_STREAM_BASE = 1 << 40


@dataclass
class ImageResult:
    index: int
    file_name: str
    background: str
    width: int
    height: int
    objects: list = field(default_factory=list)
    records: list = field(default_factory=list)
    sha256: str = ""
    error: str | None = None


def build_pools(cfg: GenerationConfig) -> tuple[SeedPools, list[str]]:
    seeds, class_names = load_seeds(cfg.paths.seeds, cfg.classes, cfg.seeds_per_class,
                                    cfg.paths.masks, cfg.seed_max_side)
    original: dict[int, list] = {}
    styled: dict[int, list] = {}
    for s in seeds:
        original.setdefault(s.class_id, []).append(s)
    if cfg.paths.variants:
        class_dirs = {i: n for i, n in enumerate(class_names, start=1)}
        for v in load_variant_dir(cfg.paths.variants, seeds, class_dirs):
            styled.setdefault(v.class_id, []).append(v)
    else:
        for k, s in enumerate(seeds):
            rng = rng_stream(cfg.global_seed, VARIANT_STREAM_BASE + k)
            styled.setdefault(s.class_id, []).extend(
                make_variants(s, cfg.diversify.variants_per_seed, rng))
    pools = SeedPools(original, styled, cfg.diversify.p_styled)
    if pools.p_styled > 0:
        empty = [class_names[c - 1] for c in pools.class_ids if not styled.get(c)]
        if empty:
            raise ValueError(f"no styled variants for classes {empty}")
    return pools, class_names


def image_name(cfg: GenerationConfig, index: int) -> str:
    return f"{cfg.run_name}_{index:06d}.{cfg.image_format}"


def render(cfg: GenerationConfig, pools: SeedPools, backgrounds: list[Path], index: int):
    """Compose image ``index``; returns (image, SceneAnnotation, records, labels, bg path)."""
    rng = rng_stream(cfg.global_seed, index)
    bg_path = backgrounds[int(rng.integers(len(backgrounds)))]
    bg = read_image(bg_path)
    w, h = cfg.resolution
    if bg.shape[:2] != (h, w):
        bg = cv2.resize(bg, (w, h), interpolation=cv2.INTER_AREA)
    bg = simplify_background(bg, cfg.simplify)
    img, ann, records, labels = compose_scene(bg, pools, cfg.compose, rng, image_id=index + 1)
    return img, ann, records, labels, bg_path


_worker_state: dict = {}


def _init_worker(cfg, pools, backgrounds):
    _worker_state.update(cfg=cfg, pools=pools, backgrounds=backgrounds)


def _job(index: int) -> ImageResult:
    cfg: GenerationConfig = _worker_state["cfg"]
    name = image_name(cfg, index)
    w, h = cfg.resolution
    try:
        img, ann, records, labels, bg_path = render(cfg, _worker_state["pools"],
                                                   _worker_state["backgrounds"], index)
        out_dir = Path(cfg.paths.output)
        write_image(out_dir / "images" / name, img)
        if cfg.dump_masks:
            write_image(out_dir / "masks" / f"{Path(name).stem}.png",
                        np.minimum(labels, 255).astype(np.uint8))
        objects = [(cid, box.as_list(), area) for cid, box, area in ann.objects]
        return ImageResult(index, name, bg_path.stem, w, h, objects,
                           [r.to_json() for r in records],
                           hashlib.sha256(np.ascontiguousarray(img).tobytes()).hexdigest())
    except Exception as exc:  # skip-and-log: one bad image must not sink the run
        log.error("image %d failed: %s", index, exc)
        return ImageResult(index, name, "", w, h, error=f"{type(exc).__name__}: {exc}")


def _run_jobs(cfg: GenerationConfig, pools, backgrounds, indices) -> list[ImageResult]:
    if cfg.workers <= 1:
        _init_worker(cfg, pools, backgrounds)
        return [_job(i) for i in indices]
    chunk = max(1, math.ceil(len(indices) / (cfg.workers * 8)))
    with ProcessPoolExecutor(cfg.workers, initializer=_init_worker,
                             initargs=(cfg, pools, backgrounds)) as ex:
        return list(ex.map(_job, indices, chunksize=chunk))


@dataclass
class RunSummary:
    n_images: int
    n_written: int
    skipped: list[int]
    n_annotations: int
    output: Path


def generate(cfg: GenerationConfig) -> RunSummary:
    """Write ``images/``, ``annotations.json`` and ``manifest.json`` under the output dir."""
    out = Path(cfg.paths.output)
    (out / "images").mkdir(parents=True, exist_ok=True)
    if cfg.dump_masks:
        (out / "masks").mkdir(exist_ok=True)
    backgrounds = list_images(cfg.paths.backgrounds)
    if not backgrounds:
        raise FileNotFoundError(f"no background images in {cfg.paths.backgrounds}")
    pools, class_names = build_pools(cfg)
    results = _run_jobs(cfg, pools, backgrounds, list(range(cfg.n_images)))
    results.sort(key=lambda r: r.index)

    images, annotations, skipped = [], [], []
    for r in results:
        if r.error:
            skipped.append(r.index)
            continue
        image_id = r.index + 1
        images.append({"id": image_id, "file_name": f"images/{r.file_name}",
                       "width": r.width, "height": r.height, "scene": r.background})
        for cid, bbox, area in r.objects:
            annotations.append({"id": len(annotations) + 1, "image_id": image_id,
                                "category_id": cid, "bbox": bbox, "area": area,
                                "iscrowd": 0})
    doc = coco_document(images, annotations, class_names)
    (out / "annotations.json").write_text(json.dumps(doc, sort_keys=True))

    manifest = {
        "version": __version__,
        "config": cfg.to_json(),
        "global_seed": cfg.global_seed,
        "streams": {"image": "index", "variants": f"{VARIANT_STREAM_BASE} + seed index"},
        "classes": class_names,
        "images": [{"index": r.index, "stream": r.index, "file": r.file_name,
                    "background": r.background, "sha256": r.sha256, "error": r.error,
                    "placements": r.records} for r in results],
        "skipped": skipped,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    log.info("wrote %d images (%d skipped), %d boxes to %s",
             len(images), len(skipped), len(annotations), out)
    return RunSummary(cfg.n_images, len(images), skipped, len(annotations), out)


# -- preview ------------------------------------------------------------------

BOX_COLOR = (255, 0, 255)


def draw_boxes(img: np.ndarray, boxes) -> np.ndarray:
    """1-px outlines covering columns x..x+w-1 and rows y..y+h-1 of each box."""
    out = img.copy()
    for x, y, w, h in boxes:
        cv2.rectangle(out, (x, y), (x + w - 1, y + h - 1), BOX_COLOR, 1)
    return out


def tile(images: list[np.ndarray]) -> tuple[np.ndarray, tuple[int, int]]:
    """Row-major grid with ceil(sqrt(k)) columns; returns (sheet, (rows, cols))."""
    k = len(images)
    cols = math.ceil(math.sqrt(k))
    rows = math.ceil(k / cols)
    h, w = images[0].shape[:2]
    sheet = np.zeros((rows * h, cols * w, 3), dtype=np.uint8)
    for i, im in enumerate(images):
        r, c = divmod(i, cols)
        sheet[r * h:(r + 1) * h, c * w:(c + 1) * w] = im
    return sheet, (rows, cols)


def preview(cfg: GenerationConfig, k: int):
    """Render the first ``k`` images of a run with their boxes burned in.

    Returns ``(sheet, grid, items)``; each item holds the image index, its
    annotation boxes and the placement records.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    backgrounds = list_images(cfg.paths.backgrounds)
    if not backgrounds:
        raise FileNotFoundError(f"no background images in {cfg.paths.backgrounds}")
    pools, _ = build_pools(cfg)
    panels, items = [], []
    for i in range(k):
        img, ann, records, _, _ = render(cfg, pools, backgrounds, i)
        boxes = [box.as_list() for _, box, _ in ann.objects]
        panels.append(draw_boxes(img, boxes))
        items.append({"index": i, "boxes": boxes,
                      "categories": [cid for cid, _, _ in ann.objects],
                      "placements": [r.to_json() for r in records]})
    sheet, grid = tile(panels)
    return sheet, grid, items
