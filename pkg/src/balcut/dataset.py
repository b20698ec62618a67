"""File I/O: images, seed folders, COCO detection files and patch folders."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import cv2
import numpy as np

from .diversify import SeedInstance
from .gapmeter import PATCH, AnnotatedImage, PatchSet
from .geometry import BBox, tight_bbox
from .maskproc import fill_holes

log = logging.getLogger(__name__)

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MASK_SUFFIX = "_mask"


class DatasetError(OSError):
    pass


def list_images(folder) -> list[Path]:
    folder = Path(folder)
    return sorted(p for p in folder.iterdir()
                  if p.suffix.lower() in IMAGE_EXTS and not p.stem.endswith(MASK_SUFFIX))


def read_image(path, with_alpha: bool = False) -> np.ndarray:
    """RGB (or RGBA when ``with_alpha``) uint8 array."""
    flag = cv2.IMREAD_UNCHANGED if with_alpha else cv2.IMREAD_COLOR
    img = cv2.imread(str(path), flag)
    if img is None:
        raise DatasetError(f"cannot read image {path}")
    if img.ndim == 2:
        img = cv2.cvtColor(img, cv2.COLOR_GRAY2BGR)
    if img.dtype != np.uint8:
        img = (img / (np.iinfo(img.dtype).max / 255.0)).astype(np.uint8)
    if img.shape[2] == 4:
        return cv2.cvtColor(img, cv2.COLOR_BGRA2RGBA) if with_alpha else img[:, :, 2::-1].copy()
    return np.ascontiguousarray(img[:, :, ::-1])


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[:, :, ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(arr)):
        raise DatasetError(f"cannot write image {path}")


def read_mask(path) -> np.ndarray:
    """Single-channel 8-bit mask file scaled to coverage in [0, 1]."""
    m = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if m is None:
        raise DatasetError(f"cannot read mask {path}")
    return m.astype(np.float32) / 255.0


def _mask_for(img_path: Path, masks_root: Path | None, class_dir: str) -> Path | None:
    candidates = [img_path.with_name(img_path.stem + MASK_SUFFIX + ".png")]
    if masks_root is not None:
        candidates += [masks_root / class_dir / (img_path.stem + ".png"),
                       masks_root / class_dir / (img_path.stem + MASK_SUFFIX + ".png")]
    return next((c for c in candidates if c.exists()), None)


def prepare_seed(raster: np.ndarray, mask: np.ndarray, class_id: int, name: str,
                 max_side: int | None) -> SeedInstance:
    """Fill mask holes, crop to the object and shrink so the long side <= max_side."""
    mask = fill_holes(mask)
    box = tight_bbox(mask)
    raster = raster[box.y:box.y2, box.x:box.x2]
    mask = mask[box.y:box.y2, box.x:box.x2]
    long_side = max(box.w, box.h)
    if max_side and long_side > max_side:
        f = max_side / long_side
        size = (max(2, round(box.w * f)), max(2, round(box.h * f)))
        raster = cv2.resize(raster, size, interpolation=cv2.INTER_AREA)
        mask = np.clip(cv2.resize(mask, size, interpolation=cv2.INTER_AREA), 0, 1)
    return SeedInstance(np.ascontiguousarray(raster), np.ascontiguousarray(mask), class_id,
                        name=name)


def load_seeds(seeds_dir, classes=None, per_class: int = 8, masks_dir=None,
               max_side: int | None = 200):
    """Load ``<seeds>/<class>/<name>.<ext>`` with masks.

    A mask is ``<name>_mask.png`` beside the image, ``<masks>/<class>/<name>.png``,
    or the alpha channel of a 4-channel seed image. Returns
    ``(seeds, class_names)`` where class ids are 1-based in ``class_names`` order.
    """
    seeds_dir = Path(seeds_dir)
    masks_root = Path(masks_dir) if masks_dir else None
    if classes is None:
        classes = sorted(p.name for p in seeds_dir.iterdir() if p.is_dir())
    if not classes:
        raise DatasetError(f"no class folders under {seeds_dir}")
    seeds = []
    for cid, cname in enumerate(classes, start=1):
        cdir = seeds_dir / cname
        if not cdir.is_dir():
            raise DatasetError(f"missing seed folder {cdir}")
        files = list_images(cdir)[:per_class]
        if not files:
            raise DatasetError(f"no seed images in {cdir}")
        for f in files:
            img = read_image(f, with_alpha=True)
            mpath = _mask_for(f, masks_root, cname)
            if mpath is not None:
                mask = read_mask(mpath)
            elif img.shape[2] == 4:
                mask = img[:, :, 3].astype(np.float32) / 255.0
            else:
                raise DatasetError(f"no mask for seed image {f}")
            rgb = np.ascontiguousarray(img[:, :, :3])
            if mask.shape != rgb.shape[:2]:
                raise DatasetError(f"mask size differs from {f}")
            seeds.append(prepare_seed(rgb, mask, cid, f.stem, max_side))
    return seeds, list(classes)


# -- COCO ---------------------------------------------------------------------


def coco_document(images: list[dict], annotations: list[dict], class_names) -> dict:
    cats = [{"id": i, "name": n, "supercategory": "object"}
            for i, n in enumerate(class_names, start=1)]
    return {"images": images, "annotations": annotations,
            "categories": sorted(cats, key=lambda c: c["id"])}


def validate_coco(doc: dict) -> None:
    """Raise ValueError unless ``doc`` is a well-formed COCO detection file."""
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise ValueError(f"missing list {key!r}")
    image_ids = set()
    for im in doc["images"]:
        for k in ("id", "file_name", "width", "height"):
            if k not in im:
                raise ValueError(f"image entry lacks {k!r}")
        if im["id"] in image_ids:
            raise ValueError(f"duplicate image id {im['id']}")
        image_ids.add(im["id"])
    cat_ids = [c["id"] for c in doc["categories"]]
    if len(set(cat_ids)) != len(cat_ids) or cat_ids != sorted(cat_ids):
        raise ValueError("category ids must be unique and sorted")
    ann_ids = set()
    for a in doc["annotations"]:
        for k in ("id", "image_id", "category_id", "bbox", "area", "iscrowd"):
            if k not in a:
                raise ValueError(f"annotation lacks {k!r}")
        if a["id"] in ann_ids:
            raise ValueError(f"duplicate annotation id {a['id']}")
        ann_ids.add(a["id"])
        if a["image_id"] not in image_ids:
            raise ValueError(f"annotation {a['id']} points at unknown image")
        if a["category_id"] not in cat_ids:
            raise ValueError(f"annotation {a['id']} has unknown category")
        if len(a["bbox"]) != 4 or a["bbox"][2] <= 0 or a["bbox"][3] <= 0:
            raise ValueError(f"annotation {a['id']} has a bad bbox")
        if a["area"] <= 0:
            raise ValueError(f"annotation {a['id']} has non-positive area")


def load_coco_set(folder) -> list[AnnotatedImage]:
    """Images plus boxes from ``<folder>/annotations.json``.

    The scene id is the image entry's ``scene`` field when present (generated
    sets record their background there), else the file stem.
    """
    folder = Path(folder)
    doc = json.loads((folder / "annotations.json").read_text())
    boxes: dict = {}
    for a in doc["annotations"]:
        x, y, w, h = (int(round(v)) for v in a["bbox"])
        if w >= 1 and h >= 1:
            boxes.setdefault(a["image_id"], []).append(BBox(x, y, w, h))
    out = []
    for im in doc["images"]:
        path = folder / im["file_name"]
        if not path.exists():
            path = folder / "images" / im["file_name"]
        scene = str(im.get("scene", Path(im["file_name"]).stem))
        out.append(AnnotatedImage(read_image(path), boxes.get(im["id"], []), scene))
    return out


def load_patch_dir(folder, region: str, domain: str) -> PatchSet:
    """32x32 patch files; ``<scene>__<rest>.png`` names carry the scene id."""
    files = list_images(folder)
    if not files:
        raise DatasetError(f"no patch images in {folder}")
    patches, scenes = [], []
    for f in files:
        p = read_image(f)
        if p.shape[:2] != (PATCH, PATCH):
            raise DatasetError(f"{f} is not a 32x32 patch")
        patches.append(p)
        scenes.append(f.stem.split("__", 1)[0] if "__" in f.stem else f.stem)
    return PatchSet(np.stack(patches), np.array(scenes), domain, region)
