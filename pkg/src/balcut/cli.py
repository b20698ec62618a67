"""Command line: ``balcut generate | gapmeter | preview``.

Exit codes: 0 success, 1 config parse/validation error, 2 runtime error or
skipped images, 3 fatal I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .dataset import DatasetError, load_coco_set, load_patch_dir, write_image
from .gapmeter import (EmptyTestSet, InsufficientRegion, SplitSpec, TooFewScenes, TrainConfig,
                       extract_patches, gap_report, write_features_csv)
from .generate import generate, preview

log = logging.getLogger("balcut")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


def _load_config(args):
    cfg = parse_config(args.config)
    overrides = {}
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "seed", None) is not None:
        overrides["global_seed"] = args.seed
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    summary = generate(cfg)
    print(f"{summary.n_written}/{summary.n_images} images, {summary.n_annotations} boxes "
          f"-> {summary.output}")
    if summary.skipped:
        print(f"skipped {len(summary.skipped)} images: {summary.skipped[:20]}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_preview(args) -> int:
    cfg = _load_config(args)
    sheet, (rows, cols), items = preview(cfg, args.k)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_image(out, sheet)
    out.with_suffix(".json").write_text(json.dumps(items, indent=1))
    print(f"{args.k} samples in a {rows}x{cols} grid -> {out}")
    for it in items:
        print(f"image {it['index']}: {len(it['boxes'])} boxes")
        for p in it["placements"]:
            print(f"  class {p['class_id']} {p['provenance']:8s} {p['blend_mode']:9s} "
                  f"scale {p['scale']:.2f} rot {p['rotation']:+6.1f} at {p['translation']} "
                  f"near={p['near_previous']} visible={p['visible_box']} "
                  f"{'kept' if p['annotated'] else 'dropped: ' + str(p['dropped'])}")
    return EXIT_OK


def _patch_sets(folder: Path, domain: str, n: int, rng):
    """Foreground and background patches of one domain folder."""
    if (folder / "annotations.json").exists():
        images = load_coco_set(folder)
        return (extract_patches(images, "foreground", n, rng, domain),
                extract_patches(images, "background", n, rng, domain))
    if (folder / "foreground").is_dir() and (folder / "background").is_dir():
        return (load_patch_dir(folder / "foreground", "foreground", domain),
                load_patch_dir(folder / "background", "background", domain))
    raise DatasetError(f"{folder} holds neither annotations.json nor foreground/ + background/")


def _measure(source: Path, target: Path, args, features_path=None):
    rng = np.random.default_rng(args.seed)
    fg_s, bg_s = _patch_sets(source, "source", args.n_patches, rng)
    fg_t, bg_t = _patch_sets(target, "target", args.n_patches, rng)
    hp = TrainConfig(args.lr, args.momentum, args.batch_size, args.epochs)
    report, feats = gap_report(fg_s, fg_t, bg_s, bg_t, SplitSpec(), hp, rng,
                               with_features=features_path is not None)
    if features_path is not None:
        write_features_csv(features_path, feats)
    return report


def cmd_gapmeter(args) -> int:
    source, target = Path(args.source), Path(args.target)
    if args.before_after:
        rows = {}
        for phase in ("before", "after"):
            feats = Path(f"{args.features}.{phase}.csv") if args.features else None
            rep = _measure(source / phase, target, args, feats)
            rows[phase] = {"fg": rep.d_fg, "bg": rep.d_bg, "gap": rep.gap,
                           "report": rep.to_json()}
            print(f"{phase:6s}  fg {rep.d_fg:.3f}  bg {rep.d_bg:.3f}  gap {rep.gap:.3f}")
        rows["gap_delta"] = rows["after"]["gap"] - rows["before"]["gap"]
        doc = rows
    else:
        rep = _measure(source, target, args, Path(args.features) if args.features else None)
        doc = rep.to_json()
        print(f"fg {rep.d_fg:.3f}  bg {rep.d_bg:.3f}  gap {rep.gap:.3f}")
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="balcut", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic detection dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--workers", type=int)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("gapmeter", help="measure foreground/background H-divergence")
    m.add_argument("--source", required=True,
                   help="annotated set (annotations.json) or foreground/ + background/ patch dirs")
    m.add_argument("--target", required=True)
    m.add_argument("--before-after", action="store_true",
                   help="measure <source>/before and <source>/after against the target")
    m.add_argument("--out")
    m.add_argument("--features", help="CSV path for fc2 feature vectors")
    m.add_argument("--n-patches", type=int, default=5000,
                   help="patches per domain and region cut from annotated sets")
    m.add_argument("--epochs", type=int, default=30)
    m.add_argument("--lr", type=float, default=0.01)
    m.add_argument("--momentum", type=float, default=0.9)
    m.add_argument("--batch-size", type=int, default=64)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_gapmeter)

    v = sub.add_parser("preview", help="contact sheet of sample composites")
    v.add_argument("--config", required=True)
    v.add_argument("-k", type=int, default=9)
    v.add_argument("--out", required=True)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_preview)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DatasetError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InsufficientRegion, TooFewScenes, EmptyTestSet, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
