"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line; the lines are repeated in the terminal
summary. Several of these take minutes on one core (marked ``slow``).
"""

import hashlib
import json
import time

import numpy as np
import pytest

from balcut.cli import main
from balcut.compose import guidance_divergence, poisson_solve
from balcut.config import parse_config
from balcut.dataset import list_images, read_image, read_mask
from balcut.gapmeter import (PARAM_SHAPES, DomainClassifier, SplitSpec, TrainConfig,
                             gradient_check, measure)
from balcut.generate import build_pools, render
from balcut.geometry import tight_bbox
from balcut.simplify import simplify_background, to_gray
from balcut.synthetic import (bayes_error_two_gaussians, brightness_patches, colorful_patches,
                              dominant_color_patches, with_scenes)
from test_compose import dense_poisson

N = 2000  # patches per domain


def _measure(src, tgt, seed=0):
    return measure(src, tgt, SplitSpec(), TrainConfig(), np.random.default_rng(seed))[0]


# -- 1 -------------------------------------------------------------------------


@pytest.mark.slow
def test_01_divergence_sanity(verdict):
    with verdict(1, "d(iid halves) <= 0.2, d(color-disjoint) >= 1.9, < 3 min each") as note:
        rng = np.random.default_rng(100)
        pool = colorful_patches(2 * N, rng)
        t0 = time.perf_counter()
        iid = _measure(with_scenes(pool[:N], 50, "source"),
                       with_scenes(pool[N:], 50, "target", prefix="t"))
        t_iid = time.perf_counter() - t0
        note.append(f"iid d={iid.divergence:.3f} ({t_iid:.0f}s, val acc {iid.val_accuracy:.3f})")
        t0 = time.perf_counter()
        dis = _measure(with_scenes(dominant_color_patches(N, 0, rng), 50, "source"),
                       with_scenes(dominant_color_patches(N, 2, rng), 50, "target", prefix="t"))
        t_dis = time.perf_counter() - t0
        note.append(f"disjoint d={dis.divergence:.3f} ({t_dis:.0f}s)")
        assert 0.0 <= iid.divergence <= 0.2
        assert dis.divergence >= 1.9
        assert t_iid < 180 and t_dis < 180


# -- 2 -------------------------------------------------------------------------


@pytest.mark.slow
def test_02_bayes_oracle_bound(verdict):
    sigma, lo_mean, hi_mean = 25.0, 103.0, 153.0
    e_star = bayes_error_two_gaussians((hi_mean - lo_mean) / sigma)
    ideal = 2 * (1 - 2 * e_star)
    with verdict(2, f"Bayes bound, e*={e_star:.4f}, d in [{ideal - 0.15:.3f}, {ideal + 0.05:.3f}]") as note:
        rng = np.random.default_rng(200)
        src = with_scenes(brightness_patches(N, lo_mean, sigma, rng), 40, "source")
        tgt = with_scenes(brightness_patches(N, hi_mean, sigma, rng), 40, "target", prefix="t")
        res = _measure(src, tgt)
        note.append(f"d={res.divergence:.3f}")
        assert ideal - 0.15 <= res.divergence <= ideal + 0.05


# -- 3 -------------------------------------------------------------------------


@pytest.mark.slow
def test_03_gradient_check(verdict):
    with verdict(3, "backprop vs central differences, rel err < 1e-3 per tensor") as note:
        rng = np.random.default_rng(300)
        clf = DomainClassifier.init(rng, dtype=np.float64)
        x = rng.integers(0, 256, (8, 32, 32, 3)).astype(np.uint8)
        y = rng.integers(0, 2, 8)
        # every entry except in fc1_w / fc2_w, which are sampled
        res = gradient_check(clf, x, y, step=1e-4, max_entries=2400, rng=rng)
        assert set(res) == set(PARAM_SHAPES)
        worst = max(res, key=lambda k: res[k][0])
        checked = sum(v[1] for v in res.values())
        skipped = sum(v[2] for v in res.values())
        note.append(f"worst {worst} {res[worst][0]:.1e}; {checked} entries checked, "
                    f"{skipped} skipped at ReLU/pool kinks")
        for name, (rel, n_checked, _) in res.items():
            assert n_checked > 0, name
            assert rel < 1e-3, (name, rel)


# -- 4 -------------------------------------------------------------------------


@pytest.mark.slow
def test_04_simplification_moves_the_domain(verdict):
    with verdict(4, "d(gray(X1), X2) - d(X1, X2) >= 0.3") as note:
        rng = np.random.default_rng(400)
        pool = colorful_patches(2 * N, rng)
        x1, x2 = pool[:N], pool[N:]
        base = _measure(with_scenes(x1, 50, "source"), with_scenes(x2, 50, "target", prefix="t"))
        gray = _measure(with_scenes(np.stack([to_gray(p) for p in x1]), 50, "source"),
                        with_scenes(x2, 50, "target", prefix="t"))
        note.append(f"d(X1,X2)={base.divergence:.3f} d(gray X1,X2)={gray.divergence:.3f}")
        assert gray.divergence - base.divergence >= 0.3


# -- 5, 6 ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def placements(tmp_path_factory, demo_inputs):
    """At least 10 000 pastes drawn through the generation pipeline."""
    _, base = demo_inputs
    cfg_dict = json.loads(json.dumps(base))
    cfg_dict["paths"]["output"] = str(tmp_path_factory.mktemp("stats"))
    cfg_dict.update(resolution=[320, 240], simplify=[], global_seed=5,
                    compose={"objects_per_image": [2, 6], "occ_prob": 0.5,
                             "blend_mix": {"direct": 1}, "min_box_filter": False},
                    diversify={"variants_per_seed": 2, "p_styled": 0.5})
    path = tmp_path_factory.mktemp("cfg") / "c.json"
    path.write_text(json.dumps(cfg_dict))
    cfg = parse_config(path)
    pools, _ = build_pools(cfg)
    bgs = list_images(cfg.paths.backgrounds)
    images, i = [], 0
    while sum(max(len(r) - 1, 0) for r in images) < 10_500:
        images.append(render(cfg, pools, bgs, i)[2])
        i += 1
    return images


def test_05_occv2_near_fraction(verdict, placements):
    with verdict(5, "near_previous fraction in [0.485, 0.515]") as note:
        # a placement can only be near a previous one if there is one
        eligible = [r.near_previous for recs in placements for r in recs[1:]]
        frac = float(np.mean(eligible))
        note.append(f"{frac:.4f} over {len(eligible)} placements")
        assert len(eligible) >= 10_000
        assert 0.485 <= frac <= 0.515


def test_06_halfgan_styled_fraction(verdict, placements):
    with verdict(6, "styled provenance fraction in [0.485, 0.515]") as note:
        prov = [r.provenance == "styled" for recs in placements for r in recs]
        frac = float(np.mean(prov))
        note.append(f"{frac:.4f} over {len(prov)} pastes")
        assert len(prov) >= 10_000
        assert 0.485 <= frac <= 0.515


# -- 7 -------------------------------------------------------------------------


def test_07_compositing_exactness(verdict, write_config, tmp_path):
    with verdict(7, "alpha=0 pixels equal background, boxes from stored masks, 50x30 filter") as note:
        cfg_path = write_config(n_images=40, dump_masks=True, simplify=["gray"],
                                compose={"blend_mix": {"direct": 1}})
        assert main(["generate", "--config", str(cfg_path)]) == 0
        cfg = parse_config(cfg_path)
        out = tmp_path / "out"
        doc = json.loads((out / "annotations.json").read_text())
        manifest = json.loads((out / "manifest.json").read_text())
        by_image = {}
        for a in doc["annotations"]:
            by_image.setdefault(a["image_id"], []).append(a["bbox"])
        bg_dir = list_images(cfg.paths.backgrounds)[0].parent
        n_boxes = 0
        for entry in manifest["images"]:
            img = read_image(out / "images" / entry["file"])
            labels = np.rint(read_mask(out / "masks" / (entry["file"][:-4] + ".png")) * 255)
            bg = simplify_background(read_image(bg_dir / (entry["background"] + ".png")),
                                     cfg.simplify)
            assert np.array_equal(img[labels == 0], bg[labels == 0])
            boxes = [tight_bbox(labels == i).as_list()
                     for i, p in enumerate(entry["placements"], start=1) if p["annotated"]]
            assert boxes == by_image.get(entry["index"] + 1, [])
            n_boxes += len(boxes)
        sizes = np.array([a["bbox"][2:] for a in doc["annotations"]])
        note.append(f"{len(manifest['images'])} images, {n_boxes} boxes, "
                    f"min box {sizes[:, 0].min()}x{sizes[:, 1].min()}")
        assert n_boxes == len(doc["annotations"]) > 0
        assert (sizes[:, 0] >= 50).all() and (sizes[:, 1] >= 30).all()


# -- 8 -------------------------------------------------------------------------


def test_08_poisson_solver(verdict):
    with verdict(8, "6x6 Poisson vs dense solve within 0.5; constant-source identity") as note:
        rng = np.random.default_rng(800)
        worst = 0.0
        for _ in range(20):
            t = rng.uniform(0, 255, (6, 6))
            g = rng.normal(0, 40, (6, 6))
            worst = max(worst, float(np.abs(poisson_solve(t, g) - dense_poisson(t, g)).max()))
        # pasting a source identical to the target leaves it unchanged
        t = rng.uniform(0, 255, (6, 6, 3))
        same = poisson_solve(t, guidance_divergence(t, t, np.ones((6, 6), bool)),
                             init=np.zeros_like(t))
        ident = float(np.abs(same - t).max())
        flat = poisson_solve(np.full((6, 6), 91.0), np.zeros((6, 6)), init=np.zeros((6, 6)))
        note.append(f"max dev from dense {worst:.2e}, identity dev {ident:.2e}")
        assert worst <= 0.5
        assert ident <= 0.5
        np.testing.assert_allclose(flat, 91.0, atol=0.5)


# -- 9 -------------------------------------------------------------------------




@pytest.mark.slow
def test_09_worker_count_determinism(verdict, tmp_path, demo_inputs):
    with verdict(9, "workers 1 vs 8: identical annotations.json and pixel hashes") as note:
        _, base = demo_inputs
        outs = {}
        for workers in (1, 8):
            cfg = json.loads(json.dumps(base))
            cfg["paths"]["output"] = str(tmp_path / f"w{workers}")
            cfg.update(n_images=24, global_seed=9)
            path = tmp_path / f"c{workers}.json"
            path.write_text(json.dumps(cfg))
            assert main(["generate", "--config", str(path), "--workers", str(workers)]) == 0
            outs[workers] = tmp_path / f"w{workers}"
        ann = [(outs[w] / "annotations.json").read_bytes() for w in (1, 8)]
        hashes = []
        for w in (1, 8):
            files = sorted((outs[w] / "images").iterdir())
            hashes.append([hashlib.sha256(read_image(f).tobytes()).hexdigest() for f in files])
        modes = {p["blend_mode"] for e in json.loads((outs[1] / "manifest.json").read_text())["images"]
                 for p in e["placements"]}
        note.append(f"{len(hashes[0])} images, blends {sorted(modes)}")
        assert ann[0] == ann[1]
        assert hashes[0] == hashes[1] and len(hashes[0]) == 24


# -- 10 ------------------------------------------------------------------------


@pytest.mark.slow
def test_10_throughput(verdict, tmp_path, demo_inputs):
    with verdict(10, "6000 images at 640x480, direct/feathered, < 30 min") as note:
        _, base = demo_inputs
        cfg = json.loads(json.dumps(base))
        cfg["paths"]["output"] = str(tmp_path / "big")
        cfg.update(n_images=6000, resolution=[640, 480], workers=8,
                   compose={"blend_mix": {"direct": 1, "feathered": 1}})
        path = tmp_path / "big.json"
        path.write_text(json.dumps(cfg))
        t0 = time.perf_counter()
        code = main(["generate", "--config", str(path)])
        minutes = (time.perf_counter() - t0) / 60
        doc = json.loads((tmp_path / "big" / "annotations.json").read_text())
        note.append(f"{len(doc['images'])} images, {len(doc['annotations'])} boxes "
                    f"in {minutes:.1f} min")
        assert code == 0 and len(doc["images"]) == 6000
        assert minutes < 30
