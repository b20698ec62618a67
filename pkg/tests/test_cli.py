import hashlib
import json

import numpy as np
import pytest

from balcut.cli import main
from balcut.config import parse_config
from balcut.dataset import list_images, read_image, validate_coco, write_image
from balcut.generate import build_pools, render
from balcut.simplify import simplify_background
from balcut.synthetic import colorful_patches, dominant_color_patches

SMALL_TRAIN = ["--epochs", "4", "--batch-size", "32"]


def _annotations(out):
    return json.loads((out / "annotations.json").read_text())


def test_generate_single_empty_image(write_config, tmp_path, demo_inputs):
    cfg_path = write_config(n_images=1, compose={"objects_per_image": [0, 0]})
    assert main(["generate", "--config", str(cfg_path)]) == 0
    out = tmp_path / "out"
    doc = _annotations(out)
    validate_coco(doc)
    assert len(doc["images"]) == 1 and doc["annotations"] == []
    img = read_image(out / doc["images"][0]["file_name"])
    cfg = parse_config(cfg_path)
    bg = read_image(list_images(cfg.paths.backgrounds)[0].parent / (doc["images"][0]["scene"] + ".png"))
    assert np.array_equal(img, simplify_background(bg, cfg.simplify))


def test_generate_writes_valid_coco_and_manifest(write_config, tmp_path):
    cfg_path = write_config(n_images=6, resolution=[320, 240], compose={"min_box": [20, 15]})
    assert main(["generate", "--config", str(cfg_path), "--seed", "3"]) == 0
    out = tmp_path / "out"
    doc = _annotations(out)
    validate_coco(doc)
    assert len(doc["images"]) == 6
    assert [c["name"] for c in doc["categories"]] == ["object0", "object1", "object2"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["global_seed"] == 3 and manifest["skipped"] == []
    for entry in manifest["images"]:
        pixels = read_image(out / "images" / entry["file"])
        assert hashlib.sha256(pixels.tobytes()).hexdigest() == entry["sha256"]
    kept = sum(p["annotated"] for e in manifest["images"] for p in e["placements"])
    assert kept == len(doc["annotations"])


def test_manifest_reproduces_the_run(write_config, tmp_path):
    cfg_path = write_config(n_images=3, resolution=[320, 240])
    assert main(["generate", "--config", str(cfg_path)]) == 0
    out = tmp_path / "out"
    first = (out / "annotations.json").read_bytes()
    hashes = [e["sha256"] for e in json.loads((out / "manifest.json").read_text())["images"]]
    manifest = out / "manifest.json"
    copy = tmp_path / "manifest_copy.json"
    copy.write_text(manifest.read_text())
    for f in (out / "images").iterdir():
        f.unlink()
    assert main(["generate", "--config", str(copy)]) == 0
    assert (out / "annotations.json").read_bytes() == first
    assert [e["sha256"] for e in json.loads(manifest.read_text())["images"]] == hashes


def test_exit_codes(write_config, tmp_path, capsys):
    bad = write_config(compose={"occ_prob": 1.5})
    assert main(["generate", "--config", str(bad)]) == 1
    assert "occ_prob" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json")
    assert main(["generate", "--config", str(broken)]) == 1
    assert main(["generate", "--config", str(tmp_path / "missing.json")]) == 3
    assert main(["gapmeter", "--source", str(tmp_path), "--target", str(tmp_path)]) == 3


def test_skipped_images_give_exit_2(write_config, tmp_path, monkeypatch):
    import balcut.generate as gen

    real = gen.render

    def flaky(cfg, pools, backgrounds, index):
        if index == 1:
            raise RuntimeError("boom")
        return real(cfg, pools, backgrounds, index)

    monkeypatch.setattr(gen, "render", flaky)
    cfg_path = write_config(n_images=3, resolution=[320, 240])
    assert main(["generate", "--config", str(cfg_path)]) == 2
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["skipped"] == [1]
    assert [im["id"] for im in _annotations(tmp_path / "out")["images"]] == [1, 3]


@pytest.mark.parametrize("k, grid", [(1, (1, 1)), (9, (3, 3)), (5, (2, 3))])
def test_preview_grid_and_boxes(write_config, tmp_path, k, grid):
    cfg_path = write_config(resolution=[160, 120], compose={"min_box": [10, 10]})
    out = tmp_path / "sheet.png"
    assert main(["preview", "--config", str(cfg_path), "-k", str(k), "--out", str(out)]) == 0
    sheet = read_image(out)
    assert sheet.shape == (grid[0] * 120, grid[1] * 160, 3)
    items = json.loads(out.with_suffix(".json").read_text())
    cfg = parse_config(cfg_path)
    pools, _ = build_pools(cfg)
    bgs = list_images(cfg.paths.backgrounds)
    for it in items:
        _, ann, _, _, _ = render(cfg, pools, bgs, it["index"])
        assert it["boxes"] == [b.as_list() for _, b, _ in ann.objects]
        r, c = divmod(it["index"], grid[1])
        panel = sheet[r * 120:(r + 1) * 120, c * 160:(c + 1) * 160]
        for x, y, w, h in it["boxes"]:
            # corners of each box are painted in the box color
            for px, py in ((x, y), (x + w - 1, y), (x, y + h - 1), (x + w - 1, y + h - 1)):
                assert tuple(panel[py, px]) == (255, 0, 255)


def test_preview_matches_generated_annotations(write_config, tmp_path):
    cfg_path = write_config(n_images=4, resolution=[160, 120], compose={"min_box": [10, 10]})
    assert main(["generate", "--config", str(cfg_path)]) == 0
    sheet = tmp_path / "p.png"
    assert main(["preview", "--config", str(cfg_path), "-k", "4", "--out", str(sheet)]) == 0
    items = json.loads(sheet.with_suffix(".json").read_text())
    doc = _annotations(tmp_path / "out")
    for it in items:
        boxes = [a["bbox"] for a in doc["annotations"] if a["image_id"] == it["index"] + 1]
        assert boxes == it["boxes"]


# -- gapmeter -----------------------------------------------------------------


def _patch_dir(root, fg, bg, n_scenes=10):
    for region, patches in (("foreground", fg), ("background", bg)):
        d = root / region
        d.mkdir(parents=True)
        for i, p in enumerate(patches):
            write_image(d / f"scene{i % n_scenes:02d}__{i:05d}.png", p)
    return root


def _coco_dir(root, channel, rng, n_images=12):
    """Images filled with one dominant color, each with two boxes."""
    (root / "images").mkdir(parents=True)
    images, anns = [], []
    for i in range(n_images):
        patches = dominant_color_patches(1, channel, rng)[0]
        img = np.tile(patches, (6, 8, 1))  # 192 x 256
        name = f"img{i:03d}.png"
        write_image(root / "images" / name, img)
        images.append({"id": i + 1, "file_name": f"images/{name}", "width": 256, "height": 192})
        for box in ([10, 10, 80, 60], [150, 100, 90, 80]):
            anns.append({"id": len(anns) + 1, "image_id": i + 1, "category_id": 1,
                         "bbox": box, "area": box[2] * box[3], "iscrowd": 0})
    doc = {"images": images, "annotations": anns,
           "categories": [{"id": 1, "name": "thing", "supercategory": "object"}]}
    (root / "annotations.json").write_text(json.dumps(doc))
    return root


def test_gapmeter_same_set_is_near_zero(tmp_path):
    rng = np.random.default_rng(0)
    src = _patch_dir(tmp_path / "a", colorful_patches(600, rng), colorful_patches(600, rng))
    out = tmp_path / "r.json"
    code = main(["gapmeter", "--source", str(src), "--target", str(src), "--out", str(out),
                 *SMALL_TRAIN])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["d_fg"] <= 0.2 and rep["d_bg"] <= 0.2
    assert rep["gap"] == pytest.approx(abs(rep["d_fg"] - rep["d_bg"]))


def test_gapmeter_on_coco_sets(tmp_path):
    rng = np.random.default_rng(1)
    red = _coco_dir(tmp_path / "red", 0, rng)
    blue = _coco_dir(tmp_path / "blue", 2, rng)
    out = tmp_path / "r.json"
    feats = tmp_path / "f.csv"
    code = main(["gapmeter", "--source", str(red), "--target", str(blue), "--out", str(out),
                 "--n-patches", "300", "--features", str(feats), *SMALL_TRAIN])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["d_fg"] >= 1.9 and rep["d_bg"] >= 1.9
    rows = feats.read_text().splitlines()
    assert rows[0].split(",")[:4] == ["patch_id", "domain", "region", "f0"]
    body = [r.split(",") for r in rows[1:]]
    assert body and all(len(r) == 87 for r in body)
    assert {r[1] for r in body} == {"source", "target"}
    assert {r[2] for r in body} == {"foreground", "background"}


def test_gapmeter_before_after(tmp_path):
    rng = np.random.default_rng(2)
    target = _patch_dir(tmp_path / "target", dominant_color_patches(400, 2, rng),
                        colorful_patches(400, rng))
    _patch_dir(tmp_path / "src" / "before", dominant_color_patches(400, 0, rng),
               colorful_patches(400, rng))
    _patch_dir(tmp_path / "src" / "after", dominant_color_patches(400, 2, rng),
               colorful_patches(400, rng))
    out = tmp_path / "ba.json"
    code = main(["gapmeter", "--source", str(tmp_path / "src"), "--target", str(target),
                 "--before-after", "--out", str(out), *SMALL_TRAIN])
    assert code == 0
    doc = json.loads(out.read_text())
    assert set(doc) == {"before", "after", "gap_delta"}
    for phase in ("before", "after"):
        assert set(doc[phase]) >= {"fg", "bg", "gap", "report"}
    assert doc["before"]["fg"] >= 1.9
    assert doc["after"]["fg"] <= 0.3
    assert doc["gap_delta"] == pytest.approx(doc["after"]["gap"] - doc["before"]["gap"])
    assert doc["gap_delta"] < -1.5
