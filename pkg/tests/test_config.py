import json

import pytest

from balcut.config import ParseError, ValidationError, loads, parse_config


def test_minimal_config_gets_defaults(write_config):
    cfg = parse_config(write_config())
    assert cfg.diversify.p_styled == 0.5
    assert cfg.compose.occ_prob == 0.5
    assert cfg.resolution == (640, 480)
    assert cfg.n_images == 6000 and cfg.seeds_per_class == 8
    assert cfg.compose.objects_per_image == (3, 8)
    assert cfg.compose.min_box == (50, 30) and cfg.compose.min_box_filter
    assert [s.method for s in cfg.simplify.steps] == ["gray"]
    assert cfg.workers == 1 and cfg.global_seed == 0


def test_occ_prob_out_of_range(write_config):
    with pytest.raises(ValidationError) as err:
        parse_config(write_config(compose={"occ_prob": 1.5}))
    assert "occ_prob" in err.value.field


@pytest.mark.parametrize("bad, field", [
    ({"n_images": 0}, "n_images"),
    ({"diversify": {"p_styled": -0.1}}, "diversify.p_styled"),
    ({"resolution": [640]}, "resolution"),
    ({"compose": {"blend_mix": {"cloning": 1}}}, "compose.blend_mix"),
    ({"compose": {"objects_per_image": [5, 2]}}, "compose.objects_per_image"),
    ({"bogus": 1}, "bogus"),
    ({"paths": {"backgrounds": "/nonexistent/dir"}}, "paths.backgrounds"),
    ({"diversify": {"variants_per_seed": 0}}, "diversify.p_styled"),
])
def test_validation_errors_name_the_field(write_config, bad, field):
    with pytest.raises(ValidationError) as err:
        parse_config(write_config(**bad))
    assert err.value.field == field


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "paths": {\n    "seeds": "x",\n  }\n}')
    with pytest.raises(ParseError) as err:
        parse_config(path)
    assert err.value.line == 4


def test_round_trip(write_config):
    cfg = parse_config(write_config(
        simplify=[{"method": "gaussian_blur", "sigma": 1.5}, "gray", "quantize_8bit"],
        compose={"occ_prob": 0.3, "blend_mix": {"direct": 2, "poisson": 1}},
        classes=["object2", "object0"], global_seed=99))
    again = loads(cfg.dumps())
    assert again == cfg
    assert loads(again.dumps()).dumps() == cfg.dumps()


def test_relative_paths_resolve_against_config(tmp_path, demo_inputs):
    root, _ = demo_inputs
    cfg = {"paths": {"seeds": str(root / "seeds"), "backgrounds": "bgs", "output": "out"}}
    (tmp_path / "bgs").mkdir()
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    parsed = parse_config(tmp_path / "c.json")
    assert parsed.paths.backgrounds == str((tmp_path / "bgs").resolve())


def test_manifest_is_accepted_as_config(write_config):
    cfg = parse_config(write_config())
    manifest = {"version": "x", "config": cfg.to_json()}
    assert loads(json.dumps(manifest)) == cfg
