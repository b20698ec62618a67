"""Generation config: JSON schema, defaults and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .compose import BLEND_MODES, ComposeSpec
from .simplify import SimplifySpec


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class ValidationError(ConfigError):
    def __init__(self, field_name: str, msg: str):
        self.field = field_name
        super().__init__(f"{field_name}: {msg}")


@dataclass(frozen=True)
class Paths:
    seeds: str
    backgrounds: str
    output: str
    masks: str | None = None
    variants: str | None = None


@dataclass(frozen=True)
class DiversifySpec:
    variants_per_seed: int = 4
    p_styled: float = 0.5


@dataclass(frozen=True)
class GenerationConfig:
    paths: Paths
    classes: tuple[str, ...] | None = None
    seeds_per_class: int = 8
    n_images: int = 6000
    resolution: tuple[int, int] = (640, 480)
    run_name: str = "synth"
    simplify: SimplifySpec = field(default_factory=lambda: SimplifySpec.parse(["gray"]))
    diversify: DiversifySpec = field(default_factory=DiversifySpec)
    compose: ComposeSpec = field(default_factory=ComposeSpec)
    seed_max_side: int = 200
    global_seed: int = 0
    workers: int = 1
    image_format: str = "png"
    dump_masks: bool = False

    def to_json(self) -> dict:
        c = self.compose
        return {
            "paths": {f.name: getattr(self.paths, f.name) for f in fields(Paths)},
            "classes": list(self.classes) if self.classes is not None else None,
            "seeds_per_class": self.seeds_per_class,
            "n_images": self.n_images,
            "resolution": list(self.resolution),
            "run_name": self.run_name,
            "simplify": self.simplify.to_json(),
            "diversify": {"variants_per_seed": self.diversify.variants_per_seed,
                          "p_styled": self.diversify.p_styled},
            "compose": {
                "objects_per_image": list(c.objects_per_image),
                "occ_prob": c.occ_prob,
                "blend_mix": dict(c.blend_mix),
                "feather_sigma": c.feather_sigma,
                "scale_range": list(c.scale_range),
                "rotation_range": list(c.rotation_range),
                "min_visible": c.min_visible,
                "min_box": list(c.min_box),
                "min_box_filter": c.min_box_filter,
                "box_mode": c.box_mode,
            },
            "seed_max_side": self.seed_max_side,
            "global_seed": self.global_seed,
            "workers": self.workers,
            "image_format": self.image_format,
            "dump_masks": self.dump_masks,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


_TOP_KEYS = {f.name for f in fields(GenerationConfig)}
_COMPOSE_KEYS = {f.name for f in fields(ComposeSpec)}


def _check_keys(obj: dict, allowed: set, where: str):
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ValidationError(f"{where}{extra[0]}", "unknown key")


def _prob(name: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
        raise ValidationError(name, f"must be a probability in [0, 1], got {v!r}")
    return float(v)


def _int(name: str, v, lo: int) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ValidationError(name, f"must be an integer >= {lo}, got {v!r}")
    return v


def _pair(name: str, v, cast):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValidationError(name, f"must be a pair, got {v!r}")
    try:
        return (cast(v[0]), cast(v[1]))
    except (TypeError, ValueError):
        raise ValidationError(name, f"bad values {v!r}") from None


def _resolve(base: Path | None, p):
    if p is None:
        return None
    path = Path(p).expanduser()
    if base is not None and not path.is_absolute():
        path = base / path
    return str(path.resolve())


def from_dict(obj: dict, base: Path | None = None, check_paths: bool = True) -> GenerationConfig:
    if not isinstance(obj, dict):
        raise ValidationError("<root>", "config must be a JSON object")
    if "config" in obj and "paths" not in obj:
        obj = obj["config"]  # a run manifest
    _check_keys(obj, _TOP_KEYS, "")
    if "paths" not in obj or not isinstance(obj["paths"], dict):
        raise ValidationError("paths", "required object")
    praw = obj["paths"]
    _check_keys(praw, {f.name for f in fields(Paths)}, "paths.")
    for req in ("seeds", "backgrounds", "output"):
        if not praw.get(req):
            raise ValidationError(f"paths.{req}", "required")
    paths = Paths(**{k: _resolve(base, v) for k, v in praw.items()})
    if check_paths:
        for name in ("seeds", "backgrounds", "masks", "variants"):
            p = getattr(paths, name)
            if p is not None and not Path(p).is_dir():
                raise ValidationError(f"paths.{name}", f"directory {p} does not exist")

    kw: dict = {"paths": paths}
    if obj.get("classes") is not None:
        classes = obj["classes"]
        if not isinstance(classes, list) or not classes or not all(isinstance(c, str) for c in classes):
            raise ValidationError("classes", "must be a non-empty list of names")
        if len(set(classes)) != len(classes):
            raise ValidationError("classes", "duplicate class names")
        kw["classes"] = tuple(classes)
    if "seeds_per_class" in obj:
        kw["seeds_per_class"] = _int("seeds_per_class", obj["seeds_per_class"], 1)
    if "n_images" in obj:
        kw["n_images"] = _int("n_images", obj["n_images"], 1)
    if "resolution" in obj:
        res = _pair("resolution", obj["resolution"], int)
        if min(res) < 32:
            raise ValidationError("resolution", "width and height must be >= 32")
        kw["resolution"] = res
    if "run_name" in obj:
        if not isinstance(obj["run_name"], str) or not obj["run_name"] or "/" in obj["run_name"]:
            raise ValidationError("run_name", "must be a non-empty file-name-safe string")
        kw["run_name"] = obj["run_name"]
    if "simplify" in obj:
        try:
            kw["simplify"] = SimplifySpec.parse(obj["simplify"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError("simplify", str(exc)) from None
    if "diversify" in obj:
        d = obj["diversify"]
        if not isinstance(d, dict):
            raise ValidationError("diversify", "must be an object")
        _check_keys(d, {"variants_per_seed", "p_styled"}, "diversify.")
        kw["diversify"] = DiversifySpec(
            _int("diversify.variants_per_seed", d.get("variants_per_seed", 4), 0),
            _prob("diversify.p_styled", d.get("p_styled", 0.5)))
    if "compose" in obj:
        kw["compose"] = _compose(obj["compose"])
    for name, lo in (("seed_max_side", 8), ("workers", 1)):
        if name in obj:
            kw[name] = _int(name, obj[name], lo)
    if "global_seed" in obj:
        kw["global_seed"] = _int("global_seed", obj["global_seed"], 0)
    if "image_format" in obj:
        if obj["image_format"] not in ("png", "jpg"):
            raise ValidationError("image_format", "must be 'png' or 'jpg'")
        kw["image_format"] = obj["image_format"]
    if "dump_masks" in obj:
        if not isinstance(obj["dump_masks"], bool):
            raise ValidationError("dump_masks", "must be true or false")
        kw["dump_masks"] = obj["dump_masks"]

    cfg = GenerationConfig(**kw)
    div = cfg.diversify
    if div.p_styled > 0 and div.variants_per_seed == 0 and cfg.paths.variants is None:
        raise ValidationError("diversify.p_styled",
                              "styled seeds requested but variants_per_seed is 0")
    return cfg


def _compose(c) -> ComposeSpec:
    if not isinstance(c, dict):
        raise ValidationError("compose", "must be an object")
    _check_keys(c, _COMPOSE_KEYS, "compose.")
    kw = {}
    if "objects_per_image" in c:
        kw["objects_per_image"] = _pair("compose.objects_per_image", c["objects_per_image"], int)
    if "occ_prob" in c:
        kw["occ_prob"] = _prob("compose.occ_prob", c["occ_prob"])
    if "blend_mix" in c:
        mix = c["blend_mix"]
        if isinstance(mix, str):
            mix = {mix: 1.0}
        if not isinstance(mix, dict) or set(mix) - set(BLEND_MODES):
            raise ValidationError("compose.blend_mix", f"keys must be among {BLEND_MODES}")
        kw["blend_mix"] = {k: float(v) for k, v in mix.items()}
    for name in ("feather_sigma", "min_visible"):
        if name in c:
            kw[name] = float(c[name])
    for name in ("scale_range", "rotation_range"):
        if name in c:
            kw[name] = _pair(f"compose.{name}", c[name], float)
    if "min_box" in c:
        kw["min_box"] = _pair("compose.min_box", c["min_box"], int)
    if "min_box_filter" in c:
        kw["min_box_filter"] = bool(c["min_box_filter"])
    if "box_mode" in c:
        kw["box_mode"] = c["box_mode"]
    try:
        return ComposeSpec(**kw)
    except ValueError as exc:
        msg = str(exc)
        name = next((k for k in _COMPOSE_KEYS if msg.startswith(k)), "compose")
        raise ValidationError(f"compose.{name}" if name != "compose" else name, msg) from None


def loads(text: str, base: Path | None = None, check_paths: bool = True) -> GenerationConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    return from_dict(obj, base, check_paths)


def parse_config(path, check_paths: bool = True) -> GenerationConfig:
    """Read a JSON config (or a run manifest); relative paths resolve against its folder."""
    path = Path(path)
    return loads(path.read_text(), path.parent.resolve(), check_paths)
