"""Foreground/background gap before and after simplification plus style mixing.

Builds a toy target domain (unsimplified scenes, plain seeds) and two source
runs from the same inputs:

* before: color backgrounds, original seeds only
* after: gray backgrounds, half the pastes from styled variants

then runs ``balcut gapmeter --before-after`` on them. Sizes are kept small
so the whole thing finishes in a few minutes on one core. The toy target
keeps color backgrounds, so here gray pushes d_bg up rather than down. The
numbers only mean something against real target imagery.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from balcut.cli import main as balcut
from balcut.synthetic import write_demo_inputs


def _run(cfg: dict, out: Path, path: Path, **over):
    cfg = json.loads(json.dumps(cfg))
    cfg["paths"]["output"] = str(out)
    cfg.update(over)
    path.write_text(json.dumps(cfg, indent=2))
    code = balcut(["generate", "--config", str(path)])
    if code:
        raise SystemExit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path)
    ap.add_argument("--n-images", type=int, default=120)
    ap.add_argument("--n-patches", type=int, default=1500)
    ap.add_argument("--epochs", type=int, default=15)
    args = ap.parse_args()

    root = args.root
    cfg = write_demo_inputs(root / "inputs", np.random.default_rng(0), n_backgrounds=30)
    # target scenes come from other backgrounds
    target_in = write_demo_inputs(root / "target_inputs", np.random.default_rng(1),
                                  n_backgrounds=30)
    common = dict(n_images=args.n_images, compose={"blend_mix": {"direct": 1}})
    _run(target_in, root / "target", root / "target.json", simplify=[],
         diversify={"p_styled": 0.0}, global_seed=1, **common)
    _run(cfg, root / "source" / "before", root / "before.json", simplify=[],
         diversify={"p_styled": 0.0}, **common)
    _run(cfg, root / "source" / "after", root / "after.json", simplify=["gray"],
         diversify={"p_styled": 0.5}, **common)
    raise SystemExit(balcut([
        "gapmeter", "--source", str(root / "source"), "--target", str(root / "target"),
        "--before-after", "--out", str(root / "gap.json"),
        "--n-patches", str(args.n_patches), "--epochs", str(args.epochs)]))


if __name__ == "__main__":
    main()
