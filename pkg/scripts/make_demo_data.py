"""Write procedural seed objects and backgrounds plus a config pointing at them.

    python3 scripts/make_demo_data.py runs/demo
    balcut generate --config runs/demo/config.json
"""

import argparse
import json
from pathlib import Path

import numpy as np

from balcut.synthetic import write_demo_inputs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--seeds-per-class", type=int, default=8)
    ap.add_argument("--backgrounds", type=int, default=40)
    ap.add_argument("--n-images", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = write_demo_inputs(args.root, np.random.default_rng(args.seed), args.classes,
                            args.seeds_per_class, args.backgrounds)
    cfg["n_images"] = args.n_images
    cfg["global_seed"] = args.seed
    path = args.root / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
