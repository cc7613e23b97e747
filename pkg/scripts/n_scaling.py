"""Compare random forests of N=50 and N=100 trees across datasets.

Each dataset is given as PROPERTY=CSV; the property name selects the metric
and category from the registry. One forest of max(N) trees is fit per
dataset and its first N trees are scored, so smaller forests are exact
prefixes of the larger one.

    python scripts/n_scaling.py "Ames Mutagenicity=data/ames.csv" \
        "Caco-2 Permeability=data/caco2.csv" --ns 50,100 --out runs/scaling
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from treekd.cli import DEMOS, bundled_dataset
from treekd.cli import main as treekd

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("datasets", nargs="*", help="PROPERTY=CSV pairs (default: both bundled mini sets)")
    ap.add_argument("--ns", default="50,100")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/scaling")
    args = ap.parse_args()

    items = args.datasets or [f"{prop}={bundled_dataset(f)}" for f, prop in DEMOS.values()]
    first_prop, _, first_path = items[0].partition("=")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {"dataset_path": str(Path(first_path).resolve()), "property_name": first_prop, "output_dir": "."}
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    argv = ["--config", str(out / "config.json"), "--seed", str(args.seed)]
    for step in ("extract", "train", "predict"):
        code = treekd([step, *argv])
        if code:
            sys.exit(code)
    extra = [a for item in items[1:] for a in ("--scaling-data", item)]
    sys.exit(treekd(["eval", *argv, "--n-scaling", args.ns, *extra]))
