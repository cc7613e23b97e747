"""Run the full pipeline on a bundled mini dataset and print the report.

    python scripts/run_pipeline.py --dataset ames --out runs/ames
    python scripts/run_pipeline.py --config my_run.json
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from treekd.cli import main as treekd


def run(argv: list[str]) -> None:
    code = treekd(argv)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", choices=["ames", "caco2"], default="ames")
    ap.add_argument("--config", help="use an existing config instead of a bundled demo")
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    config = args.config
    if config is None:
        run(["demo-config", "--dataset", args.dataset, "--out", args.out, "--seed", str(args.seed)])
        config = str(Path(args.out) / "config.json")
    t0 = time.perf_counter()
    for step in ("extract", "train", "build-prompts", "predict", "eval"):
        run([step, "--config", config, "--out", str(Path(args.out) / "out")])
    print(f"pipeline finished in {time.perf_counter() - t0:.2f}s")
