"""Regenerate the committed golden metrics for the bundled mini datasets.

Runs extract -> train -> build-prompts -> predict (stub) -> eval with the demo
config at seed 0 and copies each metrics.json into tests/golden/. Only rerun
this when a deliberate change alters the pipeline's numbers.
"""

from __future__ import annotations

import argparse
import shutil
import tempfile
from pathlib import Path

from treekd.cli import DEMOS, main

STAGES = ["extract", "train", "build-prompts", "predict", "eval"]
GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def golden_run(dataset: str, workdir: Path) -> Path:
    """Run the stub pipeline for one bundled dataset; return its metrics.json."""
    if main(["demo-config", "--dataset", dataset, "--out", str(workdir)]) != 0:
        raise SystemExit(f"demo-config failed for {dataset}")
    cfg = str(workdir / "config.json")
    for stage in STAGES:
        if main([stage, "--config", cfg]) != 0:
            raise SystemExit(f"{stage} failed for {dataset}")
    return workdir / "out" / "metrics.json"


def main_(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--dest", type=Path, default=GOLDEN)
    args = ap.parse_args(argv)
    args.dest.mkdir(parents=True, exist_ok=True)
    for name in sorted(DEMOS):
        with tempfile.TemporaryDirectory() as tmp:
            metrics = golden_run(name, Path(tmp))
            shutil.copyfile(metrics, args.dest / f"{name}_metrics.json")
        print(f"wrote {args.dest / f'{name}_metrics.json'}")


if __name__ == "__main__":
    main_()
