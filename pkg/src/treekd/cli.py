"""``treekd`` command-line front end.

Each stage reads the previous stage's artifacts from the output directory::

    extract        features.jsonl, extract_report.json
    train          split.json, tree.json, forest.json
    build-prompts  train_prompts.jsonl
    predict        predictions.jsonl
    eval           metrics.json, analysis.json, report.txt (+ n_scaling.*)

Exit codes: 0 success, 2 input or configuration error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import RunConfig, load_config
from .dataset import (
    DatasetSplit,
    MoleculeRecord,
    get_property,
    load_dataset,
    scaffold_split,
    split_from_manifest,
)
from .descriptors import fingerprint
from .errors import AllMembersFailed, BackendError, ConfigError, DataError, TreeKDError
from .evaluation import (
    ScalingRow,
    cliff_accuracy,
    compute_metric,
    correct_flags,
    find_cliff_pairs,
    format_metric_table,
    format_scaling_table,
    order_scaling_rows,
    quadrants,
)
from .forest import (
    RandomForest,
    fit_forest,
    fit_specialist,
    load_model,
    predict_forest,
    predict_tree,
    save_model,
)
from .inference import (
    DecodingParams,
    HttpPredictor,
    Predictor,
    RetryPolicy,
    StubOracle,
    rule_consistency,
    self_consistency,
)
from .molgraph import parse_smiles
from .pattern import (
    FeatureVector,
    FunctionalGroupLibrary,
    default_library,
    extract_features,
    load_library,
    read_features_jsonl,
    write_features_jsonl,
)
from .prompting import build_prompt, build_training_set, draw_rule_index, export_jsonl, verbalize_forest

log = logging.getLogger("treekd")

EXIT_OK, EXIT_INPUT, EXIT_BACKEND = 0, 2, 3

FEATURES = "features.jsonl"
EXTRACT_REPORT = "extract_report.json"
SPLIT = "split.json"
TREE = "tree.json"
FOREST = "forest.json"
TRAIN_PROMPTS = "train_prompts.jsonl"
PREDICTIONS = "predictions.jsonl"
METRICS = "metrics.json"
ANALYSIS = "analysis.json"
REPORT = "report.txt"


def _dump(obj: object, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _notice(msg: str) -> None:
    print(f"note: {msg}", file=sys.stderr)


@dataclass
class Run:
    """Lazily loaded state shared by the subcommands."""

    cfg: RunConfig

    @property
    def out(self) -> Path:
        return self.cfg.output_dir

    def artifact(self, name: str) -> Path:
        path = self.out / name
        if not path.is_file():
            raise DataError(f"missing {path}; run the earlier pipeline stage first")
        return path

    @cached_property
    def spec(self):
        return self.cfg.spec

    @cached_property
    def library(self) -> FunctionalGroupLibrary:
        if self.cfg.library_path is None:
            return default_library()
        return load_library(self.cfg.library_path)

    @cached_property
    def dataset(self) -> tuple[list[MoleculeRecord], int]:
        return load_dataset(self.cfg.dataset_path, self.spec)

    @property
    def records(self) -> list[MoleculeRecord]:
        return self.dataset[0]

    @cached_property
    def features(self) -> dict[int, FeatureVector]:
        rows = read_features_jsonl(self.artifact(FEATURES), self.library)
        feats = {int(r["id"]): r["features"] for r in rows}
        if sorted(feats) != [r.id for r in self.records]:
            raise DataError(f"{FEATURES} does not match the dataset; rerun extract")
        return feats

    @cached_property
    def split(self) -> DatasetSplit:
        manifest = json.loads(self.artifact(SPLIT).read_text(encoding="utf-8"))
        return split_from_manifest(self.records, manifest)

    def load_forest(self, name: str = FOREST):
        return load_model(self.artifact(name), len(self.library), self.library.version_tag)

    def xy(self, records: Sequence[MoleculeRecord]) -> tuple[list[FeatureVector], list[float]]:
        return [self.features[r.id] for r in records], [r.label for r in records]

    def predictor(self) -> Predictor:
        p = self.cfg.predictor
        if p.kind == "stub":
            return StubOracle(self.library)
        return HttpPredictor.from_env(p.endpoint, p.model, p.token_env, timeout=p.timeout)


# -- subcommands -----------------------------------------------------------------
def cmd_extract(run: Run, args: argparse.Namespace) -> int:
    records, skipped = run.dataset
    lib = run.library
    vecs = [extract_features(parse_smiles(r.smiles), lib) for r in records]
    run.out.mkdir(parents=True, exist_ok=True)
    write_features_jsonl(((r.smiles, v) for r, v in zip(records, vecs)), run.out / FEATURES, (r.id for r in records))
    report = {
        "dataset": run.cfg.dataset_path.name,
        "property": run.spec.name,
        "library_tag": lib.version_tag,
        "n_features": len(lib),
        "n_records": len(records),
        "n_skipped": skipped,
        "n_without_groups": sum(1 for v in vecs if not v.counts),
    }
    _dump(report, run.out / EXTRACT_REPORT)
    print(f"extracted {len(records)} records ({skipped} skipped) -> {run.out / FEATURES}")
    return EXIT_OK


def cmd_train(run: Run, args: argparse.Namespace) -> int:
    cfg = run.cfg
    split = scaffold_split(run.records, cfg.split.ratios, cfg.split.seed, cfg.split.shuffle_ties)
    if not split.train:
        raise DataError("scaffold split left the training set empty")
    run.out.mkdir(parents=True, exist_ok=True)
    split.save_manifest(run.out / SPLIT)
    X, y = run.xy(split.train)
    params = cfg.forest.tree_params(run.spec.task)
    tag = run.library.version_tag
    tree = fit_specialist(X, y, params, library_tag=tag)
    forest = fit_forest(X, y, cfg.forest.n_trees, params, cfg.forest.seed, cfg.forest.bootstrap, tag)
    save_model(tree, run.out / TREE)
    save_model(forest, run.out / FOREST)
    print(
        f"split {len(split.train)}/{len(split.valid)}/{len(split.test)}; "
        f"tree depth {tree.depth} ({tree.n_leaves} leaves); forest of {len(forest)} trees"
    )
    return EXIT_OK


def cmd_build_prompts(run: Run, args: argparse.Namespace) -> int:
    forest = run.load_forest()
    X, _ = run.xy(run.split.train)
    examples = build_training_set(run.split.train, X, forest, run.spec, run.library, run.cfg.prompt_seed)
    n = export_jsonl(examples, run.out / TRAIN_PROMPTS)
    if args.preview and examples:
        print(examples[0].prompt.text)
        print(f"--- completion: {examples[0].target}")
    over = sum(ex.prompt.over_budget for ex in examples)
    if over:
        _notice(f"{over} prompt(s) exceed the token budget hint")
    print(f"wrote {n} training examples -> {run.out / TRAIN_PROMPTS}", file=sys.stderr if args.preview else sys.stdout)
    return EXIT_OK


def cmd_predict(run: Run, args: argparse.Namespace) -> int:
    cfg = run.cfg
    forest = run.load_forest()
    ens = cfg.ensemble
    if ens.mode == "rule" and cfg.ensemble_n > len(forest):
        raise ConfigError(f"ensemble.n = {cfg.ensemble_n} exceeds the trained forest size {len(forest)}")
    predictor = run.predictor()
    retry = RetryPolicy(attempts=cfg.predictor.retries)
    conc = cfg.predictor.concurrency
    rules = verbalize_forest(forest, run.library)
    params = DecodingParams(ens.temperature, ens.max_new_tokens, ens.sample_seed)
    lines = []
    for rec in run.split.test:
        vec = run.features[rec.id]
        if ens.mode == "rule":
            pred = rule_consistency(
                rec, vec, forest, run.spec, predictor, run.library,
                params, cfg.ensemble_n, rules, conc, retry,
            )
        else:
            k = draw_rule_index(cfg.prompt_seed, rec.id, len(rules))
            prompt = build_prompt(rec, vec, rules[k], run.spec, run.library)
            pred = self_consistency(prompt, predictor, run.spec.task, params, cfg.ensemble_n, conc, retry)
        if pred.failures:
            _notice(f"record {rec.id}: {pred.failures} of {pred.n} answers unparseable")
        lines.append(json.dumps(pred.to_json(rec.id), ensure_ascii=False))
    run.out.mkdir(parents=True, exist_ok=True)
    with open(run.out / PREDICTIONS, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(line + "\n" for line in lines))
    print(f"predicted {len(lines)} test molecules ({ens.mode}, N={cfg.ensemble_n}) -> {run.out / PREDICTIONS}")
    return EXIT_OK


def read_predictions(path: Path) -> dict[int, float]:
    out: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out[int(obj["id"])] = float(obj["value"])
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad prediction line ({exc})") from None
    return out


def n_scaling_rows(
    items: Sequence[tuple[str, Path]],
    ns: Sequence[int],
    run: Run,
) -> list[ScalingRow]:
    """Fit one forest of ``max(ns)`` trees per dataset; score its prefixes."""
    cfg = run.cfg
    lib = run.library
    rows = []
    for prop, path in items:
        spec = get_property(prop)
        records, _ = load_dataset(path, spec)
        split = scaffold_split(records, cfg.split.ratios, cfg.split.seed, cfg.split.shuffle_ties)
        feats = {r.id: extract_features(parse_smiles(r.smiles), lib) for r in records}
        X = [feats[r.id] for r in split.train]
        y = [r.label for r in split.train]
        forest = fit_forest(
            X, y, max(ns), cfg.forest.tree_params(spec.task), cfg.forest.seed, cfg.forest.bootstrap, lib.version_tag
        )
        truth = [r.label for r in split.test]
        values = {}
        for n in ns:
            sub = RandomForest(forest.trees[:n], forest.seed, forest.params, forest.bootstrap)
            preds = [predict_forest(sub, feats[r.id]) for r in split.test]
            values[n] = compute_metric(spec, preds, truth).value
        direction = "higher" if spec.higher_is_better else "lower"
        rows.append(ScalingRow(spec.name, spec.category, spec.metric, direction, values))
    return rows


def _parse_ns(text: str) -> list[int]:
    try:
        ns = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--n-scaling expects comma-separated integers, got {text!r}") from None
    if not ns or min(ns) < 1:
        raise ConfigError("--n-scaling sizes must be positive")
    return ns


def cmd_eval(run: Run, args: argparse.Namespace) -> int:
    cfg = run.cfg
    spec = run.spec
    test = run.split.test
    preds = read_predictions(run.artifact(PREDICTIONS))
    ids = [r.id for r in test]
    if sorted(preds) != sorted(ids):
        missing = sorted(set(ids) - set(preds))[:5]
        extra = sorted(set(preds) - set(ids))[:5]
        raise DataError(f"prediction ids do not match the test split (missing {missing}, unexpected {extra})")
    truth = [r.label for r in test]
    model_scores = [preds[i] for i in ids]
    tree = run.load_forest(TREE)
    forest = run.load_forest(FOREST)
    tree_scores = [predict_tree(tree, run.features[i]) for i in ids]
    forest_scores = [predict_forest(forest, run.features[i]) for i in ids]
    label = f"treekd-{cfg.ensemble.mode}-N{cfg.ensemble_n}"
    entries = [
        compute_metric(spec, scores, truth).to_json(spec.name, model=name)
        for name, scores in ((label, model_scores), ("decision-tree", tree_scores), ("random-forest", forest_scores))
    ]
    _dump(entries, run.out / METRICS)

    analysis: dict[str, object] = {"property": spec.name, "n_test": len(test)}
    report = [format_metric_table(entries)]
    if spec.is_classification:
        thr = cfg.eval.correct_threshold
        tree_ok = correct_flags(tree_scores, truth, thr)
        model_ok = correct_flags(model_scores, truth, thr)
        quad = quadrants(tree_ok, model_ok)
        pairs = find_cliff_pairs(test, [fingerprint(parse_smiles(r.smiles)) for r in test], cfg.eval.cliff_threshold)
        analysis["quadrants"] = quad.to_json()
        analysis["cliffs"] = {
            "threshold": cfg.eval.cliff_threshold,
            "n_pairs": len(pairs),
            "model_both_correct": cliff_accuracy(pairs, dict(zip(ids, model_ok))),
            "tree_both_correct": cliff_accuracy(pairs, dict(zip(ids, tree_ok))),
            "pairs": [p.to_json() for p in pairs],
        }
        report.append(
            "\nRule utilization (tree vs model correct): "
            + ", ".join(f"{k}={v}" for k, v in quad.to_json().items())
        )
        report.append(
            f"Property cliffs (Tanimoto > {cfg.eval.cliff_threshold}): {len(pairs)} pairs; "
            f"both correct: model {analysis['cliffs']['model_both_correct']}, "
            f"tree {analysis['cliffs']['tree_both_correct']}\n"
        )
    else:
        analysis["quadrants"] = None
        analysis["cliffs"] = None
        _notice("regression property: rule-utilization and cliff analyses skipped")
        report.append("\nRule-utilization and cliff analyses apply to classification properties only.\n")
    _dump(analysis, run.out / ANALYSIS)

    if args.n_scaling:
        ns = _parse_ns(args.n_scaling)
        items = [(spec.name, cfg.dataset_path)]
        for item in args.scaling_data or []:
            prop, sep, path = item.partition("=")
            if not sep:
                raise ConfigError(f"--scaling-data expects PROPERTY=PATH, got {item!r}")
            p = Path(path)
            if not p.is_file():
                raise DataError(f"dataset not found: {p}")
            items.append((get_property(prop).name, p))
        rows = order_scaling_rows(n_scaling_rows(items, ns, run))
        table = format_scaling_table(rows, ns)
        (run.out / "n_scaling.txt").write_text(table, encoding="utf-8")
        _dump(
            [{"property": r.property, "category": r.category, "metric": r.metric,
              "values": {str(n): r.values[n] for n in ns}} for r in rows],
            run.out / "n_scaling.json",
        )
        report.append("Random-forest size comparison\n" + table)
    text = "\n".join(report)
    (run.out / REPORT).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_preview_prompt(run: Run, args: argparse.Namespace) -> int:
    forest = run.load_forest()
    by_id = {r.id: r for r in run.records}
    if args.id not in by_id:
        raise DataError(f"no record with id {args.id}")
    rec = by_id[args.id]
    rules = verbalize_forest(forest, run.library)
    k = draw_rule_index(run.cfg.prompt_seed, rec.id, len(rules)) if args.tree is None else args.tree
    if not 0 <= k < len(rules):
        raise DataError(f"tree index {k} outside forest of {len(rules)}")
    print(build_prompt(rec, run.features[rec.id], rules[k], run.spec, run.library).text)
    return EXIT_OK


def cmd_run(run: Run, args: argparse.Namespace) -> int:
    for step in (cmd_extract, cmd_train, cmd_build_prompts, cmd_predict, cmd_eval):
        code = step(run, args)
        if code:
            return code
    return EXIT_OK


def bundled_dataset(name: str) -> Path:
    return Path(str(resources.files("treekd.data").joinpath(name)))


DEMOS = {
    "ames": ("mini_ames.csv", "Ames Mutagenicity"),
    "caco2": ("mini_caco2.csv", "Caco-2 Permeability"),
}


def cmd_demo_config(args: argparse.Namespace) -> int:
    """Write a config for a bundled mini dataset (no --config needed)."""
    fname, prop = DEMOS[args.dataset]
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    cfg = {
        "dataset_path": str(bundled_dataset(fname)),
        "property_name": prop,
        "output_dir": "out",
        "prompt_seed": args.seed or 0,
        "split": {"ratios": [0.7, 0.1, 0.2], "seed": args.seed or 0},
        "forest": {"n_trees": 50, "seed": args.seed or 0},
        "predictor": {"kind": "stub"},
        "ensemble": {"mode": "rule"},
    }
    path = out / "config.json"
    _dump(cfg, path)
    print(path)
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "build-prompts": cmd_build_prompts,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "preview-prompt": cmd_preview_prompt,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    def global_flags(default):
        # subcommands get SUPPRESS defaults so they don't clobber flags given before the subcommand
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--config", default=default, help="run configuration (JSON)")
        g.add_argument("--seed", type=int, default=default, help="override every seed in the config")
        g.add_argument("--out", default=default, help="override the output directory")
        g.add_argument("-v", "--verbose", action="store_true", default=default or False)
        return g

    common = global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="treekd", description=__doc__.split("\n")[0], parents=[global_flags(None)])
    p.add_argument("--version", action="version", version=f"treekd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", parents=[common], help="count functional groups per molecule")
    sub.add_parser("train", parents=[common], help="scaffold split, specialist tree and forest")
    bp = sub.add_parser("build-prompts", parents=[common], help="rule-augmented fine-tuning JSONL")
    bp.add_argument("--preview", action="store_true", help="print the first prompt verbatim")
    sub.add_parser("predict", parents=[common], help="ensembled predictions on the test split")
    for name in ("eval", "run"):
        ep = sub.add_parser(name, parents=[common], help="metrics and analyses" if name == "eval" else "all stages in order")
        ep.add_argument("--n-scaling", metavar="N1,N2", help="also compare forest sizes, e.g. 50,100")
        ep.add_argument("--scaling-data", action="append", metavar="PROPERTY=CSV",
                        help="extra dataset for the forest-size table (repeatable)")
        if name == "run":
            ep.add_argument("--preview", action="store_true")
    pp = sub.add_parser("preview-prompt", parents=[common], help="print one assembled prompt")
    pp.add_argument("--id", type=int, required=True, help="record id")
    pp.add_argument("--tree", type=int, help="forest tree whose rule to use (default: seeded draw)")
    dp = sub.add_parser("demo-config", parents=[common], help="write a config for a bundled mini dataset")
    dp.add_argument("--dataset", choices=sorted(DEMOS), default="ames")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "demo-config":
            return cmd_demo_config(args)
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out:
            cfg = cfg.with_output_dir(args.out)
        return COMMANDS[args.command](Run(cfg), args)
    except (BackendError, AllMembersFailed) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (TreeKDError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
