"""Run configuration: one JSON document per experiment.

String values may reference environment variables as ``${NAME}``; relative
paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .dataset import PropertySpec, get_property
from .errors import ConfigError
from .forest import TreeParams

_VAR = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0
    shuffle_ties: bool = False


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    seed: int = 0
    bootstrap: bool = True
    max_depth: int = 6
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str | int = "auto"

    def tree_params(self, task: str) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_split, self.min_samples_leaf, self.max_features, task)


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "stub"
    endpoint: str | None = None
    model: str | None = None
    token_env: str = "TREEKD_API_TOKEN"
    concurrency: int = 8
    timeout: float = 60.0
    retries: int = 3


@dataclass(frozen=True)
class EnsembleConfig:
    mode: str = "rule"
    n: int | None = None  # None: one member per forest tree
    temperature: float = 0.0
    max_new_tokens: int = 32
    sample_seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    correct_threshold: float = 0.5
    cliff_threshold: float = 0.8


@dataclass(frozen=True)
class RunConfig:
    dataset_path: Path
    property_name: str
    library_path: Path | None = None  # None: bundled library
    output_dir: Path = Path("out")
    prompt_seed: int = 0
    split: SplitConfig = field(default_factory=SplitConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def spec(self) -> PropertySpec:
        return get_property(self.property_name)

    @property
    def ensemble_n(self) -> int:
        return self.forest.n_trees if self.ensemble.n is None else self.ensemble.n

    def with_seed(self, seed: int) -> "RunConfig":
        """Override every seed at once (the ``--seed`` flag)."""
        return replace(
            self,
            prompt_seed=seed,
            split=replace(self.split, seed=seed),
            forest=replace(self.forest, seed=seed),
            ensemble=replace(self.ensemble, sample_seed=seed),
        )

    def with_output_dir(self, path: str | Path) -> "RunConfig":
        return replace(self, output_dir=Path(path))

    def to_json(self) -> dict:
        d = asdict(self)
        for k in ("dataset_path", "library_path", "output_dir"):
            d[k] = None if d[k] is None else str(d[k])
        d["split"]["ratios"] = list(d["split"]["ratios"])
        return d


def interpolate(value: Any) -> Any:
    """Replace ``${NAME}`` in every string with the environment value."""
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            name = m.group(1)
            if name not in os.environ:
                raise ConfigError(f"environment variable {name} is not set")
            return os.environ[name]
        return _VAR.sub(sub, value)
    if isinstance(value, list):
        return [interpolate(v) for v in value]
    if isinstance(value, dict):
        return {k: interpolate(v) for k, v in value.items()}
    return value


def _section(cls, raw: Any, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _resolve(base: Path, p: str | None) -> Path | None:
    if p is None:
        return None
    path = Path(p).expanduser()
    return path if path.is_absolute() else base / path


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = interpolate(raw)
    base = Path(base_dir)
    top = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
    for key in ("dataset_path", "property_name"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    split = _section(SplitConfig, raw.get("split"), "split")
    split = replace(split, ratios=tuple(split.ratios))
    cfg = RunConfig(
        dataset_path=_resolve(base, raw["dataset_path"]),
        property_name=raw["property_name"],
        library_path=_resolve(base, raw.get("library_path")),
        output_dir=_resolve(base, raw.get("output_dir", "out")),
        prompt_seed=int(raw.get("prompt_seed", 0)),
        split=split,
        forest=_section(ForestConfig, raw.get("forest"), "forest"),
        predictor=_section(PredictorConfig, raw.get("predictor"), "predictor"),
        ensemble=_section(EnsembleConfig, raw.get("ensemble"), "ensemble"),
        eval=_section(EvalConfig, raw.get("eval"), "eval"),
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Raise ConfigError for anything a command would trip over later."""
    try:
        spec = cfg.spec
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    if not cfg.dataset_path.is_file():
        raise ConfigError(f"dataset file not found: {cfg.dataset_path}")
    if cfg.library_path is not None and not cfg.library_path.is_file():
        raise ConfigError(f"functional-group library not found: {cfg.library_path}")
    if cfg.forest.n_trees < 1:
        raise ConfigError("forest.n_trees must be >= 1")
    try:
        cfg.forest.tree_params(spec.task)
    except ValueError as exc:
        raise ConfigError(f"forest: {exc}") from None
    ens = cfg.ensemble
    if ens.mode not in ("rule", "self"):
        raise ConfigError(f"ensemble.mode must be 'rule' or 'self', got {ens.mode!r}")
    if cfg.ensemble_n < 1:
        raise ConfigError("ensemble.n must be >= 1")
    if ens.mode == "rule" and cfg.ensemble_n > cfg.forest.n_trees:
        raise ConfigError(f"ensemble.n = {cfg.ensemble_n} exceeds forest.n_trees = {cfg.forest.n_trees}")
    if ens.temperature < 0:
        raise ConfigError("ensemble.temperature must be >= 0")
    if ens.mode == "self" and ens.temperature <= 0:
        raise ConfigError("self-consistency needs ensemble.temperature > 0")
    pred = cfg.predictor
    if pred.kind not in ("stub", "http"):
        raise ConfigError(f"predictor.kind must be 'stub' or 'http', got {pred.kind!r}")
    if pred.kind == "http" and not (pred.endpoint and pred.model):
        raise ConfigError("http predictor needs predictor.endpoint and predictor.model")
    if pred.kind == "stub" and ens.mode == "self":
        raise ConfigError("the stub predictor is deterministic; self-consistency needs an http predictor")
    if pred.concurrency < 1 or pred.retries < 1:
        raise ConfigError("predictor.concurrency and predictor.retries must be >= 1")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw, path.parent)
