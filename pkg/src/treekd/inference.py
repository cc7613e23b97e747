"""Predictors, response parsing, and the two test-time ensembles.

Rule-consistency builds one prompt per forest tree (each carrying that tree's
rule) and averages the parsed answers. Self-consistency samples the same
prompt ``N`` times at a positive temperature and averages those.
"""

from __future__ import annotations

import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, runtime_checkable

import httpx

from .dataset import MoleculeRecord, PropertySpec
from .errors import (
    AllMembersFailed,
    BackendError,
    BackendUnavailable,
    ConfigError,
    Timeout,
    Unparseable,
    UnknownFGName,
)
from .forest import RandomForest
from .pattern import FeatureVector, FunctionalGroupLibrary
from .prompting import Prompt, build_prompt, parse_fg_list, verbalize_forest
from .verbalizer import RuleText, find_leaf, parse_rule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.0
    max_new_tokens: int = 32
    sample_seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@runtime_checkable
class Predictor(Protocol):
    """Anything that turns a prompt into text.

    ``concurrent_safe`` declares whether ``complete`` may be called from
    several threads at once.
    """

    concurrent_safe: bool

    def complete(self, prompt: str, params: DecodingParams) -> str: ...


class StubOracle:
    """A predictor that executes the rule embedded in the prompt exactly.

    It reads the functional-group section back into counts, runs the rule,
    and answers with the leaf's own text (``positive (p=0.8)`` or a number).
    """

    concurrent_safe = True

    def __init__(self, library: FunctionalGroupLibrary) -> None:
        self.library = library

    def complete(self, prompt: str, params: DecodingParams) -> str:
        sections = Prompt.from_text(prompt).sections
        counts: dict[int, int] = {}
        for name, count in parse_fg_list(sections.fg_list):
            try:
                counts[self.library.index_of[name]] = count
            except KeyError:
                raise UnknownFGName(f"prompt names unknown functional group {name!r}") from None
        vec = FeatureVector(counts, len(self.library), self.library.version_tag)
        return find_leaf(parse_rule(sections.rule), vec, self.library).text


class HttpPredictor:
    """Client for a chat-completions style HTTP endpoint."""

    concurrent_safe = True

    def __init__(
        self,
        endpoint: str,
        model: str,
        token: str | None = None,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.token = token
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, endpoint: str, model: str, token_env: str = "TREEKD_API_TOKEN", **kw) -> "HttpPredictor":
        return cls(endpoint, model, os.environ.get(token_env), **kw)

    def complete(self, prompt: str, params: DecodingParams) -> str:
        body: dict[str, object] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        }
        if params.sample_seed is not None:
            body["seed"] = params.sample_seed
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = self._client.post(self.endpoint, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise Timeout(f"{self.endpoint}: {exc}") from exc
        except httpx.TransportError as exc:
            raise BackendUnavailable(f"{self.endpoint}: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise BackendUnavailable(f"{self.endpoint}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"{self.endpoint}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.endpoint}: malformed response body") from exc

    def close(self) -> None:
        self._client.close()


# -- response parsing ----------------------------------------------------------
_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_PROB = re.compile(r"\bp\s*=\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)")
_LABEL = re.compile(r"\b(positive|negative|yes|no)\b", re.IGNORECASE)


def parse_response(text: str, task: str) -> float:
    """Turn model text into a number.

    Classification: a ``p=<frac>`` annotation wins; otherwise the first of
    positive/negative/yes/no (whole word, any case) maps to 1.0 or 0.0.
    Regression: the first decimal number, sign and exponent allowed.
    """
    if task == "classification":
        m = _PROB.search(text)
        if m:
            p = float(m.group(1))
            if 0.0 <= p <= 1.0:
                return p
        m = _LABEL.search(text)
        if m:
            return 1.0 if m.group(1).lower() in ("positive", "yes") else 0.0
        raise Unparseable(f"no class label in {text!r}")
    m = _NUMBER.search(text)
    if m is None:
        raise Unparseable(f"no number in {text!r}")
    value = float(m.group(0))
    if not math.isfinite(value):
        raise Unparseable(f"non-finite number in {text!r}")
    return value


# -- ensembles ------------------------------------------------------------------
@dataclass(frozen=True)
class Prediction:
    raw_text: str
    parsed: float
    member_index: int


@dataclass(frozen=True)
class EnsemblePrediction:
    value: float
    members: tuple[Prediction, ...]
    n: int
    failures: int

    def to_json(self, record_id: int) -> dict:
        return {
            "id": record_id,
            "value": self.value,
            "n": self.n,
            "failures": self.failures,
            "members": [
                {"member_index": m.member_index, "raw_text": m.raw_text, "parsed": m.parsed}
                for m in self.members
            ],
        }


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    sleep: Callable[[float], None] = field(default=time.sleep, compare=False)

    def call(self, fn: Callable[[], str]) -> str:
        for attempt in range(self.attempts):
            try:
                return fn()
            except (BackendUnavailable, Timeout) as exc:
                if attempt == self.attempts - 1:
                    raise
                delay = self.base_delay * (2 ** attempt)
                log.info("backend error (%s); retrying in %.2fs", exc, delay)
                self.sleep(delay)
        raise AssertionError("unreachable")


def _run_members(
    prompts: Sequence[tuple[str, DecodingParams]],
    predictor: Predictor,
    task: str,
    concurrency: int,
    retry: RetryPolicy,
) -> EnsemblePrediction:
    def one(item: tuple[str, DecodingParams]) -> str:
        text, params = item
        return retry.call(lambda: predictor.complete(text, params))

    if getattr(predictor, "concurrent_safe", False) and concurrency > 1 and len(prompts) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            raws = list(pool.map(one, prompts))
    else:
        raws = [one(p) for p in prompts]

    members = []
    failures = 0
    for k, raw in enumerate(raws):
        try:
            members.append(Prediction(raw, parse_response(raw, task), k))
        except Unparseable:
            failures += 1
    if not members:
        raise AllMembersFailed(f"all {len(raws)} ensemble members were unparseable")
    value = math.fsum(m.parsed for m in members) / len(members)
    return EnsemblePrediction(value, tuple(members), len(raws), failures)


def rule_consistency(
    record: MoleculeRecord,
    features: FeatureVector,
    forest: RandomForest,
    spec: PropertySpec,
    predictor: Predictor,
    library: FunctionalGroupLibrary,
    params: DecodingParams = DecodingParams(),
    n: int | None = None,
    rules: Sequence[RuleText] | None = None,
    concurrency: int = 8,
    retry: RetryPolicy = RetryPolicy(),
) -> EnsemblePrediction:
    """Average the answers to ``n`` prompts, prompt ``k`` carrying tree ``k``'s rule."""
    n = len(forest.trees) if n is None else n
    if not 1 <= n <= len(forest.trees):
        raise ValueError(f"ensemble size {n} must be within 1..{len(forest.trees)}")
    if rules is None:
        rules = verbalize_forest(forest, library)
    prompts = [(build_prompt(record, features, rules[k], spec, library).text, params) for k in range(n)]
    return _run_members(prompts, predictor, spec.task, concurrency, retry)


def self_consistency(
    prompt: str | Prompt,
    predictor: Predictor,
    task: str,
    params: DecodingParams,
    n: int,
    concurrency: int = 8,
    retry: RetryPolicy = RetryPolicy(),
) -> EnsemblePrediction:
    """Average ``n`` samples of one prompt; sample ``k`` uses seed ``seed + k``."""
    if params.temperature <= 0:
        raise ConfigError("self-consistency needs temperature > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    text = prompt.text if isinstance(prompt, Prompt) else prompt
    base = params.sample_seed or 0
    prompts = [
        (text, DecodingParams(params.temperature, params.max_new_tokens, base + k))
        for k in range(n)
    ]
    return _run_members(prompts, predictor, task, concurrency, retry)

