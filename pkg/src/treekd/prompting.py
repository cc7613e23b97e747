"""Rule-augmented prompts and the fine-tuning JSONL.

A prompt lists, in this order: the SMILES string, the functional groups
found, one verbalized predictive rule, the property description, and the
question. The layout is line-oriented so it can be parsed back exactly
(the stub predictor relies on that)::

    SMILES: CC(=O)O
    Functional groups found: carbonyl (x1), hydroxyl (x1)
    Predictive rule:
    if count of "hydroxyl" <= 0.5:
    \tpredict negative (p=0.1)
    else:
    \tpredict positive (p=0.9)
    Property: <description>
    Question: ... Answer positive or negative.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .dataset import MoleculeRecord, PropertySpec
from .errors import EmptyForest, GrammarError, LibraryMismatch
from .forest import RandomForest, format_sig
from .pattern import FeatureVector, FunctionalGroupLibrary, found_fg_names
from .rng import Xoshiro256
from .verbalizer import RuleText, verbalize_rule

TOKEN_BUDGET = 1024

SMILES_HEADER = "SMILES: "
FG_HEADER = "Functional groups found: "
RULE_HEADER = "Predictive rule:"
PROPERTY_HEADER = "Property: "
QUESTION_HEADER = "Question: "
NO_FGS = "none"

_FG_ITEM = re.compile(r"(.+?) \(x(\d+)\)(?:, |$)")


class PromptSections(NamedTuple):
    smiles: str
    fg_list: str
    rule: str
    property_description: str
    question: str


@dataclass(frozen=True)
class Prompt:
    sections: PromptSections
    token_budget_hint: int = TOKEN_BUDGET

    @cached_property
    def text(self) -> str:
        s = self.sections
        return "\n".join(
            [
                SMILES_HEADER + s.smiles,
                FG_HEADER + s.fg_list,
                RULE_HEADER,
                s.rule,
                PROPERTY_HEADER + s.property_description,
                QUESTION_HEADER + s.question,
            ]
        )

    @property
    def approx_tokens(self) -> int:
        """Crude word/punctuation count; a budget hint, not a tokenizer."""
        return len(re.findall(r"\w+|[^\w\s]", self.text))

    @property
    def over_budget(self) -> bool:
        return self.approx_tokens > self.token_budget_hint

    @classmethod
    def from_text(cls, text: str) -> "Prompt":
        """Split an assembled prompt back into its sections.

        Raises:
            GrammarError: a section header is missing or out of order.
        """
        lines = text.split("\n")
        if len(lines) < 5:
            raise GrammarError("prompt is too short to hold all sections")
        if not lines[0].startswith(SMILES_HEADER):
            raise GrammarError("prompt does not start with the SMILES section")
        if not lines[1].startswith(FG_HEADER):
            raise GrammarError("missing functional-group section")
        if lines[2] != RULE_HEADER:
            raise GrammarError("missing predictive-rule section")
        if not lines[-1].startswith(QUESTION_HEADER):
            raise GrammarError("missing question line")
        if not lines[-2].startswith(PROPERTY_HEADER):
            raise GrammarError("missing property section")
        rule = "\n".join(lines[3:-2])
        if not rule:
            raise GrammarError("empty predictive-rule section")
        return cls(
            PromptSections(
                smiles=lines[0][len(SMILES_HEADER):],
                fg_list=lines[1][len(FG_HEADER):],
                rule=rule,
                property_description=lines[-2][len(PROPERTY_HEADER):],
                question=lines[-1][len(QUESTION_HEADER):],
            )
        )


def render_fg_list(pairs: Sequence[tuple[str, int]]) -> str:
    if not pairs:
        return NO_FGS
    return ", ".join(f"{name} (x{count})" for name, count in pairs)


def parse_fg_list(text: str) -> list[tuple[str, int]]:
    if text == NO_FGS:
        return []
    out = []
    pos = 0
    while pos < len(text):
        m = _FG_ITEM.match(text, pos)
        if m is None:
            raise GrammarError(f"cannot parse functional-group list at {text[pos:]!r}")
        out.append((m.group(1), int(m.group(2))))
        pos = m.end()
    return out


def question_for(spec: PropertySpec) -> str:
    if spec.is_classification:
        return f"Based on the information above, predict the {spec.name} of the molecule. Answer positive or negative."
    return f"Based on the information above, predict the {spec.name} of the molecule. Answer with a number."


def build_prompt(
    record: MoleculeRecord,
    features: FeatureVector,
    rule: RuleText,
    spec: PropertySpec,
    library: FunctionalGroupLibrary,
) -> Prompt:
    for tag, what in ((features.library_tag, "features"), (rule.library_tag, "rule")):
        if tag and tag != library.version_tag:
            raise LibraryMismatch(f"{what} built with library {tag!r}, not {library.version_tag!r}")
    fgs = render_fg_list(found_fg_names(features, library))
    return Prompt(PromptSections(record.smiles, fgs, rule.text, spec.description, question_for(spec)))


def render_target(label: float, spec: PropertySpec) -> str:
    if spec.is_classification:
        return "positive" if label >= 0.5 else "negative"
    return format_sig(label)


@dataclass(frozen=True)
class TrainingExample:
    prompt: Prompt
    target: str
    rule_index: int
    property: str

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt.text,
            "completion": self.target,
            "property": self.property,
            "rule_index": self.rule_index,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TrainingExample":
        return cls(Prompt.from_text(d["prompt"]), d["completion"], int(d["rule_index"]), d["property"])


def verbalize_forest(forest: RandomForest, library: FunctionalGroupLibrary) -> list[RuleText]:
    return [verbalize_rule(t, library) for t in forest.trees]


def draw_rule_index(seed: int, record_id: int, n_trees: int) -> int:
    return Xoshiro256.stream(seed, record_id).randbelow(n_trees)


def build_training_set(
    records: Sequence[MoleculeRecord],
    features: Sequence[FeatureVector],
    forest: RandomForest,
    spec: PropertySpec,
    library: FunctionalGroupLibrary,
    seed: int = 0,
    rules: Sequence[RuleText] | None = None,
) -> list[TrainingExample]:
    """One example per record, each carrying a uniformly drawn forest rule.

    The draw for a record depends only on ``(seed, record.id)``.
    """
    if len(forest.trees) == 0:
        raise EmptyForest("forest has no trees")
    if len(records) != len(features):
        raise ValueError(f"{len(records)} records but {len(features)} feature vectors")
    if rules is None:
        rules = verbalize_forest(forest, library)
    out = []
    for rec, vec in zip(records, features):
        k = draw_rule_index(seed, rec.id, len(rules))
        prompt = build_prompt(rec, vec, rules[k], spec, library)
        out.append(TrainingExample(prompt, render_target(rec.label, spec), k, spec.name))
    return out


def export_jsonl(examples: Iterable[TrainingExample], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[TrainingExample]:
    with open(path, encoding="utf-8") as fh:
        return [TrainingExample.from_json(json.loads(line)) for line in fh if line.strip()]
