import json
import math
import random
from collections import Counter

import numpy as np
import pytest

from treekd.dataset import MoleculeRecord, get_property
from treekd.errors import EmptyForest, GrammarError, LibraryMismatch
from treekd.forest import DecisionTree, Node, RandomForest, TreeParams, fit_forest
from treekd.inference import parse_response
from treekd.molgraph import parse_smiles
from treekd.pattern import FeatureVector, FunctionalGroupLibrary, extract_features
from treekd.prompting import (
    Prompt,
    build_prompt,
    build_training_set,
    draw_rule_index,
    export_jsonl,
    parse_fg_list,
    read_jsonl,
    render_fg_list,
    render_target,
)
from treekd.verbalizer import RuleText, verbalize_rule

AMES = get_property("Ames Mutagenicity")
CACO2 = get_property("Caco-2 Permeability")
LIB = FunctionalGroupLibrary.from_pairs([("carbonyl", "C=O"), ("hydroxyl", "[OX2H1]"), ("amine", "[NX3;H2]")])
ACETIC = MoleculeRecord("CC(=O)O", -5.1, 0)


def features(smiles):
    return extract_features(parse_smiles(smiles), LIB)


def leaf_rule(value=-5.0, task="regression"):
    return verbalize_rule(DecisionTree((Node(value=value),), task, len(LIB), LIB.version_tag), LIB)


def test_section_order():
    p = build_prompt(ACETIC, features("CC(=O)O"), leaf_rule(), CACO2, LIB)
    text = p.text
    marks = ["SMILES: CC(=O)O", "Functional groups found: carbonyl (x1), hydroxyl (x1)", "Predictive rule:\npredict -5", "Property: ", "Question: "]
    positions = [text.index(m) for m in marks]
    assert positions == sorted(positions)
    assert text.endswith("Answer with a number.")
    assert p.sections.property_description == CACO2.description
    assert CACO2.description.startswith("The human colon epithelial cancer cell line")


def test_no_groups_renders_none():
    p = build_prompt(MoleculeRecord("C", 0, 1), features("C"), leaf_rule(0.2, "classification"), AMES, LIB)
    assert "\nFunctional groups found: none\n" in p.text
    assert p.text.endswith("Answer positive or negative.")


def test_library_mismatch():
    foreign = FeatureVector({}, len(LIB), "fg-other")
    with pytest.raises(LibraryMismatch):
        build_prompt(ACETIC, foreign, leaf_rule(), CACO2, LIB)
    with pytest.raises(LibraryMismatch):
        build_prompt(ACETIC, features("CC(=O)O"), RuleText(("predict 1",), "", "fg-other"), CACO2, LIB)


def test_prompt_is_pure_and_parses_back():
    rule = verbalize_rule(
        DecisionTree((Node(1, 0.5, 1, 2), Node(value=0.1), Node(value=0.9)), "classification", 3, LIB.version_tag), LIB
    )
    a = build_prompt(ACETIC, features("CC(=O)O"), rule, AMES, LIB)
    b = build_prompt(ACETIC, features("CC(=O)O"), rule, AMES, LIB)
    assert a.text == b.text
    back = Prompt.from_text(a.text)
    assert back.sections == a.sections
    assert back.sections.rule == rule.text
    assert not a.over_budget and a.approx_tokens > 0


@pytest.mark.parametrize("text", ["", "SMILES: C", "Functional groups found: none\nSMILES: C\nPredictive rule:\npredict 1\nProperty: x\nQuestion: y"])
def test_from_text_rejects_malformed(text):
    with pytest.raises(GrammarError):
        Prompt.from_text(text)


def test_fg_list_round_trip():
    pairs = [("carboxylic acid", 2), ("aryl (hetero) halide", 1), ("ester", 10)]
    assert parse_fg_list(render_fg_list(pairs)) == pairs
    assert render_fg_list([]) == "none" and parse_fg_list("none") == []
    with pytest.raises(GrammarError):
        parse_fg_list("carbonyl x1")


def test_targets():
    assert render_target(1.0, AMES) == "positive"
    assert render_target(0.0, AMES) == "negative"
    assert render_target(-4.56789, CACO2) == "-4.568"
    assert render_target(1234567.0, CACO2) == "1.235e+06"


def small_forest(n_trees, seed=0, task="classification"):
    rng = np.random.default_rng(seed)
    X = rng.poisson(1.0, size=(30, len(LIB))).astype(float)
    y = (X[:, 0] > 0).astype(float) if task == "classification" else X @ [0.5, -1.0, 0.25]
    return fit_forest(X, y, n_trees, TreeParams(task=task), seed=seed, library_tag=LIB.version_tag)


def dataset(n, task="classification"):
    rng = random.Random(n)
    smiles = ["CC(=O)O", "CCO", "NCC", "C", "OCC(=O)N", "CC(N)C=O"]
    out = []
    for i in range(n):
        s = rng.choice(smiles)
        y = float(rng.randint(0, 1)) if task == "classification" else round(rng.uniform(-7, -4), 3)
        out.append(MoleculeRecord(s, y, i))
    return out, [features(r.smiles) for r in out]


def test_single_tree_always_index_zero():
    recs, feats = dataset(25)
    examples = build_training_set(recs, feats, small_forest(1), AMES, LIB, seed=7)
    assert {e.rule_index for e in examples} == {0}


def test_rule_draws_are_deterministic_and_per_record():
    recs, feats = dataset(40)
    forest = small_forest(5)
    a = build_training_set(recs, feats, forest, AMES, LIB, seed=3)
    b = build_training_set(recs, feats, forest, AMES, LIB, seed=3)
    assert [e.to_json() for e in a] == [e.to_json() for e in b]
    # reversing the batch leaves each record's draw unchanged
    c = build_training_set(recs[::-1], feats[::-1], forest, AMES, LIB, seed=3)
    assert [e.rule_index for e in c[::-1]] == [e.rule_index for e in a]
    assert [e.rule_index for e in build_training_set(recs, feats, forest, AMES, LIB, seed=4)] != [e.rule_index for e in a]
    for e, r in zip(a, recs):
        assert e.rule_index == draw_rule_index(3, r.id, 5)
        assert e.prompt.sections.rule == verbalize_rule(forest.trees[e.rule_index], LIB).text


def test_rule_index_frequencies_are_uniform():
    n, k = 10_000, 50
    counts = Counter(draw_rule_index(0, i, k) for i in range(n))
    mean = n / k
    sigma = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert set(counts) == set(range(k))
    assert all(abs(c - mean) <= 3 * sigma for c in counts.values())


def test_empty_forest():
    recs, feats = dataset(3)
    with pytest.raises(EmptyForest):
        build_training_set(recs, feats, RandomForest((), 0, TreeParams()), AMES, LIB)


@pytest.mark.parametrize("spec, task", [(AMES, "classification"), (CACO2, "regression")])
def test_jsonl_round_trip(tmp_path, spec, task):
    recs, feats = dataset(12, task)
    examples = build_training_set(recs, feats, small_forest(4, task=task), spec, LIB)
    path = tmp_path / "train.jsonl"
    assert export_jsonl(examples, path) == 12
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.count(b"\n") == 12
    lines = raw.decode("utf-8").splitlines()
    assert all(set(json.loads(line)) == {"prompt", "completion", "property", "rule_index"} for line in lines)
    back = read_jsonl(path)
    assert back == examples
    assert any("\t" in e.prompt.sections.rule for e in back)
    for e, r in zip(back, recs):
        if task == "classification":
            assert parse_response(e.target, task) == r.label
        else:
            assert abs(parse_response(e.target, task) - r.label) <= 5e-4 * abs(r.label)


def test_empty_export(tmp_path):
    assert export_jsonl([], tmp_path / "e.jsonl") == 0
    assert (tmp_path / "e.jsonl").read_bytes() == b""
