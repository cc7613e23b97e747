import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_count_vector, random_tree
from treekd.errors import FeatureOutOfRange, GrammarError, IndentError, UnknownFGName
from treekd.forest import DecisionTree, Node, TreeParams, fit_specialist, fit_tree, predict_tree
from treekd.pattern import FeatureVector, FunctionalGroupLibrary
from treekd.verbalizer import (
    RuleBranch,
    RuleLeaf,
    execute_rule,
    parse_rule,
    verbalize_rule,
)

LIB = FunctionalGroupLibrary.from_pairs([("hydroxyl", "[OX2H1]"), ("carbonyl", "C=O"), ("amine", "[NX3]")])
WIDE = FunctionalGroupLibrary.from_pairs([(f"group {i}", "C") for i in range(12)])


def vec(**counts):
    return FeatureVector({LIB.index_of[k]: v for k, v in counts.items()}, len(LIB))


def test_depth_one_classification_rule():
    t = fit_tree([[0, 0, 0], [0, 1, 0], [1, 0, 0], [2, 1, 0]], [0, 0, 1, 1], TreeParams(max_features="all"))
    rule = verbalize_rule(t, LIB)
    assert rule.lines == (
        'if count of "hydroxyl" <= 0.5:',
        "\tpredict negative (p=0)",
        "else:",
        "\tpredict positive (p=1)",
    )
    assert [len(line) - len(line.lstrip("\t")) for line in rule.lines] == [0, 1, 0, 1]
    assert rule.tree_fingerprint == t.fingerprint()


def test_single_leaf_regression():
    t = DecisionTree((Node(value=3.0),), "regression", 3)
    assert verbalize_rule(t, LIB).lines == ("predict 3",)


def test_probability_text_and_threshold_formatting():
    t = DecisionTree(
        (Node(1, 1.25, 1, 2), Node(value=0.3333), Node(value=0.5)),
        "classification",
        3,
    )
    assert verbalize_rule(t, LIB).text == (
        'if count of "carbonyl" <= 1.25:\n\tpredict negative (p=0.3333)\nelse:\n\tpredict positive (p=0.5)'
    )


def test_feature_out_of_range():
    t = DecisionTree((Node(7, 0.5, 1, 2), Node(value=0.0), Node(value=1.0)), "classification", 8)
    with pytest.raises(FeatureOutOfRange):
        verbalize_rule(t, LIB)


def test_hand_written_rule():
    text = 'if count of "amine" <= 1.5:\n\tpredict -2.5\nelse:\n\tpredict 4.25e-3'
    rule = parse_rule(text)
    assert isinstance(rule.root, RuleBranch) and rule.fg_names() == {"amine"}
    assert execute_rule(rule, vec(), LIB) == -2.5
    assert execute_rule(rule, vec(amine=1), LIB) == -2.5
    assert execute_rule(rule, vec(amine=2), LIB) == 0.00425
    assert parse_rule("predict negative (p=0.2)").root == RuleLeaf(0.2, "negative (p=0.2)", "negative")


def test_absent_feature_goes_left():
    rule = parse_rule('if count of "hydroxyl" <= 0.5:\n\tpredict 1\nelse:\n\tpredict 2')
    assert execute_rule(rule, vec(carbonyl=3), LIB) == 1.0


def test_unknown_name_fails_at_execution_only():
    rule = parse_rule('if count of "sulfone" <= 0.5:\n\tpredict 1\nelse:\n\tpredict 2')
    with pytest.raises(UnknownFGName):
        execute_rule(rule, vec(), LIB)


@pytest.mark.parametrize(
    "text",
    [
        'if count of "amine" <= 0.5:\n\t\tpredict 1\nelse:\n\tpredict 2',
        'if count of "amine" <= 0.5:\n\tpredict 1\n\t\tpredict 3\nelse:\n\tpredict 2',
        'if count of "amine" <= 0.5:\n\tpredict 1\nelse:\n\tpredict 2\n\tpredict 3',
    ],
)
def test_indent_jumps(text):
    with pytest.raises(IndentError):
        parse_rule(text)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "predict",
        "predict maybe",
        'if count of "amine" <= 0.5:\n\tpredict 1',
        'if count of "amine" <= 0.5:\n\tpredict 1\nelse:',
        'if count of "amine" < 0.5:\n\tpredict 1\nelse:\n\tpredict 2',
        'if count of "amine" <= 0.5:\n    predict 1\nelse:\n    predict 2',
        "predict 1\npredict 2",
    ],
)
def test_grammar_errors(text):
    with pytest.raises(GrammarError):
        parse_rule(text)


def test_trailing_newline_is_tolerated():
    assert parse_rule("predict 1\n") == parse_rule("predict 1")


def check_round_trip(tree, library, vectors):
    rule = verbalize_rule(tree, library)
    assert len(rule.lines) == 2 * tree.n_internal + tree.n_leaves
    assert all(not line[len(line) - len(line.lstrip("\t")):][:1].isspace() for line in rule.lines)
    parsed = parse_rule(rule)
    for x in vectors:
        assert execute_rule(parsed, x, library) == predict_tree(tree, x)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["classification", "regression"]))
def test_random_tree_round_trip(seed, task):
    rng = random.Random(seed)
    tree = random_tree(rng, len(WIDE), task)
    check_round_trip(tree, WIDE, [random_count_vector(rng, len(WIDE)) for _ in range(20)])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["classification", "regression"]))
def test_fitted_tree_round_trip(seed, task):
    rng = np.random.default_rng(seed)
    X = rng.poisson(0.8, size=(80, len(WIDE))).astype(float)
    y = rng.integers(0, 2, size=80) if task == "classification" else rng.normal(size=80).round(3)
    tree = fit_specialist(X, y, TreeParams(task=task))
    vectors = [FeatureVector({f: int(c) for f, c in enumerate(row) if c}, len(WIDE)) for row in X[:40]]
    check_round_trip(tree, WIDE, vectors)


def test_verbalization_is_pure():
    tree = random_tree(random.Random(3), len(WIDE))
    assert verbalize_rule(tree, WIDE) == verbalize_rule(tree, WIDE)
