"""Decision trees as tab-indented if-then text, and back.

Grammar (pre-order, one node per line, depth = number of leading tabs)::

    if count of "<FG name>" <= <threshold>:
    \t<left subtree>
    else:
    \t<right subtree>
    predict positive (p=0.75)      # classification leaf
    predict -1.234                 # regression leaf
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

from .errors import FeatureOutOfRange, GrammarError, IndentError, UnknownFGName
from .forest import DecisionTree, format_decimal, format_sig
from .pattern import FeatureVector, FunctionalGroupLibrary


@dataclass(frozen=True)
class RuleText:
    lines: tuple[str, ...]
    tree_fingerprint: str = ""
    library_tag: str = ""

    @property
    def text(self) -> str:
        return "\n".join(self.lines)

    def __str__(self) -> str:
        return self.text


def leaf_text(value: float, task: str) -> str:
    if task == "classification":
        label = "positive" if value >= 0.5 else "negative"
        return f"{label} (p={format_decimal(value)})"
    return format_sig(value)


def verbalize_rule(tree: DecisionTree, library: FunctionalGroupLibrary) -> RuleText:
    names = library.names
    lines: list[str] = []

    def emit(i: int, depth: int) -> None:
        node = tree.nodes[i]
        pad = "\t" * depth
        if node.is_leaf:
            lines.append(f"{pad}predict {leaf_text(node.value, tree.task)}")
            return
        if node.feature >= len(names):
            raise FeatureOutOfRange(f"feature {node.feature} outside library of {len(names)}")
        lines.append(f'{pad}if count of "{names[node.feature]}" <= {format_decimal(node.threshold)}:')
        emit(node.left, depth + 1)
        lines.append(f"{pad}else:")
        emit(node.right, depth + 1)

    emit(0, 0)
    return RuleText(tuple(lines), tree.fingerprint(), tree.library_tag)


# -- parsed rules ---------------------------------------------------------------
@dataclass(frozen=True)
class RuleLeaf:
    value: float
    text: str
    label: str | None = None


@dataclass(frozen=True)
class RuleBranch:
    fg_name: str
    threshold: float
    left: "RuleNode"
    right: "RuleNode"


RuleNode = Union[RuleLeaf, RuleBranch]


@dataclass(frozen=True)
class ExecutableRule:
    root: RuleNode

    def fg_names(self) -> set[str]:
        out: set[str] = set()
        stack = [self.root]
        while stack:
            n = stack.pop()
            if isinstance(n, RuleBranch):
                out.add(n.fg_name)
                stack += [n.left, n.right]
        return out


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_IF = re.compile(rf'^if count of "([^"\t\n]+)" <= ({_NUM}):$')
_LEAF_CLS = re.compile(rf"^predict (positive|negative) \(p=({_NUM})\)$")
_LEAF_REG = re.compile(rf"^predict ({_NUM})$")


def _split_indent(line: str, lineno: int) -> tuple[int, str]:
    body = line.lstrip("\t")
    depth = len(line) - len(body)
    if body[:1].isspace():
        raise GrammarError(f"line {lineno}: indentation must use tabs only")
    return depth, body


def parse_rule(text: str | RuleText | Sequence[str]) -> ExecutableRule:
    """Rebuild the if-then tree from verbalized rule text.

    Raises:
        IndentError: a line sits more than one level below its parent.
        GrammarError: anything else that does not fit the grammar.
    """
    if isinstance(text, RuleText):
        lines = list(text.lines)
    elif isinstance(text, str):
        lines = text.split("\n")
    else:
        lines = list(text)
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise GrammarError("empty rule")
    parsed = [_split_indent(line, i + 1) for i, line in enumerate(lines)]
    pos = 0

    def node(depth: int) -> RuleNode:
        nonlocal pos
        if pos >= len(parsed):
            raise GrammarError(f"rule ends early; expected a node at depth {depth}")
        d, body = parsed[pos]
        if d > depth:
            raise IndentError(f"line {pos + 1}: depth {d} where {depth} was expected")
        if d < depth:
            raise GrammarError(f"line {pos + 1}: missing node at depth {depth}")
        pos += 1
        m = _IF.match(body)
        if m:
            left = node(depth + 1)
            if pos >= len(parsed) or parsed[pos] != (depth, "else:"):
                found = parsed[pos] if pos < len(parsed) else "end of rule"
                if pos < len(parsed) and parsed[pos][0] > depth:
                    raise IndentError(f"line {pos + 1}: unexpected deeper line {found!r}")
                raise GrammarError(f"line {pos + 1}: expected 'else:' at depth {depth}, got {found!r}")
            pos += 1
            right = node(depth + 1)
            return RuleBranch(m.group(1), float(m.group(2)), left, right)
        m = _LEAF_CLS.match(body)
        if m:
            return RuleLeaf(float(m.group(2)), body[len("predict "):], m.group(1))
        m = _LEAF_REG.match(body)
        if m:
            return RuleLeaf(float(m.group(1)), m.group(1))
        raise GrammarError(f"line {pos}: cannot parse {body!r}")

    root = node(0)
    if pos != len(parsed):
        d, body = parsed[pos]
        if d > 0:
            raise IndentError(f"line {pos + 1}: unexpected indented line {body!r}")
        raise GrammarError(f"line {pos + 1}: trailing text {body!r}")
    return ExecutableRule(root)


def find_leaf(rule: ExecutableRule, vector: FeatureVector, library: FunctionalGroupLibrary) -> RuleLeaf:
    index = library.index_of
    node = rule.root
    while isinstance(node, RuleBranch):
        try:
            f = index[node.fg_name]
        except KeyError:
            raise UnknownFGName(f"functional group {node.fg_name!r} is not in library {library.version_tag}") from None
        node = node.left if vector[f] <= node.threshold else node.right
    return node


def execute_rule(rule: ExecutableRule, vector: FeatureVector, library: FunctionalGroupLibrary) -> float:
    """Same descent as :func:`~treekd.forest.predict_tree` (``<=`` goes left)."""
    return find_leaf(rule, vector, library).value
