"""CART decision trees and bagged random forests over FG count vectors.

Trees follow scikit-learn's defaults where the original setup defers to them
(``max_depth=6``, ``min_samples_split=2``, ``min_samples_leaf=1``,
``max_features`` = sqrt(d) for classification forests and all features for
regression). Randomness comes from :class:`~treekd.rng.Xoshiro256`: tree
``k`` of a forest consumes only stream ``k`` of the master seed, so growing a
forest never changes the trees already in it.

Every threshold and leaf value is stored exactly as the rule verbalizer prints
it (thresholds at 4 decimals, probabilities at 4 decimals, regression means at
4 significant digits). Executing the printed rule therefore reproduces
:func:`predict_tree` bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence, Union

import numpy as np

from ._hashing import short_digest
from .errors import DimensionMismatch, EmptyInput, LibraryMismatch
from .pattern import FeatureVector
from .rng import Xoshiro256

Task = Literal["classification", "regression"]
MaxFeatures = Union[Literal["auto", "sqrt", "all"], int]

# relative slack when comparing impurity decreases computed in floating point
TIE_TOL = 1e-12


# -- number formatting shared with the verbalizer -----------------------------
def format_decimal(x: float, places: int = 4) -> str:
    """Fixed-point with trailing zeros trimmed: 0.5 -> "0.5", 3.0 -> "3"."""
    s = f"{x:.{places}f}"
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def format_sig(x: float, digits: int = 4) -> str:
    s = f"{x:.{digits}g}"
    return "0" if s == "-0" else s


def round_threshold(x: float) -> float:
    return float(format_decimal(x))


def round_probability(p: float) -> float:
    return float(format_decimal(p))


def round_value(v: float) -> float:
    return float(format_sig(v))


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: MaxFeatures = "auto"
    task: Task = "classification"

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        mf = self.max_features
        if not (mf in ("auto", "sqrt", "all") or (isinstance(mf, int) and mf >= 1)):
            raise ValueError(f"bad max_features {mf!r}")

    def n_candidate_features(self, d: int) -> int:
        mf = self.max_features
        if mf == "auto":
            mf = "sqrt" if self.task == "classification" else "all"
        if mf == "all":
            return d
        if mf == "sqrt":
            return max(1, math.isqrt(d))
        return min(int(mf), d)


@dataclass(frozen=True)
class Node:
    """Internal node when ``feature >= 0``, otherwise a leaf."""

    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0
    class_counts: tuple[int, int] | None = None
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class DecisionTree:
    nodes: tuple[Node, ...]
    task: Task
    n_features: int
    library_tag: str = ""

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            nd = self.nodes[i]
            return 0 if nd.is_leaf else 1 + max(walk(nd.left), walk(nd.right))

        return walk(0)

    @property
    def n_internal(self) -> int:
        return sum(not n.is_leaf for n in self.nodes)

    @property
    def n_leaves(self) -> int:
        return sum(n.is_leaf for n in self.nodes)

    def to_dict(self) -> dict:
        return {
            "kind": "tree",
            "task": self.task,
            "n_features": self.n_features,
            "library_tag": self.library_tag,
            "nodes": {
                "feature": [n.feature for n in self.nodes],
                "threshold": [n.threshold for n in self.nodes],
                "left": [n.left for n in self.nodes],
                "right": [n.right for n in self.nodes],
                "value": [n.value for n in self.nodes],
                "class_counts": [list(n.class_counts) if n.class_counts else None for n in self.nodes],
                "n_samples": [n.n_samples for n in self.nodes],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        cols = d["nodes"]
        nodes = tuple(
            Node(
                feature=f, threshold=float(t), left=l, right=r, value=float(v),
                class_counts=tuple(cc) if cc is not None else None, n_samples=ns,
            )
            for f, t, l, r, v, cc, ns in zip(
                cols["feature"], cols["threshold"], cols["left"], cols["right"],
                cols["value"], cols["class_counts"], cols["n_samples"],
            )
        )
        return cls(nodes, d["task"], d["n_features"], d.get("library_tag", ""))

    def fingerprint(self) -> str:
        return short_digest(json.dumps(self.to_dict(), sort_keys=True))


@dataclass(frozen=True)
class RandomForest:
    trees: tuple[DecisionTree, ...]
    seed: int
    params: TreeParams
    bootstrap: bool = True

    def __len__(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def library_tag(self) -> str:
        return self.trees[0].library_tag

    @property
    def task(self) -> Task:
        return self.params.task

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "seed": self.seed,
            "bootstrap": self.bootstrap,
            "params": asdict(self.params),
            "n_features": self.n_features,
            "library_tag": self.library_tag,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        return cls(
            tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            d["seed"],
            TreeParams(**d["params"]),
            d.get("bootstrap", True),
        )


# -- input normalisation --------------------------------------------------------
def as_matrix(X: Sequence[FeatureVector] | np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    if isinstance(X, np.ndarray):
        arr = X.astype(np.float64, copy=False)
    elif len(X) and isinstance(X[0], FeatureVector):
        dims = {v.dimension for v in X}
        if len(dims) != 1:
            raise DimensionMismatch(f"feature vectors have mixed dimensions {sorted(dims)}")
        arr = np.zeros((len(X), dims.pop()), dtype=np.float64)
        for i, v in enumerate(X):
            for j, c in v.counts.items():
                arr[i, j] = c
    else:
        try:
            arr = np.asarray(X, dtype=np.float64)
        except ValueError:
            raise DimensionMismatch("rows have inconsistent lengths") from None
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D feature matrix, got shape {arr.shape}")
    return arr


def _value_at(x: FeatureVector | Sequence[float] | np.ndarray, f: int) -> float:
    return x[f]


def _dim(x: FeatureVector | Sequence[float] | np.ndarray) -> int:
    return x.dimension if isinstance(x, FeatureVector) else len(x)


# -- induction -------------------------------------------------------------------
def _leaf(y: np.ndarray, task: Task) -> Node:
    n = len(y)
    if task == "classification":
        pos = int(np.count_nonzero(y == 1.0))
        return Node(value=round_probability(pos / n), class_counts=(n - pos, pos), n_samples=n)
    return Node(value=round_value(math.fsum(y.tolist()) / n), n_samples=n)


def _split_scores(col: np.ndarray, y: np.ndarray, task: Task, min_leaf: int):
    """Yield ``(threshold, decrease)`` for every valid split of one feature.

    The decrease is the weighted impurity drop, Gini for classification and
    variance for regression, both expressed as
    ``(sum_L^2/n_L + sum_R^2/n_R - sum^2/n) / n`` over per-class indicator
    sums (classification) or centred labels (regression).
    """
    n = len(y)
    order = np.lexsort((y, col))
    xs = col[order]
    ys = y[order]
    cut = np.nonzero(xs[:-1] < xs[1:])[0]  # left block is xs[:i+1]
    if cut.size == 0:
        return
    n_left = cut + 1
    n_right = n - n_left
    if task == "classification":
        c1 = np.cumsum(ys)[cut]
        c0 = n_left - c1
        t1 = ys.sum()
        t0 = n - t1
        r1 = t1 - c1
        r0 = n_right - r1
        proxy = (c0 * c0 + c1 * c1) / n_left + (r0 * r0 + r1 * r1) / n_right
        parent = (t0 * t0 + t1 * t1) / n
    else:
        centred = ys - math.fsum(ys.tolist()) / n
        s_left = np.cumsum(centred)[cut]
        s_tot = centred.sum()
        s_right = s_tot - s_left
        proxy = s_left * s_left / n_left + s_right * s_right / n_right
        parent = s_tot * s_tot / n
    dec = (proxy - parent) / n
    for k, i in enumerate(cut):
        lo, hi = xs[i], xs[i + 1]
        t = round_threshold((lo + hi) / 2.0)
        if not (lo <= t < hi):
            continue
        if n_left[k] < min_leaf or n_right[k] < min_leaf:
            continue
        yield t, float(dec[k])


def _candidate_features(Xn: np.ndarray, params: TreeParams, rng: Xoshiro256 | None):
    """Non-constant features at this node, in the order they are examined.

    With subsampling, features are drawn without replacement (lazy
    Fisher-Yates on ``rng``) in batches of ``k``; the caller stops after a
    batch that produced a valid split.
    """
    varying = np.nonzero(Xn.min(axis=0) < Xn.max(axis=0))[0].tolist()
    d = Xn.shape[1]
    k = params.n_candidate_features(d)
    if k >= d or not varying:
        yield varying
        return
    if rng is None:
        raise ValueError("feature subsampling needs an rng")
    pool = list(varying)
    m = len(pool)
    drawn = 0
    while drawn < m:
        batch = []
        for _ in range(min(k, m - drawn)):
            j = drawn + rng.randbelow(m - drawn)
            pool[drawn], pool[j] = pool[j], pool[drawn]
            batch.append(pool[drawn])
            drawn += 1
        yield sorted(batch)


def _best_split(Xn: np.ndarray, yn: np.ndarray, params: TreeParams, rng: Xoshiro256 | None) -> tuple[int, float] | None:
    best: list[tuple[int, float, float]] = []
    for batch in _candidate_features(Xn, params, rng):
        for f in batch:
            for t, dec in _split_scores(Xn[:, f], yn, params.task, params.min_samples_leaf):
                best.append((f, t, dec))
        if best:
            break
    if not best:
        return None
    top = max(dec for _, _, dec in best)
    tol = TIE_TOL * max(1.0, abs(top))
    f, t, _ = min((c for c in best if c[2] >= top - tol), key=lambda c: (c[0], c[1]))
    return f, t


def fit_tree(
    X: Sequence[FeatureVector] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    params: TreeParams = TreeParams(),
    rng: Xoshiro256 | None = None,
    library_tag: str | None = None,
) -> DecisionTree:
    """Grow one CART tree greedily, depth-first, left child first.

    Ties on impurity decrease go to the lowest feature index, then the lowest
    threshold. A node becomes a leaf at ``max_depth``, when pure, when it has
    fewer than ``min_samples_split`` samples, or when no split leaves
    ``min_samples_leaf`` samples on both sides.
    """
    Xa = as_matrix(X)
    ya = np.asarray(y, dtype=np.float64)
    if Xa.shape[0] == 0:
        raise EmptyInput("cannot fit a tree on zero samples")
    if ya.shape != (Xa.shape[0],):
        raise DimensionMismatch(f"{Xa.shape[0]} rows but {ya.shape} labels")
    if params.task == "classification" and not np.isin(ya, (0.0, 1.0)).all():
        raise ValueError("classification labels must be 0 or 1")
    if library_tag is None:
        library_tag = X[0].library_tag if not isinstance(X, np.ndarray) and isinstance(X[0], FeatureVector) else ""

    nodes: list[Node | None] = []

    def build(idx: np.ndarray, depth: int) -> int:
        node_id = len(nodes)
        nodes.append(None)
        yn = ya[idx]
        leaf = _leaf(yn, params.task)
        if depth >= params.max_depth or len(idx) < params.min_samples_split or np.all(yn == yn[0]):
            nodes[node_id] = leaf
            return node_id
        split = _best_split(Xa[idx], yn, params, rng)
        if split is None:
            nodes[node_id] = leaf
            return node_id
        f, t = split
        go_left = Xa[idx, f] <= t
        left = build(idx[go_left], depth + 1)
        right = build(idx[~go_left], depth + 1)
        nodes[node_id] = replace(leaf, feature=f, threshold=t, left=left, right=right)
        return node_id

    build(np.arange(Xa.shape[0]), 0)
    return DecisionTree(tuple(nodes), params.task, Xa.shape[1], library_tag)


def fit_specialist(X, y, params: TreeParams = TreeParams(), library_tag: str | None = None) -> DecisionTree:
    """The single per-property tree: full data, every feature considered."""
    return fit_tree(X, y, replace(params, max_features="all"), None, library_tag)


def predict_tree(tree: DecisionTree, x: FeatureVector | Sequence[float] | np.ndarray) -> float:
    if _dim(x) != tree.n_features:
        raise DimensionMismatch(f"vector dimension {_dim(x)} != tree dimension {tree.n_features}")
    node = tree.nodes[0]
    while not node.is_leaf:
        node = tree.nodes[node.left if _value_at(x, node.feature) <= node.threshold else node.right]
    return node.value


def fit_forest(
    X: Sequence[FeatureVector] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    n_trees: int = 50,
    params: TreeParams = TreeParams(),
    seed: int = 0,
    bootstrap: bool = True,
    library_tag: str | None = None,
) -> RandomForest:
    """Bagged forest; tree ``k`` uses only PRNG stream ``(seed, k)``."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    Xa = as_matrix(X)
    ya = np.asarray(y, dtype=np.float64)
    if Xa.shape[0] == 0:
        raise EmptyInput("cannot fit a forest on zero samples")
    if ya.shape != (Xa.shape[0],):
        raise DimensionMismatch(f"{Xa.shape[0]} rows but {ya.shape} labels")
    if library_tag is None:
        library_tag = X[0].library_tag if not isinstance(X, np.ndarray) and isinstance(X[0], FeatureVector) else ""
    n = Xa.shape[0]
    trees = []
    for k in range(n_trees):
        rng = Xoshiro256.stream(seed, k)
        if bootstrap:
            idx = np.array([rng.randbelow(n) for _ in range(n)], dtype=np.intp)
            trees.append(fit_tree(Xa[idx], ya[idx], params, rng, library_tag))
        else:
            trees.append(fit_tree(Xa, ya, params, rng, library_tag))
    return RandomForest(tuple(trees), seed, params, bootstrap)


def predict_forest(forest: RandomForest, x: FeatureVector | Sequence[float] | np.ndarray) -> float:
    """Mean of the member trees' predictions (exactly rounded sum)."""
    return math.fsum(predict_tree(t, x) for t in forest.trees) / len(forest.trees)


# -- persistence -------------------------------------------------------------------
def save_model(model: DecisionTree | RandomForest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_model(
    path: str | Path,
    n_features: int | None = None,
    library_tag: str | None = None,
) -> DecisionTree | RandomForest:
    """Load a tree or forest, rejecting a dimension or library-tag mismatch."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    model: DecisionTree | RandomForest
    if d.get("kind") == "forest":
        model = RandomForest.from_dict(d)
    elif d.get("kind") == "tree":
        model = DecisionTree.from_dict(d)
    else:
        raise ValueError(f"{path}: not a serialized tree or forest")
    if n_features is not None and model.n_features != n_features:
        raise DimensionMismatch(f"{path}: model has {model.n_features} features, expected {n_features}")
    if library_tag is not None and model.library_tag != library_tag:
        raise LibraryMismatch(f"{path}: model built with library {model.library_tag!r}, not {library_tag!r}")
    return model
