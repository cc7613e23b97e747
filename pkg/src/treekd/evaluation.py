"""Benchmark metrics and the rule-utilization / property-cliff analyses."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .dataset import CATEGORIES, MoleculeRecord, PropertySpec
from .descriptors import Fingerprint, tanimoto
from .errors import (
    DegenerateLabels,
    EmptyInput,
    LengthMismatch,
    MissingMember,
    ZeroVariance,
)


@dataclass(frozen=True)
class MetricReport:
    metric: str
    value: float
    n: int
    direction: str  # "higher" or "lower" is better

    def to_json(self, property_name: str, **extra: object) -> dict:
        return {"property": property_name, "metric": self.metric, "value": self.value, "n": self.n, **extra}


def _pair(pred: Sequence[float], truth: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise LengthMismatch(f"lengths differ: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise EmptyInput("metric of an empty sample")
    return p, t


def mae(pred: Sequence[float], truth: Sequence[float]) -> MetricReport:
    p, t = _pair(pred, truth)
    return MetricReport("MAE", math.fsum(np.abs(p - t).tolist()) / p.size, int(p.size), "lower")


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores: Sequence[float], labels: Sequence[float]) -> MetricReport:
    """Mann-Whitney AUROC: P(score_pos > score_neg), ties counted half."""
    s, y = _pair(scores, labels)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUROC needs at least one positive and one negative")
    r = average_ranks(s)
    # rank sums are exact half-integers, so this equals the pairwise credit count
    credit = math.fsum(r[pos].tolist()) - n_pos * (n_pos + 1) / 2.0
    return MetricReport("AUROC", credit / (n_pos * n_neg), int(s.size), "higher")


def auprc(scores: Sequence[float], labels: Sequence[float]) -> MetricReport:
    """Average precision with scores sorted descending, ties by input order."""
    s, y = _pair(scores, labels)
    n_pos = int((y == 1).sum())
    if n_pos == 0:
        raise DegenerateLabels("AUPRC needs at least one positive")
    order = sorted(range(s.size), key=lambda i: (-s[i], i))
    hits = 0
    total = []
    for rank, i in enumerate(order, 1):
        if y[i] == 1:
            hits += 1
            total.append(hits / rank)
    return MetricReport("AUPRC", math.fsum(total) / n_pos, int(s.size), "higher")


def spearman(pred: Sequence[float], truth: Sequence[float]) -> MetricReport:
    p, t = _pair(pred, truth)
    if p.size < 2:
        raise EmptyInput("Spearman needs at least two points")
    a = average_ranks(p)
    b = average_ranks(t)
    a -= a.mean()
    b -= b.mean()
    sa = math.fsum((a * a).tolist())
    sb = math.fsum((b * b).tolist())
    if sa == 0 or sb == 0:
        raise ZeroVariance("Spearman is undefined when either side is constant")
    rho = math.fsum((a * b).tolist()) / math.sqrt(sa * sb)
    return MetricReport("Spearman", max(-1.0, min(1.0, rho)), int(p.size), "higher")


_METRICS = {"MAE": mae, "AUROC": auroc, "AUPRC": auprc, "Spearman": spearman}


def compute_metric(spec: PropertySpec, pred: Sequence[float], truth: Sequence[float]) -> MetricReport:
    return _METRICS[spec.metric](pred, truth)


# -- analyses ------------------------------------------------------------------
@dataclass(frozen=True)
class QuadrantCounts:
    both_correct: int
    only_tree: int
    only_llm: int
    both_wrong: int

    @property
    def n(self) -> int:
        return self.both_correct + self.only_tree + self.only_llm + self.both_wrong

    def to_json(self) -> dict:
        return asdict(self)


def quadrants(tree_correct: Sequence[bool], model_correct: Sequence[bool]) -> QuadrantCounts:
    """Cross-tabulate which molecules the tree and the model got right."""
    if len(tree_correct) != len(model_correct):
        raise LengthMismatch(f"{len(tree_correct)} vs {len(model_correct)} flags")
    cells = [0, 0, 0, 0]
    for t, m in zip(tree_correct, model_correct):
        cells[(0 if t else 2) + (0 if m else 1)] += 1
    # cells: TT, TF, FT, FF -> both, only_tree, only_llm, neither
    return QuadrantCounts(cells[0], cells[1], cells[2], cells[3])


def correct_flags(scores: Sequence[float], labels: Sequence[float], threshold: float = 0.5) -> list[bool]:
    return [(s >= threshold) == (y == 1) for s, y in zip(scores, labels)]


@dataclass(frozen=True)
class CliffPair:
    ids: tuple[int, int]
    similarity: float
    labels: tuple[int, int]

    def to_json(self) -> dict:
        return {"ids": list(self.ids), "similarity": self.similarity, "labels": list(self.labels)}


def find_cliff_pairs(
    records: Sequence[MoleculeRecord],
    fingerprints: Sequence[Fingerprint],
    threshold: float = 0.8,
) -> list[CliffPair]:
    """Pairs more similar than ``threshold`` whose binary labels disagree."""
    if len(records) != len(fingerprints):
        raise LengthMismatch(f"{len(records)} records but {len(fingerprints)} fingerprints")
    items = sorted(zip(records, fingerprints), key=lambda rf: rf[0].id)
    out = []
    for (ra, fa), (rb, fb) in combinations(items, 2):
        if ra.label == rb.label:
            continue
        sim = tanimoto(fa, fb)
        if sim > threshold:
            out.append(CliffPair((ra.id, rb.id), sim, (int(ra.label), int(rb.label))))
    return out


def cliff_accuracy(pairs: Sequence[CliffPair], correctness: Mapping[int, bool]) -> int:
    """Number of pairs with both members predicted correctly."""
    count = 0
    for pair in pairs:
        flags = []
        for i in pair.ids:
            if i not in correctness:
                raise MissingMember(f"no correctness flag for record {i}")
            flags.append(correctness[i])
        count += all(flags)
    return count


# -- N-scaling table -----------------------------------------------------------
@dataclass(frozen=True)
class ScalingRow:
    property: str
    category: str
    metric: str
    direction: str
    values: dict[int, float]


def order_scaling_rows(rows: Sequence[ScalingRow]) -> list[ScalingRow]:
    """Group by ADMET category (stable within a category)."""
    order = {c: i for i, c in enumerate(CATEGORIES)}
    return sorted(rows, key=lambda r: order.get(r.category, len(order)))


def format_scaling_table(rows: Sequence[ScalingRow], ns: Sequence[int]) -> str:
    """Plain-text table: one line per property, one column per forest size."""
    head = ["Category", "Property", "Metric"] + [f"N = {n}" for n in ns]
    body = []
    for r in order_scaling_rows(rows):
        arrow = "↑" if r.direction == "higher" else "↓"
        body.append([r.category, r.property, f"{r.metric} ({arrow})"] + [f"{r.values[n]:.3f}" for n in ns])
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    fmt = lambda row: "  ".join(str(x).ljust(w) for x, w in zip(row, widths)).rstrip()
    rule = "-" * len(fmt(head))
    return "\n".join([fmt(head), rule, *map(fmt, body)]) + "\n"


def format_metric_table(entries: Sequence[dict]) -> str:
    head = ["Model", "Property", "Metric", "Value", "n"]
    body = [[e.get("model", ""), e["property"], e["metric"], f"{e['value']:.4f}", str(e["n"])] for e in entries]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    fmt = lambda row: "  ".join(x.ljust(w) for x, w in zip(row, widths)).rstrip()
    return "\n".join([fmt(head), "-" * len(fmt(head)), *map(fmt, body)]) + "\n"
