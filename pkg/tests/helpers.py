"""Random generators and brute-force oracles shared by the test modules.

The oracles deliberately avoid the package's search code: they enumerate
everything and filter, so agreement with the fast paths means something.
"""

from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction

from treekd.molgraph import Molecule
from treekd.pattern import SmartsPattern, atom_props, eval_atom, eval_bond

# -- random molecules -------------------------------------------------------------
_ALIPHATIC = [("C", 4), ("C", 4), ("C", 4), ("N", 3), ("O", 2), ("S", 2), ("Cl", 1), ("F", 1)]
_AROMATIC = [("c", 4), ("c", 4), ("c", 4), ("n", 3)]
# (symbol, bonding capacity left after the written H count)
_BRACKET = [("[NH3+]", 1), ("[O-]", 1), ("[NH+]", 3), ("[nH]", 2)]
_BOND = {1: "-", 2: "=", 3: "#"}


def random_smiles(rng: random.Random, n_atoms: int, aromatic_ring: bool | None = None) -> str:
    while True:
        smi = _try_random_smiles(rng, n_atoms, aromatic_ring)
        if smi is not None:
            return smi


def _try_random_smiles(rng: random.Random, n_atoms: int, aromatic_ring: bool | None) -> str | None:
    """A random connected molecule as SMILES with explicit bond symbols.

    Atoms are a spanning tree plus a few ring-closing edges. Bond orders stay
    within each atom's valence. Optionally an aromatic six-ring is embedded so
    lowercase atoms and aromatic bonds occur.
    """
    if aromatic_ring is None:
        aromatic_ring = rng.random() < 0.5 and n_atoms >= 6
    sym: list[str] = []
    cap: list[int] = []
    arom: list[bool] = []
    edges: dict[tuple[int, int], str] = {}

    def add_atom(s: str, c: int, a: bool) -> int:
        sym.append(s)
        cap.append(c)
        arom.append(a)
        return len(sym) - 1

    used = [0] * (n_atoms + 8)

    def link(i: int, j: int, order: int | str) -> bool:
        w = 1 if order == ":" else int(order)
        if i == j or (min(i, j), max(i, j)) in edges or used[i] + w > cap[i] or used[j] + w > cap[j]:
            return False
        edges[(min(i, j), max(i, j))] = ":" if order == ":" else _BOND[int(order)]
        used[i] += w
        used[j] += w
        return True

    start = 0
    if aromatic_ring:
        ring = []
        for _ in range(6):
            s, c = rng.choice(_AROMATIC)
            ring.append(add_atom(s, c - 1, True))  # one valence unit kept for the pi system
        for k in range(6):
            link(ring[k], ring[(k + 1) % 6], ":")
        start = 6
    for i in range(start, n_atoms):
        if rng.random() < 0.1:
            s, c = rng.choice(_BRACKET)
            a = s.startswith("[n")
        else:
            s, c = rng.choice(_ALIPHATIC)
            a = False
        add_atom(s, c, a)
        if i == 0:
            continue
        for _ in range(20):
            j = rng.randrange(i)
            order = ":" if arom[i] and arom[j] else rng.choice([1, 1, 1, 1, 2, 3])
            if link(i, j, order):
                break
        else:
            return None
    n = len(sym)
    for _ in range(rng.randrange(3)):
        i, j = rng.randrange(n), rng.randrange(n)
        link(i, j, 1)

    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return _write_smiles(sym, edges, adj)


def _write_smiles(sym: list[str], edges: dict[tuple[int, int], str], adj: dict[int, list[int]]) -> str:
    n = len(sym)
    parent = {0: None}
    tree_edges = set()
    stack = [0]
    while stack:  # DFS tree
        v = stack.pop()
        for w in sorted(adj[v], reverse=True):
            if w not in parent:
                parent[w] = v
                tree_edges.add((min(v, w), max(v, w)))
                stack.append(w)
    closures = [e for e in edges if e not in tree_edges]
    digit_of: dict[tuple[int, int], int] = {e: k + 1 for k, e in enumerate(closures)}
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for w, v in parent.items():
        if v is not None:
            children[v].append(w)

    out: list[str] = []

    def emit(v: int) -> None:
        out.append(sym[v])
        for e in closures:
            if v in e:
                d = digit_of[e]
                tag = f"%{d}" if d > 9 else str(d)
                # bond symbol on the opening side only
                out.append((edges[e] if v == e[0] else "") + tag)
        kids = sorted(children[v])
        for k, w in enumerate(kids):
            bond = edges[(min(v, w), max(v, w))]
            if k < len(kids) - 1:
                out.append("(" + bond)
                emit(w)
                out.append(")")
            else:
                out.append(bond)
                emit(w)

    emit(0)
    return "".join(out)


# -- random SMARTS ------------------------------------------------------------------
_ATOM_EXPRS = [
    "*", "C", "c", "N", "n", "O", "S", "a", "A", "Cl",
    "[#6]", "[#7]", "[#8]", "[C,N]", "[c,n]", "[!C]", "[!#6]", "[R]", "[R0]", "[D1]", "[D2]", "[D3]",
    "[H0]", "[H1]", "[H2]", "[X2]", "[X3]", "[X4]", "[+]", "[-]", "[+0]", "[C;R]", "[C;!R]", "[#6&H1]",
    "[c,n;H1]", "[!C;!c]", "[N,O;H1,H2]", "[C&X4,c]", "[#6;D2,D3;!R]", "[O;H0;-]", "[#7+]",
]
_BOND_EXPRS = ["", "", "", "-", "=", "#", ":", "~", "!-", "-,=", "!:"]


def random_smarts(rng: random.Random, n_atoms: int) -> str:
    """A connected pattern of ``n_atoms`` atoms, optionally with one ring."""
    atoms = [rng.choice(_ATOM_EXPRS) for _ in range(n_atoms)]
    if n_atoms >= 3 and rng.random() < 0.25:
        # a simple chain closing back to the first atom
        parts = [atoms[0] + rng.choice(_BOND_EXPRS) + "1"]
        parts += [rng.choice(_BOND_EXPRS) + a for a in atoms[1:-1]]
        parts.append(rng.choice(_BOND_EXPRS) + atoms[-1] + "1")
        return "".join(parts)
    # random tree in branch notation
    out = atoms[0]
    for a in atoms[1:]:
        piece = rng.choice(_BOND_EXPRS) + a
        out += f"({piece})" if rng.random() < 0.3 else piece
    return out


# -- oracles ----------------------------------------------------------------------
def brute_force_matches(mol: Molecule, pattern: SmartsPattern) -> set[frozenset[int]]:
    """Every injective map that satisfies all predicates, collapsed to atom sets."""
    props = atom_props(mol)
    k = len(pattern.atoms)
    found: set[frozenset[int]] = set()
    bond_of = {}
    for b in mol.bonds:
        bond_of[(b.begin, b.end)] = b.order
        bond_of[(b.end, b.begin)] = b.order
    for perm in itertools.permutations(range(len(mol.atoms)), k):
        if not all(eval_atom(pattern.atoms[i], props[perm[i]]) for i in range(k)):
            continue
        ok = True
        for i, j, expr in pattern.bonds:
            order = bond_of.get((perm[i], perm[j]))
            if order is None or not eval_bond(expr, order):
                ok = False
                break
        if ok:
            found.add(frozenset(perm))
    return found


def ring_atoms_oracle(mol: Molecule) -> set[int]:
    """Atoms incident to an edge whose removal keeps its endpoints connected."""
    n = len(mol.atoms)
    edges = [(b.begin, b.end) for b in mol.bonds]
    out: set[int] = set()
    for k, (u, v) in enumerate(edges):
        adj: dict[int, list[int]] = {i: [] for i in range(n)}
        for m, (a, b) in enumerate(edges):
            if m != k:
                adj[a].append(b)
                adj[b].append(a)
        seen = {u}
        stack = [u]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if v in seen:
            out.update((u, v))
    return out


def _impurity(labels: list, task: str) -> Fraction:
    n = len(labels)
    if task == "classification":
        p = Fraction(sum(1 for y in labels if y == 1), n)
        return 1 - p * p - (1 - p) * (1 - p)
    mean = sum(labels, Fraction(0)) / n
    return sum(((y - mean) ** 2 for y in labels), Fraction(0)) / n


def _thresholds(values: list) -> list[float]:
    vs = sorted(set(values))
    out = []
    for lo, hi in zip(vs, vs[1:]):
        t = round((lo + hi) / 2, 4)
        if lo <= t < hi:
            out.append(t)
    return out


def oracle_best_split(rows: list[list[float]], labels: list, task: str, min_leaf: int = 1):
    """Exhaustive greedy split in exact rational arithmetic.

    Returns ``(feature, threshold)`` maximising the weighted impurity drop,
    ties to the lowest feature and then the lowest threshold, or None.
    """
    n = len(rows)
    ys = [Fraction(y) for y in labels]
    parent = _impurity(ys, task)
    best = None
    for f in range(len(rows[0])):
        col = [r[f] for r in rows]
        for t in _thresholds(col):
            left = [y for x, y in zip(col, ys) if x <= t]
            right = [y for x, y in zip(col, ys) if x > t]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            dec = parent - Fraction(len(left), n) * _impurity(left, task) - Fraction(len(right), n) * _impurity(right, task)
            if best is None or dec > best[0]:
                best = (dec, f, t)
    return None if best is None else (best[1], best[2])


def oracle_tree(rows, labels, task: str, max_depth: int, min_split: int = 2, min_leaf: int = 1, depth: int = 0):
    """Nested ``(feature, threshold, left, right)`` tuples; leaves are None."""
    if depth >= max_depth or len(rows) < min_split or len(set(labels)) == 1:
        return None
    split = oracle_best_split(rows, labels, task, min_leaf)
    if split is None:
        return None
    f, t = split
    L = [(r, y) for r, y in zip(rows, labels) if r[f] <= t]
    R = [(r, y) for r, y in zip(rows, labels) if r[f] > t]
    return (
        f,
        t,
        oracle_tree([r for r, _ in L], [y for _, y in L], task, max_depth, min_split, min_leaf, depth + 1),
        oracle_tree([r for r, _ in R], [y for _, y in R], task, max_depth, min_split, min_leaf, depth + 1),
    )


def tree_structure(tree, i: int = 0):
    node = tree.nodes[i]
    if node.is_leaf:
        return None
    return (node.feature, node.threshold, tree_structure(tree, node.left), tree_structure(tree, node.right))


# -- metric oracles ----------------------------------------------------------------
def auroc_oracle(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = sum(Fraction(1) if p > q else Fraction(1, 2) if p == q else Fraction(0) for p in pos for q in neg)
    return float(credit / (len(pos) * len(neg)))


def auprc_oracle(scores, labels) -> float:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(1 for y in labels if y == 1)
    ap = Fraction(0)
    prev_recall = Fraction(0)
    tp = 0
    for rank, i in enumerate(order, 1):
        if labels[i] == 1:
            tp += 1
            recall = Fraction(tp, n_pos)
            ap += (recall - prev_recall) * Fraction(tp, rank)
            prev_recall = recall
    return float(ap)


def rank_oracle(values) -> list[Fraction]:
    """Average 1-based ranks by counting strictly smaller and equal values."""
    out = []
    for v in values:
        less = sum(1 for w in values if w < v)
        eq = sum(1 for w in values if w == v)
        out.append(Fraction(2 * less + eq + 1, 2))
    return out


def spearman_oracle(a, b) -> float:
    ra, rb = rank_oracle(a), rank_oracle(b)
    n = len(a)
    ma, mb = sum(ra) / n, sum(rb) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    va = sum((x - ma) ** 2 for x in ra)
    vb = sum((y - mb) ** 2 for y in rb)
    return float(cov) / math.sqrt(float(va) * float(vb))


def mae_oracle(p, t) -> float:
    return float(sum((abs(Fraction(x) - Fraction(y)) for x, y in zip(p, t)), Fraction(0)) / len(p))


# -- relabelling ---------------------------------------------------------------------
_ORDER_SYMBOL = {"single": "-", "double": "=", "triple": "#", "aromatic": ":"}


def permuted_smiles(mol: Molecule, perm: list[int]) -> str:
    """Write ``mol`` with atom ``i`` renumbered to ``perm[i]``.

    Every atom is written in brackets with its full H count and charge, so
    the reparsed graph is isomorphic to ``mol`` under ``perm``.
    """
    n = len(mol.atoms)
    inv = [0] * n
    for old, new in enumerate(perm):
        inv[new] = old
    sym = []
    for new in range(n):
        a = mol.atoms[inv[new]]
        el = a.element.lower() if a.aromatic else a.element
        h = a.implicit_h
        hs = "" if h == 0 else "H" if h == 1 else f"H{h}"
        q = a.formal_charge
        qs = "" if q == 0 else ("+" if q > 0 else "-") + (str(abs(q)) if abs(q) > 1 else "")
        sym.append(f"[{el}{hs}{qs}]")
    edges = {}
    for b in mol.bonds:
        i, j = perm[b.begin], perm[b.end]
        edges[(min(i, j), max(i, j))] = _ORDER_SYMBOL[b.order]
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    components = []
    seen: set[int] = set()
    for start in range(n):
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            for w in adj[stack.pop()]:
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        order = sorted(comp)
        local = {old: k for k, old in enumerate(order)}
        sub_edges = {(local[i], local[j]): s for (i, j), s in edges.items() if i in comp}
        sub_adj = {local[i]: [local[w] for w in adj[i]] for i in order}
        components.append(_write_smiles([sym[i] for i in order], sub_edges, sub_adj))
    return ".".join(components)


def isomorphic(a: Molecule, b: Molecule, atoms_a: frozenset[int], atoms_b: frozenset[int]) -> bool:
    """Brute-force isomorphism of induced subgraphs on (element, aromatic, ring) labels."""
    if len(atoms_a) != len(atoms_b):
        return False
    la, lb = sorted(atoms_a), sorted(atoms_b)

    def label(m, i):
        x = m.atoms[i]
        return (x.element, x.aromatic, x.in_ring)

    ea = {frozenset((x.begin, x.end)) for x in a.bonds if x.begin in atoms_a and x.end in atoms_a}
    eb = {frozenset((x.begin, x.end)) for x in b.bonds if x.begin in atoms_b and x.end in atoms_b}
    if len(ea) != len(eb) or sorted(label(a, i) for i in la) != sorted(label(b, i) for i in lb):
        return False
    for perm in itertools.permutations(lb):
        f = dict(zip(la, perm))
        if all(label(a, i) == label(b, f[i]) for i in la) and {frozenset(f[i] for i in e) for e in ea} == eb:
            return True
    return False


# -- random trees -------------------------------------------------------------------
def random_tree(rng: random.Random, n_features: int, task: str = "classification", max_depth: int = 6, p_split: float = 0.75):
    """A structurally random tree with grammar-exact thresholds and leaf values.

    Thresholds mix half-integers (what CART produces on counts), integers that
    vectors can hit exactly, and arbitrary 4-decimal values.
    """
    from treekd.forest import DecisionTree, Node, round_probability, round_threshold, round_value

    nodes: list[Node] = []

    def grow(depth: int) -> int:
        i = len(nodes)
        nodes.append(Node())
        if depth < max_depth and rng.random() < p_split:
            f = rng.randrange(n_features)
            kind = rng.random()
            if kind < 0.6:
                t = rng.randint(0, 4) + 0.5
            elif kind < 0.8:
                t = float(rng.randint(0, 4))  # equality goes left
            else:
                t = round_threshold(rng.uniform(0, 5))
            left = grow(depth + 1)
            right = grow(depth + 1)
            nodes[i] = Node(f, t, left, right)
        else:
            if task == "classification":
                v = round_probability(rng.random())
            else:
                v = round_value(rng.uniform(-8, 4) * 10 ** rng.randint(-3, 3))
            nodes[i] = Node(value=v)
        return i

    grow(0)
    return DecisionTree(tuple(nodes), task, n_features)


def random_count_vector(rng: random.Random, n_features: int):
    from treekd.pattern import FeatureVector

    counts = {f: rng.randint(1, 5) for f in range(n_features) if rng.random() < 0.3}
    return FeatureVector(counts, n_features)
