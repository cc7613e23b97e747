"""SMARTS subset, backtracking substructure matching, and FG count features.

Atom primitives: ``*``, ``A``, ``a``, element symbols (uppercase aliphatic,
lowercase aromatic), ``#n``, ``Dn``, ``Hn``, ``Xn``, ``R``/``R0`` and charges.
Operators, tightest first: ``!``, ``&`` (or juxtaposition), ``,``, ``;``.
Bond primitives: ``- = # : ~`` with the same operators. Two adjacent pattern
atoms with no bond written between them match a single or aromatic bond.

Recursive SMARTS (``$(...)``), ring sizes, isotopes, chirality and
disconnected patterns are rejected with :class:`UnsupportedPrimitive`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

from ._hashing import short_digest
from .errors import (
    DimensionMismatch,
    MalformedExpression,
    SmartsError,
    UnsupportedPrimitive,
)
from .molgraph import ATOMIC_NUMBER, Molecule


# ---------------------------------------------------------------------------
# expression trees
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Prim:
    """A single primitive test, e.g. ``Prim("elem", (6, False))``."""

    kind: str
    value: object = None


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Expr", ...]


Expr = Union[Prim, Not, And, Or]

ANY_ATOM = Prim("any")
DEFAULT_BOND = Or((Prim("bond", "single"), Prim("bond", "aromatic")))


@dataclass(frozen=True)
class AtomProps:
    """Everything an atom primitive can ask about one molecule atom."""

    atomic_number: int
    aromatic: bool
    charge: int
    degree: int
    total_h: int
    in_ring: bool

    @property
    def connectivity(self) -> int:
        return self.degree + self.total_h


def atom_props(mol: Molecule) -> list[AtomProps]:
    return [
        AtomProps(
            atomic_number=a.atomic_number,
            aromatic=a.aromatic,
            charge=a.formal_charge,
            degree=mol.degree(a.index),
            total_h=a.implicit_h,
            in_ring=a.in_ring,
        )
        for a in mol.atoms
    ]


def eval_atom(expr: Expr, p: AtomProps) -> bool:
    """Interpret an atom expression directly (slow path, used for checking)."""
    if isinstance(expr, Not):
        return not eval_atom(expr.arg, p)
    if isinstance(expr, And):
        return all(eval_atom(e, p) for e in expr.args)
    if isinstance(expr, Or):
        return any(eval_atom(e, p) for e in expr.args)
    return _prim_atom(expr)(p)


def eval_bond(expr: Expr, order: str) -> bool:
    if isinstance(expr, Not):
        return not eval_bond(expr.arg, order)
    if isinstance(expr, And):
        return all(eval_bond(e, order) for e in expr.args)
    if isinstance(expr, Or):
        return any(eval_bond(e, order) for e in expr.args)
    return expr.kind == "anybond" or expr.value == order


def _prim_atom(prim: Prim) -> Callable[[AtomProps], bool]:
    k, v = prim.kind, prim.value
    if k == "any":
        return lambda p: True
    if k == "aliphatic":
        return lambda p: not p.aromatic
    if k == "aromatic":
        return lambda p: p.aromatic
    if k == "elem":
        z, arom = v
        return lambda p: p.atomic_number == z and p.aromatic == arom
    if k == "atomic_number":
        return lambda p: p.atomic_number == v
    if k == "degree":
        return lambda p: p.degree == v
    if k == "hcount":
        return lambda p: p.total_h == v
    if k == "connectivity":
        return lambda p: p.connectivity == v
    if k == "ring":
        return lambda p: p.in_ring == v
    if k == "charge":
        return lambda p: p.charge == v
    raise MalformedExpression(f"unknown primitive kind {k!r}")


def _compile_atom(expr: Expr) -> Callable[[AtomProps], bool]:
    if isinstance(expr, Prim):
        return _prim_atom(expr)
    if isinstance(expr, Not):
        f = _compile_atom(expr.arg)
        return lambda p: not f(p)
    fs = tuple(_compile_atom(e) for e in expr.args)
    if isinstance(expr, And):
        return lambda p: all(f(p) for f in fs)
    return lambda p: any(f(p) for f in fs)


def _bond_set(expr: Expr) -> frozenset[str]:
    return frozenset(o for o in ("single", "double", "triple", "aromatic") if eval_bond(expr, o))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------
_ORGANIC_BARE = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_AROMATIC_BARE = ("b", "c", "n", "o", "p", "s")
_AROMATIC_BRACKET = ("se", "as", "b", "c", "n", "o", "p", "s")
_BOND_CHARS = {"-": "single", "=": "double", "#": "triple", ":": "aromatic"}


class _Reader:
    def __init__(self, text: str, start: int = 0, end: int | None = None) -> None:
        self.text = text
        self.pos = start
        self.end = len(text) if end is None else end

    def peek(self, offset: int = 0) -> str:
        p = self.pos + offset
        return self.text[p] if p < self.end else ""

    def at_end(self) -> bool:
        return self.pos >= self.end

    def number(self) -> int | None:
        start = self.pos
        while self.pos < self.end and self.text[self.pos].isdigit():
            self.pos += 1
        return int(self.text[start:self.pos]) if self.pos > start else None

    def malformed(self, msg: str) -> MalformedExpression:
        return MalformedExpression(f"{msg} at position {self.pos} in {self.text!r}")


def _parse_logic(r: _Reader, primitive: Callable[[_Reader], Expr], stop: str) -> Expr:
    """Precedence-climbing over ``; , & !`` with juxtaposition as ``&``."""

    def at_stop() -> bool:
        return r.at_end() or r.peek() in stop

    def unary() -> Expr:
        if r.peek() == "!":
            r.pos += 1
            return Not(unary())
        if at_stop() or r.peek() in ";,&":
            raise r.malformed("expected a primitive")
        return primitive(r)

    def high_and() -> Expr:
        items = [unary()]
        while not at_stop() and r.peek() not in ";,":
            if r.peek() == "&":
                r.pos += 1
            items.append(unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def disjunction() -> Expr:
        items = [high_and()]
        while r.peek() == ",":
            r.pos += 1
            items.append(high_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def low_and() -> Expr:
        items = [disjunction()]
        while r.peek() == ";":
            r.pos += 1
            items.append(disjunction())
        return items[0] if len(items) == 1 else And(tuple(items))

    return low_and()


def _bracket_primitive(r: _Reader) -> Expr:
    ch, nxt = r.peek(), r.peek(1)
    if ch == "$":
        raise UnsupportedPrimitive("$(", "recursive SMARTS '$(...)' is not supported")
    if ch == "*":
        r.pos += 1
        return ANY_ATOM
    if ch == "#":
        r.pos += 1
        n = r.number()
        if n is None:
            raise r.malformed("'#' needs an atomic number")
        return Prim("atomic_number", n)
    if ch in "+-":
        r.pos += 1
        unit = 1 if ch == "+" else -1
        n = r.number()
        if n is not None:
            return Prim("charge", unit * n)
        total = unit
        while r.peek() == ch:
            r.pos += 1
            total += unit
        return Prim("charge", total)
    if ch.isupper():
        two = ch + nxt
        if nxt.islower() and two in ATOMIC_NUMBER:
            r.pos += 2
            return Prim("elem", (ATOMIC_NUMBER[two], False))
        if ch in "DHX":
            r.pos += 1
            n = r.number()
            kind = {"D": "degree", "H": "hcount", "X": "connectivity"}[ch]
            return Prim(kind, 1 if n is None else n)
        if ch == "R":
            r.pos += 1
            n = r.number()
            if n is None:
                return Prim("ring", True)
            if n == 0:
                return Prim("ring", False)
            raise UnsupportedPrimitive(f"R{n}", f"ring-count primitive 'R{n}' is not supported")
        if ch == "A":
            r.pos += 1
            return Prim("aliphatic")
        if ch in ATOMIC_NUMBER:
            r.pos += 1
            return Prim("elem", (ATOMIC_NUMBER[ch], False))
        raise UnsupportedPrimitive(ch)
    if ch.islower():
        for sym in _AROMATIC_BRACKET:
            if r.text.startswith(sym, r.pos) and r.pos + len(sym) <= r.end:
                r.pos += len(sym)
                return Prim("elem", (ATOMIC_NUMBER[sym.capitalize()], True))
        if ch == "a":
            r.pos += 1
            return Prim("aromatic")
        raise UnsupportedPrimitive(ch)
    if ch.isdigit():
        raise UnsupportedPrimitive(ch, "isotope primitives are not supported")
    if ch in "@":
        raise UnsupportedPrimitive(ch, "chirality primitives are not supported")
    raise UnsupportedPrimitive(ch)


def _bond_primitive(r: _Reader) -> Expr:
    ch = r.peek()
    if ch in _BOND_CHARS:
        r.pos += 1
        return Prim("bond", _BOND_CHARS[ch])
    if ch == "~":
        r.pos += 1
        return Prim("anybond")
    raise UnsupportedPrimitive(ch, f"bond primitive {ch!r} is not supported")


def _bare_atom(r: _Reader) -> Expr:
    ch = r.peek()
    if ch == "*":
        r.pos += 1
        return ANY_ATOM
    for sym in _ORGANIC_BARE:
        if r.text.startswith(sym, r.pos):
            r.pos += len(sym)
            return Prim("elem", (ATOMIC_NUMBER[sym], False))
    for sym in _AROMATIC_BARE:
        if ch == sym:
            r.pos += 1
            return Prim("elem", (ATOMIC_NUMBER[sym.upper()], True))
    if ch == "A":
        r.pos += 1
        return Prim("aliphatic")
    if ch == "a":
        r.pos += 1
        return Prim("aromatic")
    raise r.malformed(f"unexpected character {ch!r}")


@dataclass(frozen=True)
class SmartsPattern:
    atoms: tuple[Expr, ...]
    bonds: tuple[tuple[int, int, Expr], ...]
    source: str
    name: str = ""

    @cached_property
    def atom_tests(self) -> tuple[Callable[[AtomProps], bool], ...]:
        return tuple(_compile_atom(e) for e in self.atoms)

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, frozenset[str]], ...], ...]:
        """Per pattern atom, ``(neighbor, allowed bond orders)`` pairs."""
        adj: list[list[tuple[int, frozenset[str]]]] = [[] for _ in self.atoms]
        for i, j, e in self.bonds:
            allowed = _bond_set(e)
            adj[i].append((j, allowed))
            adj[j].append((i, allowed))
        return tuple(tuple(a) for a in adj)


_BOND_START = set(_BOND_CHARS) | {"~", "!", "@", "/", "\\"}


def parse_smarts(text: str, name: str = "") -> SmartsPattern:
    """Parse a SMARTS string in the supported subset.

    Raises:
        UnsupportedPrimitive: valid SMARTS outside the subset (names the token).
        MalformedExpression: syntax errors.
    """
    if not isinstance(text, str) or not text.strip():
        raise MalformedExpression("SMARTS must be a non-empty string")
    r = _Reader(text)
    atoms: list[Expr] = []
    bonds: dict[tuple[int, int], Expr] = {}
    stack: list[int] = []
    rings: dict[int, tuple[int, Expr | None]] = {}
    prev: int | None = None
    pending: Expr | None = None

    def add_bond(i: int, j: int, e: Expr) -> None:
        key = (min(i, j), max(i, j))
        if i == j or key in bonds:
            raise r.malformed("duplicate or self bond")
        bonds[key] = e

    while not r.at_end():
        ch = r.peek()
        if ch == "(":
            if prev is None or pending is not None or text[r.pos - 1] == "(":
                raise r.malformed("misplaced '('")
            stack.append(prev)
            r.pos += 1
        elif ch == ")":
            if not stack or pending is not None:
                raise r.malformed("unbalanced ')'")
            prev = stack.pop()
            r.pos += 1
        elif ch == ".":
            raise UnsupportedPrimitive(".", "disconnected SMARTS patterns ('.') are not supported")
        elif ch in _BOND_START:
            if prev is None or pending is not None:
                raise r.malformed(f"misplaced bond {ch!r}")
            end = r.pos
            while end < r.end and r.text[end] in "-=#:~!&,;@/\\":
                end += 1
            sub = _Reader(text, r.pos, end)
            pending = _parse_logic(sub, _bond_primitive, "")
            r.pos = end
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise r.malformed("ring closure without an atom")
            r.pos += 1
            if ch == "%":
                d = r.peek() + r.peek(1)
                if not (len(d) == 2 and d.isdigit()):
                    raise r.malformed("'%' needs two digits")
                r.pos += 2
                label = int(d)
            else:
                label = int(ch)
            if label in rings:
                other, e = rings.pop(label)
                add_bond(other, prev, pending or e or DEFAULT_BOND)
            else:
                rings[label] = (prev, pending)
            pending = None
        else:
            if ch == "[":
                close = text.find("]", r.pos)
                if close < 0:
                    raise r.malformed("unterminated '['")
                sub = _Reader(text, r.pos + 1, close)
                if sub.at_end():
                    raise r.malformed("empty bracket atom")
                expr = _parse_logic(sub, _bracket_primitive, "")
                if not sub.at_end():
                    raise sub.malformed("trailing characters in bracket atom")
                r.pos = close + 1
            else:
                expr = _bare_atom(r)
            idx = len(atoms)
            atoms.append(expr)
            if prev is not None:
                add_bond(prev, idx, pending or DEFAULT_BOND)
            pending = None
            prev = idx

    if rings:
        raise MalformedExpression(f"unclosed ring bond(s) {sorted(rings)} in {text!r}")
    if stack:
        raise MalformedExpression(f"unclosed '(' in {text!r}")
    if pending is not None:
        raise MalformedExpression(f"dangling bond in {text!r}")
    if not atoms:
        raise MalformedExpression(f"no atoms in {text!r}")
    bond_list = tuple((i, j, e) for (i, j), e in sorted(bonds.items()))
    return SmartsPattern(tuple(atoms), bond_list, text, name)


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------
def _search_order(pattern: SmartsPattern, cands: list[list[int]]) -> tuple[list[int], list[int | None]]:
    """DFS order over pattern atoms, rooted at the one with fewest candidates."""
    n = len(pattern.atoms)
    adj = pattern.adjacency
    root = min(range(n), key=lambda i: (len(cands[i]), i))
    order: list[int] = []
    parent: list[int | None] = [None] * n
    seen = [False] * n
    stack = [(root, None)]
    while stack:
        v, par = stack.pop()
        if seen[v]:
            continue
        seen[v] = True
        parent[v] = par
        order.append(v)
        nbrs = sorted((w for w, _ in adj[v] if not seen[w]), key=lambda w: (len(cands[w]), w), reverse=True)
        stack.extend((w, v) for w in nbrs)
    if len(order) != n:
        raise SmartsError(f"pattern {pattern.source!r} is not connected")
    return order, parent


def match_pattern(molecule: Molecule, pattern: SmartsPattern, props: Sequence[AtomProps] | None = None) -> list[tuple[int, ...]]:
    """All embeddings of ``pattern`` in ``molecule``, one per matched atom set.

    Each tuple maps pattern atom ``i`` to molecule atom ``t[i]``. Mappings
    covering the same set of molecule atoms collapse to the lexicographically
    smallest tuple; results are ordered by the sorted atom-index set.
    """
    if props is None:
        props = atom_props(molecule)
    tests = pattern.atom_tests
    n_pat = len(tests)
    cands = [[a for a, p in enumerate(props) if test(p)] for test in tests]
    if any(not c for c in cands):
        return []
    cand_sets = [set(c) for c in cands]
    order, parent = _search_order(pattern, cands)
    padj = pattern.adjacency
    nbrs = molecule.neighbors
    bond_of = molecule.bond_lookup
    mapping = [-1] * n_pat
    used: set[int] = set()
    found: dict[frozenset[int], tuple[int, ...]] = {}

    def extend(depth: int) -> None:
        if depth == n_pat:
            tup = tuple(mapping)
            key = frozenset(tup)
            best = found.get(key)
            if best is None or tup < best:
                found[key] = tup
            return
        p = order[depth]
        par = parent[p]
        pool = cands[p] if par is None else [w for w, _ in nbrs[mapping[par]]]
        for a in pool:
            if a in used or a not in cand_sets[p]:
                continue
            ok = True
            for q, allowed in padj[p]:
                m = mapping[q]
                if m >= 0:
                    o = bond_of.get((a, m))
                    if o is None or o not in allowed:
                        ok = False
                        break
            if not ok:
                continue
            mapping[p] = a
            used.add(a)
            extend(depth + 1)
            used.discard(a)
            mapping[p] = -1

    extend(0)
    return sorted(found.values(), key=lambda t: tuple(sorted(t)))


# ---------------------------------------------------------------------------
# libraries and features
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FunctionalGroupLibrary:
    entries: tuple[tuple[str, SmartsPattern], ...]
    version_tag: str

    def __post_init__(self) -> None:
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate FG names: {dup}")
        for n in names:
            if not n or any(c in n for c in '"\t\n\r'):
                raise ValueError(f"invalid FG name {n!r}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    @cached_property
    def index_of(self) -> dict[str, int]:
        return {n: i for i, (n, _) in enumerate(self.entries)}

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], version_tag: str | None = None) -> "FunctionalGroupLibrary":
        pairs = list(pairs)
        entries = tuple((name, parse_smarts(smarts, name)) for name, smarts in pairs)
        if version_tag is None:
            version_tag = "fg-" + short_digest("\n".join(f"{n}\t{s}" for n, s in pairs))
        return cls(entries, version_tag)


def load_library(path: str | Path) -> FunctionalGroupLibrary:
    """Read a ``name<TAB>smarts`` TSV; ``#`` lines and blank lines are skipped."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_library_text(text, source=str(path))


def parse_library_text(text: str, source: str = "<string>") -> FunctionalGroupLibrary:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise ValueError(f"{source}:{lineno}: expected 'name<TAB>smarts'")
        name, smarts = cols[0].strip(), cols[1].strip()
        try:
            parse_smarts(smarts, name)
        except UnsupportedPrimitive:
            raise
        except SmartsError as exc:
            raise MalformedExpression(f"{source}:{lineno}: {exc}") from exc
        pairs.append((name, smarts))
    return FunctionalGroupLibrary.from_pairs(pairs)


def default_library() -> FunctionalGroupLibrary:
    """The curated functional-group library bundled with the package."""
    text = resources.files("treekd.data").joinpath("functional_groups.tsv").read_text(encoding="utf-8")
    return parse_library_text(text, source="functional_groups.tsv")


@dataclass(frozen=True)
class FeatureVector:
    """Sparse functional-group occurrence counts."""

    counts: dict[int, int]
    dimension: int
    library_tag: str = ""

    def __post_init__(self) -> None:
        for i, c in self.counts.items():
            if not 0 <= i < self.dimension:
                raise DimensionMismatch(f"feature index {i} outside dimension {self.dimension}")
            if c < 1:
                raise ValueError(f"stored count must be >= 1, got {c} at {i}")

    def __getitem__(self, i: int) -> int:
        return self.counts.get(i, 0)

    def to_dense(self) -> list[int]:
        out = [0] * self.dimension
        for i, c in self.counts.items():
            out[i] = c
        return out

    def to_json(self) -> dict[str, int]:
        return {str(i): c for i, c in sorted(self.counts.items())}

    @classmethod
    def from_json(cls, data: dict[str, int], dimension: int, library_tag: str = "") -> "FeatureVector":
        return cls({int(k): int(v) for k, v in data.items()}, dimension, library_tag)


def extract_features(molecule: Molecule, library: FunctionalGroupLibrary) -> FeatureVector:
    props = atom_props(molecule)
    counts = {}
    for i, (_, pat) in enumerate(library.entries):
        n = len(match_pattern(molecule, pat, props))
        if n:
            counts[i] = n
    return FeatureVector(counts, len(library), library.version_tag)


def found_fg_names(vector: FeatureVector, library: FunctionalGroupLibrary) -> list[tuple[str, int]]:
    if vector.dimension != len(library):
        raise DimensionMismatch(
            f"vector dimension {vector.dimension} != library size {len(library)}"
        )
    return [(library.entries[i][0], c) for i, c in sorted(vector.counts.items())]


def write_features_jsonl(rows: Iterable[tuple[str, FeatureVector]], path: str | Path, ids: Iterable[int] | None = None) -> int:
    """Write ``{"smiles", "features"}`` lines (plus ``"id"`` when given)."""
    n = 0
    id_iter = iter(ids) if ids is not None else None
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for smiles, vec in rows:
            obj: dict[str, object] = {}
            if id_iter is not None:
                obj["id"] = next(id_iter)
            obj["smiles"] = smiles
            obj["features"] = vec.to_json()
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_features_jsonl(path: str | Path, library: FunctionalGroupLibrary) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                obj["features"] = FeatureVector.from_json(obj["features"], len(library), library.version_tag)
                out.append(obj)
    return out

